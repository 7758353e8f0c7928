#pragma once

#include <stdexcept>
#include <vector>

namespace hmtc {

// Truncated power basis on [-A, A]: B_j(x) = x^j for j = 0..M and
// B_j(x) = (x - u_{j-M})_+^M for j = M+1 .. M+K-1, with strictly increasing
// knots u_1 < ... < u_{K-1}.
struct SplineBasisSpec {
    int degree = 1;            // M
    std::vector<double> knots; // u_1 .. u_{K-1}
    double A = 1.0;            // domain half-width

    int size() const { return degree + static_cast<int>(knots.size()) + 1; }

    void validate() const {
        if (degree < 0) throw std::invalid_argument("SplineBasisSpec: degree must be >= 0");
        if (A <= 0.0) throw std::invalid_argument("SplineBasisSpec: A must be positive");
        for (size_t i = 0; i + 1 < knots.size(); ++i)
            if (!(knots[i] < knots[i + 1]))
                throw std::invalid_argument("SplineBasisSpec: knots must be strictly increasing");
        if (size() < 1) throw std::invalid_argument("SplineBasisSpec: empty basis");
    }

    // Equidistant interior knots on [lo, hi].
    static SplineBasisSpec equidistant(int degree, int n_knots, double lo, double hi);
};

double truncated_power_basis(double x, const SplineBasisSpec& spec, int j);

} // namespace hmtc
