#include "hmtc/spline.hpp"

#include <cmath>

namespace hmtc {

SplineBasisSpec SplineBasisSpec::equidistant(int degree, int n_knots, double lo, double hi) {
    SplineBasisSpec s;
    s.degree = degree;
    s.A = std::max(std::fabs(lo), std::fabs(hi));
    s.knots.resize(n_knots);
    for (int k = 0; k < n_knots; ++k) s.knots[k] = lo + (hi - lo) * (k + 1) / (n_knots + 1);
    s.validate();
    return s;
}

double truncated_power_basis(double x, const SplineBasisSpec& spec, int j) {
    if (j < 0 || j >= spec.size()) throw std::out_of_range("truncated_power_basis: index out of range");
    if (j <= spec.degree) {
        double p = 1.0;
        for (int t = 0; t < j; ++t) p *= x;
        return p;
    }
    const double u = spec.knots[static_cast<size_t>(j - spec.degree - 1)];
    const double base = x - u;
    if (base <= 0.0) return 0.0;
    double p = 1.0;
    for (int t = 0; t < spec.degree; ++t) p *= base;
    return p;
}

} // namespace hmtc
