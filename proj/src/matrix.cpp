#include "hmtc/matrix.hpp"

namespace hmtc {

std::vector<double> least_squares(const Matrix& a, const std::vector<double>& b) {
    const int m = a.rows();
    const int n = a.cols();
    if (static_cast<int>(b.size()) != m) throw std::invalid_argument("least_squares: rhs size mismatch");
    if (m < n) throw std::invalid_argument("least_squares: underdetermined system");

    Matrix r = a;
    std::vector<double> y = b;

    // Householder triangularization, column by column.
    for (int k = 0; k < n; ++k) {
        double alpha = 0.0;
        for (int i = k; i < m; ++i) alpha += r(i, k) * r(i, k);
        alpha = std::sqrt(alpha);
        if (alpha == 0.0) continue;
        if (r(k, k) > 0.0) alpha = -alpha;

        std::vector<double> v(m - k);
        v[0] = r(k, k) - alpha;
        for (int i = k + 1; i < m; ++i) v[i - k] = r(i, k);
        double vnorm2 = 0.0;
        for (double t : v) vnorm2 += t * t;
        if (vnorm2 == 0.0) continue;

        for (int j = k; j < n; ++j) {
            double s = 0.0;
            for (int i = k; i < m; ++i) s += v[i - k] * r(i, j);
            s *= 2.0 / vnorm2;
            for (int i = k; i < m; ++i) r(i, j) -= s * v[i - k];
        }
        double s = 0.0;
        for (int i = k; i < m; ++i) s += v[i - k] * y[i];
        s *= 2.0 / vnorm2;
        for (int i = k; i < m; ++i) y[i] -= s * v[i - k];
    }

    std::vector<double> x(n, 0.0);
    for (int i = n - 1; i >= 0; --i) {
        double s = y[i];
        for (int j = i + 1; j < n; ++j) s -= r(i, j) * x[j];
        const double d = r(i, i);
        x[i] = (d != 0.0) ? s / d : 0.0;
    }
    return x;
}

} // namespace hmtc
