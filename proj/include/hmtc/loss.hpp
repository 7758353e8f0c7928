#pragma once

#include <cmath>

namespace hmtc {

// Logistic loss log(1 + exp(-z)), evaluated without overflow.
inline double logistic_loss(double z) {
    if (z >= 0.0) return std::log1p(std::exp(-z));
    return -z + std::log1p(std::exp(z));
}

// d/dz log(1 + exp(-z)) = -1 / (1 + exp(z)). Saturates cleanly: exp overflow
// gives -0 on the right tail and -1 on the left.
inline double logistic_loss_deriv(double z) { return -1.0 / (1.0 + std::exp(z)); }

} // namespace hmtc
