#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "hmtc/hierarchical.hpp"
#include "hmtc/matrix.hpp"

namespace hmtc {

// Validation grid description: per-dimension sample counts over a box.
struct GridSpec {
    std::vector<int> counts;
    std::vector<double> lo, hi;

    void validate() const;
    std::size_t total() const;
    std::vector<double> point(std::size_t flat_index) const;
};

// Central finite differences, coordinate by coordinate.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> p, double step);

// Exact projection onto { w >= 0, sum w <= 1 } by exhaustive active-set
// enumeration; dimensions above 6 are refused (2^dim candidates).
std::vector<double> qp_projection_sub_simplex(std::span<const double> point);

// Closed-form projection onto the Euclidean ball.
std::vector<double> qp_projection_ball(std::span<const double> point, std::span<const double> center, double radius);

struct McEstimate {
    double value = 0.0;
    double std_err = 0.0;
};

using PosteriorFn = std::function<double(std::span<const double>)>; // m(x) in [0, 1]
using DecisionFn = std::function<int(std::span<const double>)>;    // label in {-1, +1}

// Monte-Carlo estimate of E[min(m(X), 1-m(X))] with X uniform on
// [-A, A]^dim. Deterministic given the seed; the sum is chunked with
// per-chunk sub-streams so the result is independent of threading.
McEstimate bayes_risk_mc(const PosteriorFn& m, int dim, double A, int n_mc, std::uint64_t seed);

// Monte-Carlo estimate of P{eta(X) != Y} - Bayes risk using the known m:
// the per-point excess is |2 m(x) - 1| exactly when eta disagrees with the
// Bayes rule, zero otherwise.
McEstimate excess_misclassification(const DecisionFn& eta, const PosteriorFn& m, int dim, double A, int n_mc,
                                    std::uint64_t seed);

// Monte-Carlo estimate of E[phi(Y f(X))] - E[phi(Y f*(X))], the logistic
// surrogate excess, evaluated white-box: the integrand is
// m phi(f) + (1-m) phi(-f) minus the binary entropy of m.
McEstimate surrogate_excess(const std::function<double(std::span<const double>)>& f, const PosteriorFn& m, int dim,
                            double A, int n_mc, std::uint64_t seed);

} // namespace hmtc
