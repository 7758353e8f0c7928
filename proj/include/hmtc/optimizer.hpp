#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hmtc/config.hpp"
#include "hmtc/forward.hpp"
#include "hmtc/loss.hpp"
#include "hmtc/mask.hpp"

namespace hmtc {

struct TrainConfig {
    int t_n = 500;        // gradient descent steps; step size is 1/t_n
    double c6 = 0.5;      // inner-ball radius
    enum class Mode { full, outer_only } mode = Mode::full;
    int n = 0;            // nominal sample size (0 = take it from the data)

    double lambda() const { return t_n >= 1 ? 1.0 / t_n : 0.0; }
    void validate() const;
};

struct LabeledDataset {
    std::vector<Matrix> inputs; // each d x l
    std::vector<int> labels;    // in {-1, +1}
    double bound_A = 1.0;       // inputs live in [-A, A]^{d*l}

    std::size_t size() const { return inputs.size(); }
    void validate() const;
};

struct TrainedModel {
    MixtureState w_hat;
    std::vector<NetworkParams> thetas_hat;
    int t_hat = 0;
    std::vector<double> loss_trace; // F_n at t = 0 .. t_n

    // Carried along for serialization and downstream studies.
    std::vector<NetworkParams> thetas_init;
    std::vector<NetworkMask> masks;
};

double empirical_loss(const MixtureState& w, const std::vector<NetworkParams>& thetas, const LabeledDataset& data,
                      const ModelConfig& cfg);

// Exact gradient of the empirical loss in the outer weights:
// (1/n) sum_i phi'(Y_i f(X_i)) * Y_i * T_beta(f_k(X_i)).
std::vector<double> grad_outer(const MixtureState& w, const std::vector<NetworkParams>& thetas,
                               const LabeledDataset& data, const ModelConfig& cfg);

// Reverse-mode gradient in the inner weights with frozen selections;
// entries outside the masks are forced to zero.
std::vector<NetworkParams> grad_inner(const MixtureState& w, const std::vector<NetworkParams>& thetas,
                                      const LabeledDataset& data, const ModelConfig& cfg,
                                      const std::vector<NetworkMask>& masks);

// Exact Euclidean projection onto { w >= 0, sum w <= 1 }: clip to the
// nonnegative orthant; if the clipped sum exceeds one, project onto the
// simplex by sort-and-threshold.
MixtureState project_outer(std::vector<double> w_raw);

// Euclidean projection onto the ball of radius c6 around theta0, taken over
// all trainable coordinates of all K networks as one flat vector.
std::vector<NetworkParams> project_inner(const std::vector<NetworkParams>& thetas,
                                         const std::vector<NetworkParams>& thetas0,
                                         const std::vector<NetworkMask>& masks, double c6);

TrainedModel train(const LabeledDataset& data, const ModelConfig& cfg, const InitConfig& icfg,
                   const TrainConfig& tcfg, std::uint64_t seed);

// Convex toy for the projected-gradient-descent bound. F(u, v_t) =
// sum_i q_i (u_i - c_i)^2 + drift_t with A the Euclidean ball of the given
// radius; the drift only moves function values, not the u-gradient.
struct ConvexToyProblem {
    std::vector<double> q;      // positive curvature per coordinate
    std::vector<double> center;
    std::vector<double> drift;  // length t_n + 1 (value added at step t)
    std::vector<double> u0;     // feasible start
    std::vector<double> u_star; // feasible comparison point
    double radius = 1.0;
    int t_n = 10;

    double value(const std::vector<double>& u, int t) const;
    std::vector<double> gradient(const std::vector<double>& u) const;
    double grad_bound() const; // sup of ||grad|| over the ball
    void validate() const;
};

struct GdBoundReport {
    double lhs = 0.0;   // min_t F(u_t, v_t)
    double rhs = 0.0;   // bound of the lemma
    double slack = 0.0; // rhs - lhs
    bool holds = false;
};

GdBoundReport gd_convex_bound_check(const ConvexToyProblem& toy);

} // namespace hmtc
