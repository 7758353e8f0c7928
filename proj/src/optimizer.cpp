#include "hmtc/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "hmtc/gradients.hpp"

namespace hmtc {

void TrainConfig::validate() const {
    if (t_n < 0) throw std::invalid_argument("TrainConfig: t_n must be >= 0");
    if (c6 <= 0.0) throw std::invalid_argument("TrainConfig: c6 must be positive");
}

void LabeledDataset::validate() const {
    if (inputs.size() != labels.size()) throw std::invalid_argument("LabeledDataset: length mismatch");
    for (int y : labels)
        if (y != 1 && y != -1) throw std::invalid_argument("LabeledDataset: labels must be -1 or +1");
}

namespace {

// Per-sample truncated network outputs; column k holds T_beta(f_k(X_i)).
Matrix truncated_outputs(const std::vector<NetworkParams>& thetas, const LabeledDataset& data,
                         const ModelConfig& cfg) {
    Matrix out(static_cast<int>(data.size()), cfg.K);
    for (size_t i = 0; i < data.size(); ++i)
        for (int k = 0; k < cfg.K; ++k)
            out(static_cast<int>(i), k) = truncate(network_forward(data.inputs[i], thetas[k], cfg), cfg.beta);
    return out;
}

double loss_from_outputs(const Matrix& touts, const std::vector<double>& w, const LabeledDataset& data) {
    const int n = touts.rows();
    double s = 0.0;
    for (int i = 0; i < n; ++i) {
        const double f = dot(touts.row(i), w);
        s += logistic_loss(data.labels[i] * f);
    }
    return s / n;
}

std::vector<double> outer_grad_from_outputs(const Matrix& touts, const std::vector<double>& w,
                                            const LabeledDataset& data) {
    const int n = touts.rows();
    const int K = touts.cols();
    std::vector<double> g(K, 0.0);
    for (int i = 0; i < n; ++i) {
        const double f = dot(touts.row(i), w);
        const double c = logistic_loss_deriv(data.labels[i] * f) * data.labels[i];
        auto row = touts.row(i);
        for (int k = 0; k < K; ++k) g[k] += c * row[k];
    }
    for (int k = 0; k < K; ++k) g[k] /= n;
    return g;
}

} // namespace

double empirical_loss(const MixtureState& w, const std::vector<NetworkParams>& thetas, const LabeledDataset& data,
                      const ModelConfig& cfg) {
    data.validate();
    if (data.size() == 0) throw std::invalid_argument("empirical_loss: empty dataset");
    double s = 0.0;
    for (size_t i = 0; i < data.size(); ++i)
        s += logistic_loss(data.labels[i] * mixture_forward(data.inputs[i], w, thetas, cfg));
    return s / static_cast<double>(data.size());
}

std::vector<double> grad_outer(const MixtureState& w, const std::vector<NetworkParams>& thetas,
                               const LabeledDataset& data, const ModelConfig& cfg) {
    data.validate();
    Matrix touts = truncated_outputs(thetas, data, cfg);
    return outer_grad_from_outputs(touts, w.w, data);
}

std::vector<NetworkParams> grad_inner(const MixtureState& w, const std::vector<NetworkParams>& thetas,
                                      const LabeledDataset& data, const ModelConfig& cfg,
                                      const std::vector<NetworkMask>& masks) {
    data.validate();
    const int n = static_cast<int>(data.size());
    std::vector<NetworkParams> grads;
    grads.reserve(cfg.K);
    for (int k = 0; k < cfg.K; ++k) grads.push_back(make_zero_network(cfg));

    std::vector<ForwardTrace> traces(cfg.K);
    std::vector<double> touts(cfg.K);
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < cfg.K; ++k) {
            network_forward_traced(data.inputs[i], thetas[k], cfg, traces[k]);
            touts[k] = truncate(traces[k].output, cfg.beta);
        }
        double f = 0.0;
        for (int k = 0; k < cfg.K; ++k) f += w.w[k] * touts[k];
        const double c = logistic_loss_deriv(data.labels[i] * f) * data.labels[i] / n;
        for (int k = 0; k < cfg.K; ++k) {
            if (w.w[k] == 0.0) continue;
            // Frozen clamp: zero derivative on and outside the boundary.
            if (std::fabs(traces[k].output) >= cfg.beta) continue;
            NetworkParams g = network_backward(thetas[k], cfg, traces[k], c * w.w[k]);
            axpy(grads[k], 1.0, g);
        }
    }
    for (int k = 0; k < cfg.K; ++k) apply_mask_in_place(grads[k], masks[k]);
    return grads;
}

MixtureState project_outer(std::vector<double> w_raw) {
    for (double v : w_raw)
        if (!std::isfinite(v)) throw std::invalid_argument("project_outer: non-finite input");
    std::vector<double> w = w_raw;
    for (double& v : w) v = std::max(v, 0.0);
    double sum = std::accumulate(w.begin(), w.end(), 0.0);
    if (sum <= 1.0) return {std::move(w)};

    // Sort-and-threshold projection onto the simplex {w >= 0, sum w = 1},
    // applied to the raw point (standard KKT argument: when the sum
    // constraint is active the orthant clip is absorbed by the threshold).
    std::vector<double> u = w_raw;
    std::sort(u.begin(), u.end(), std::greater<double>());
    double cumsum = 0.0;
    double theta = 0.0;
    for (size_t j = 0; j < u.size(); ++j) {
        cumsum += u[j];
        const double cand = (cumsum - 1.0) / static_cast<double>(j + 1);
        if (u[j] - cand > 0.0) theta = cand;
    }
    for (size_t i = 0; i < w.size(); ++i) w[i] = std::max(w_raw[i] - theta, 0.0);
    return {std::move(w)};
}

namespace {

double masked_delta_norm_sq(const std::vector<NetworkParams>& thetas, const std::vector<NetworkParams>& thetas0) {
    double ssq = 0.0;
    for (size_t k = 0; k < thetas.size(); ++k) {
        std::vector<double> flat0;
        for_each_param(thetas0[k], [&](double v) { flat0.push_back(v); });
        size_t i = 0;
        for_each_param(thetas[k], [&](double v) {
            const double d = v - flat0[i++];
            ssq += d * d;
        });
    }
    return ssq;
}

} // namespace

std::vector<NetworkParams> project_inner(const std::vector<NetworkParams>& thetas,
                                         const std::vector<NetworkParams>& thetas0,
                                         const std::vector<NetworkMask>& masks, double c6) {
    if (thetas.size() != thetas0.size() || thetas.size() != masks.size())
        throw std::invalid_argument("project_inner: K mismatch");
    // Off-mask coordinates are pinned to their (zero) initial values first, so
    // the ball is taken over the trainable coordinates only.
    std::vector<NetworkParams> out = thetas;
    for (size_t k = 0; k < out.size(); ++k) apply_mask_in_place(out[k], masks[k]);

    const double ssq = masked_delta_norm_sq(out, thetas0);
    if (ssq <= c6 * c6) return out;
    const double scale = c6 / std::sqrt(ssq);
    for (size_t k = 0; k < out.size(); ++k) {
        std::vector<double> flat0;
        for_each_param(thetas0[k], [&](double v) { flat0.push_back(v); });
        size_t i = 0;
        for_each_param(out[k], [&](double& v) {
            const double base = flat0[i++];
            v = base + scale * (v - base);
        });
    }
    return out;
}

TrainedModel train(const LabeledDataset& data, const ModelConfig& cfg, const InitConfig& icfg,
                   const TrainConfig& tcfg, std::uint64_t seed) {
    cfg.validate();
    tcfg.validate();
    data.validate();

    InitConfig ic = icfg;
    ic.seed = seed;

    TrainedModel model;
    model.thetas_init.reserve(cfg.K);
    model.masks.reserve(cfg.K);
    for (int k = 0; k < cfg.K; ++k) {
        auto [p, m] = init_network(cfg, ic, static_cast<std::uint64_t>(k));
        model.thetas_init.push_back(std::move(p));
        model.masks.push_back(std::move(m));
    }

    std::vector<double> w(cfg.K, 0.0);
    std::vector<NetworkParams> thetas = model.thetas_init;
    const double lambda = tcfg.lambda();
    const bool outer_only = tcfg.mode == TrainConfig::Mode::outer_only;

    // In outer-only mode the inner weights never move, so the per-sample
    // truncated outputs are fixed and each step costs O(n K).
    Matrix touts;
    if (outer_only) touts = truncated_outputs(thetas, data, cfg);

    auto current_loss = [&]() {
        if (outer_only) return loss_from_outputs(touts, w, data);
        return empirical_loss(MixtureState{w}, thetas, data, cfg);
    };

    model.loss_trace.reserve(tcfg.t_n + 1);
    model.loss_trace.push_back(current_loss());
    model.t_hat = 0;
    MixtureState best_w{w};
    std::vector<NetworkParams> best_thetas = thetas;

    for (int t = 0; t < tcfg.t_n; ++t) {
        std::vector<double> gw =
            outer_only ? outer_grad_from_outputs(touts, w, data)
                       : grad_outer(MixtureState{w}, thetas, data, cfg);
        std::vector<NetworkParams> gtheta;
        if (!outer_only) gtheta = grad_inner(MixtureState{w}, thetas, data, cfg, model.masks);

        for (int k = 0; k < cfg.K; ++k) w[k] -= lambda * gw[k];
        w = project_outer(std::move(w)).w;

        if (!outer_only) {
            for (int k = 0; k < cfg.K; ++k) axpy(thetas[k], -lambda, gtheta[k]);
            thetas = project_inner(thetas, model.thetas_init, model.masks, tcfg.c6);
        }

        model.loss_trace.push_back(current_loss());
        if (model.loss_trace.back() < model.loss_trace[model.t_hat]) {
            model.t_hat = t + 1;
            best_w.w = w;
            if (!outer_only) best_thetas = thetas;
        }
    }

    model.w_hat = std::move(best_w);
    model.thetas_hat = outer_only ? model.thetas_init : std::move(best_thetas);
    return model;
}

double ConvexToyProblem::value(const std::vector<double>& u, int t) const {
    double s = drift.at(static_cast<size_t>(t));
    for (size_t i = 0; i < q.size(); ++i) {
        const double d = u[i] - center[i];
        s += q[i] * d * d;
    }
    return s;
}

std::vector<double> ConvexToyProblem::gradient(const std::vector<double>& u) const {
    std::vector<double> g(q.size());
    for (size_t i = 0; i < q.size(); ++i) g[i] = 2.0 * q[i] * (u[i] - center[i]);
    return g;
}

double ConvexToyProblem::grad_bound() const {
    // ||grad||^2 = sum (2 q_i (u_i - c_i))^2 <= (2 max q)^2 (radius + ||c||)^2.
    double qmax = 0.0;
    for (double v : q) qmax = std::max(qmax, v);
    return 2.0 * qmax * (radius + norm2(center));
}

void ConvexToyProblem::validate() const {
    if (q.empty() || q.size() != center.size() || q.size() != u0.size() || q.size() != u_star.size())
        throw std::invalid_argument("ConvexToyProblem: dimension mismatch");
    for (double v : q)
        if (v <= 0.0) throw std::invalid_argument("ConvexToyProblem: q must be positive");
    for (double v : drift)
        if (!std::isfinite(v)) throw std::invalid_argument("ConvexToyProblem: non-finite drift");
    if (static_cast<int>(drift.size()) != t_n + 1)
        throw std::invalid_argument("ConvexToyProblem: drift must have t_n + 1 entries");
    if (t_n < 1) throw std::invalid_argument("ConvexToyProblem: t_n >= 1 required");
    if (norm2(u0) > radius + 1e-12 || norm2(u_star) > radius + 1e-12)
        throw std::invalid_argument("ConvexToyProblem: u0 and u_star must be feasible");
}

GdBoundReport gd_convex_bound_check(const ConvexToyProblem& toy) {
    toy.validate();
    const double lambda = 1.0 / toy.t_n;
    const double dn = toy.grad_bound();

    auto project_ball = [&](std::vector<double> u) {
        const double r = norm2(u);
        if (r > toy.radius)
            for (double& v : u) v *= toy.radius / r;
        return u;
    };

    std::vector<double> u = toy.u0;
    double lhs = toy.value(u, 0);
    for (int t = 0; t < toy.t_n; ++t) {
        std::vector<double> g = toy.gradient(u);
        for (size_t i = 0; i < u.size(); ++i) u[i] -= lambda * g[i];
        u = project_ball(std::move(u));
        lhs = std::min(lhs, toy.value(u, t + 1));
    }

    double drift_sum = 0.0;
    for (int t = 1; t <= toy.t_n; ++t) drift_sum += std::fabs(toy.value(toy.u_star, t) - toy.value(toy.u_star, 0));

    std::vector<double> diff(toy.u0.size());
    for (size_t i = 0; i < diff.size(); ++i) diff[i] = toy.u_star[i] - toy.u0[i];

    GdBoundReport rep;
    rep.lhs = lhs;
    rep.rhs = toy.value(toy.u_star, 0) + drift_sum / toy.t_n + dot(diff, diff) / 2.0 + dn * dn / (2.0 * toy.t_n);
    rep.slack = rep.rhs - rep.lhs;
    rep.holds = rep.slack >= -1e-12;
    return rep;
}

} // namespace hmtc
