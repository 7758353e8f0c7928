#include "hmtc/oracles.hpp"

#include <cmath>
#include <stdexcept>

#include "hmtc/loss.hpp"
#include "hmtc/rng.hpp"

namespace hmtc {

void GridSpec::validate() const {
    if (counts.empty() || counts.size() != lo.size() || counts.size() != hi.size())
        throw std::invalid_argument("GridSpec: dimension mismatch");
    for (size_t i = 0; i < counts.size(); ++i) {
        if (counts[i] < 2) throw std::invalid_argument("GridSpec: counts must be >= 2");
        if (!(lo[i] < hi[i]) || !std::isfinite(lo[i]) || !std::isfinite(hi[i]))
            throw std::invalid_argument("GridSpec: bad bounds");
    }
}

std::size_t GridSpec::total() const {
    std::size_t t = 1;
    for (int c : counts) t *= static_cast<std::size_t>(c);
    return t;
}

std::vector<double> GridSpec::point(std::size_t flat) const {
    std::vector<double> x(counts.size());
    for (size_t i = 0; i < counts.size(); ++i) {
        const std::size_t c = static_cast<std::size_t>(counts[i]);
        const std::size_t k = flat % c;
        flat /= c;
        x[i] = lo[i] + (hi[i] - lo[i]) * static_cast<double>(k) / static_cast<double>(c - 1);
    }
    return x;
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> p, double step) {
    if (step <= 0.0) throw std::invalid_argument("finite_diff_grad: step must be positive");
    std::vector<double> x(p.begin(), p.end());
    std::vector<double> g(p.size());
    for (size_t i = 0; i < p.size(); ++i) {
        const double saved = x[i];
        x[i] = saved + step;
        const double fp = f(x);
        x[i] = saved - step;
        const double fm = f(x);
        x[i] = saved;
        g[i] = (fp - fm) / (2.0 * step);
    }
    return g;
}

std::vector<double> qp_projection_sub_simplex(std::span<const double> point) {
    const int n = static_cast<int>(point.size());
    if (n > 6) throw std::invalid_argument("qp_projection_sub_simplex: dimension too large for enumeration");
    if (n == 0) return {};

    std::vector<double> best;
    double best_dist = 1e300;

    // Active sets: subset S of zeroed coordinates x (sum constraint active or
    // not). Each candidate that is feasible is a KKT point of some face; the
    // projection is the feasible candidate closest to the input.
    for (int mask = 0; mask < (1 << n); ++mask) {
        for (int sum_active = 0; sum_active <= 1; ++sum_active) {
            std::vector<double> w(n, 0.0);
            int free_count = 0;
            double free_sum = 0.0;
            for (int i = 0; i < n; ++i)
                if (!(mask & (1 << i))) {
                    ++free_count;
                    free_sum += point[i];
                }
            if (sum_active && free_count == 0) continue;
            const double mu = sum_active ? (1.0 - free_sum) / free_count : 0.0;
            for (int i = 0; i < n; ++i)
                if (!(mask & (1 << i))) w[i] = point[i] + mu;

            bool feasible = true;
            double sum = 0.0;
            for (int i = 0; i < n; ++i) {
                if (w[i] < -1e-15) feasible = false;
                sum += w[i];
            }
            if (sum > 1.0 + 1e-12) feasible = false;
            if (!feasible) continue;
            for (double& v : w) v = std::max(v, 0.0);

            double dist = 0.0;
            for (int i = 0; i < n; ++i) dist += (w[i] - point[i]) * (w[i] - point[i]);
            if (dist < best_dist) {
                best_dist = dist;
                best = w;
            }
        }
    }
    return best;
}

std::vector<double> qp_projection_ball(std::span<const double> point, std::span<const double> center, double radius) {
    if (point.size() != center.size()) throw std::invalid_argument("qp_projection_ball: dimension mismatch");
    std::vector<double> d(point.size());
    for (size_t i = 0; i < point.size(); ++i) d[i] = point[i] - center[i];
    const double r = norm2(d);
    std::vector<double> out(point.begin(), point.end());
    if (r > radius) {
        const double s = radius / r;
        for (size_t i = 0; i < out.size(); ++i) out[i] = center[i] + s * d[i];
    }
    return out;
}

namespace {

// Deterministic chunked Monte Carlo: chunk c uses sub-stream (seed, c), and
// chunk sums are combined in chunk order, so results do not depend on how
// the work is scheduled.
constexpr int kMcChunk = 1024;

McEstimate mc_mean(const std::function<double(RngStream&)>& sample_one, int n_mc, std::uint64_t seed) {
    if (n_mc < 1) throw std::invalid_argument("mc estimate: n_mc must be >= 1");
    double sum = 0.0, sumsq = 0.0;
    int done = 0;
    for (std::uint64_t chunk = 0; done < n_mc; ++chunk) {
        RngStream stream(seed, {chunk});
        const int m = std::min(kMcChunk, n_mc - done);
        double cs = 0.0, csq = 0.0;
        for (int i = 0; i < m; ++i) {
            const double v = sample_one(stream);
            cs += v;
            csq += v * v;
        }
        sum += cs;
        sumsq += csq;
        done += m;
    }
    McEstimate e;
    e.value = sum / n_mc;
    const double var = std::max(0.0, sumsq / n_mc - e.value * e.value);
    e.std_err = n_mc > 1 ? std::sqrt(var / n_mc) : std::sqrt(var);
    return e;
}

std::vector<double> uniform_box(RngStream& s, int dim, double A) {
    std::vector<double> x(dim);
    for (int i = 0; i < dim; ++i) x[i] = s.next_uniform(A);
    return x;
}

} // namespace

McEstimate bayes_risk_mc(const PosteriorFn& m, int dim, double A, int n_mc, std::uint64_t seed) {
    return mc_mean(
        [&](RngStream& s) {
            const auto x = uniform_box(s, dim, A);
            const double mx = m(x);
            return std::min(mx, 1.0 - mx);
        },
        n_mc, seed);
}

McEstimate excess_misclassification(const DecisionFn& eta, const PosteriorFn& m, int dim, double A, int n_mc,
                                    std::uint64_t seed) {
    return mc_mean(
        [&](RngStream& s) {
            const auto x = uniform_box(s, dim, A);
            const double mx = m(x);
            const int bayes = mx >= 0.5 ? 1 : -1;
            return eta(x) == bayes ? 0.0 : std::fabs(2.0 * mx - 1.0);
        },
        n_mc, seed);
}

McEstimate surrogate_excess(const std::function<double(std::span<const double>)>& f, const PosteriorFn& m, int dim,
                            double A, int n_mc, std::uint64_t seed) {
    return mc_mean(
        [&](RngStream& s) {
            const auto x = uniform_box(s, dim, A);
            const double mx = m(x);
            const double fx = f(x);
            const double risk = mx * logistic_loss(fx) + (1.0 - mx) * logistic_loss(-fx);
            double entropy = 0.0;
            if (mx > 0.0) entropy -= mx * std::log(mx);
            if (mx < 1.0) entropy -= (1.0 - mx) * std::log(1.0 - mx);
            return risk - entropy;
        },
        n_mc, seed);
}

} // namespace hmtc
