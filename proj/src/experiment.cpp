#include "hmtc/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <future>
#include <sstream>
#include <stdexcept>

#include "hmtc/oracles.hpp"
#include "hmtc/rng.hpp"

namespace hmtc {

namespace {

// Shortest exact decimal form; re-parsing gives the same double back.
std::string fmt_double(double v) {
    char buf[32];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, p);
}

} // namespace

void ExperimentConfig::validate() const {
    // beta = 0 means "derive as max(1, c3 log n) per cell".
    ModelConfig probe = model;
    if (probe.beta <= 0.0) probe.beta = 1.0;
    probe.validate();
    if (repetitions < 1) throw std::invalid_argument("ExperimentConfig: repetitions >= 1 required");
    for (size_t i = 0; i + 1 < n_grid.size(); ++i)
        if (n_grid[i] > n_grid[i + 1]) throw std::invalid_argument("ExperimentConfig: n_grid must be ascending");
    for (int n : n_grid)
        if (n < 1) throw std::invalid_argument("ExperimentConfig: n_grid entries must be positive");
    if (n_mc < 1) throw std::invalid_argument("ExperimentConfig: n_mc >= 1 required");
    if (A <= 0.0) throw std::invalid_argument("ExperimentConfig: A must be positive");
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig cfg;
    cfg.target = HierarchicalModelSpec::from_json(j.at("target"));

    const auto& mj = j.at("model");
    cfg.model.d = mj.value("d", 1);
    cfg.model.l = mj.value("l", 2);
    cfg.model.h = mj.value("h", 8);
    cfg.model.I = mj.value("I", cfg.model.d + cfg.model.l + 4);
    cfg.model.d_key = mj.value("d_key", 4);
    cfg.model.d_ff = mj.value("d_ff", 2 * cfg.model.h + 2);
    cfg.model.N = mj.value("N", 2);
    cfg.model.J = mj.value("J", 16);
    cfg.model.beta = mj.value("beta", 0.0); // 0 = derive from c3 * log n
    cfg.model.K = mj.value("K", 64);

    if (j.contains("init")) {
        const auto& ij = j.at("init");
        cfg.init.tau = ij.value("tau", cfg.model.l + 1);
        cfg.init.c4 = ij.value("c4", 1.0);
        cfg.init.c5 = ij.value("c5", 0.0);
        cfg.init.n_nominal = ij.value("n_nominal", 1.0);
    } else {
        cfg.init.tau = cfg.model.l + 1;
    }

    if (j.contains("train")) {
        const auto& tj = j.at("train");
        cfg.train.t_n = tj.value("t_n", 500);
        cfg.train.c6 = tj.value("c6", 0.5);
        cfg.train.n = tj.value("n", 0);
        const std::string mode = tj.value("mode", "outer_only");
        if (mode == "full")
            cfg.train.mode = TrainConfig::Mode::full;
        else if (mode == "outer_only" || mode == "outer-only")
            cfg.train.mode = TrainConfig::Mode::outer_only;
        else
            throw std::invalid_argument("ExperimentConfig: unknown mode " + mode);
    }

    cfg.n_grid = j.value("n_grid", std::vector<int>{200, 800, 3200});
    cfg.n_mc = j.value("n_mc", 10000);
    cfg.repetitions = j.value("repetitions", 1);
    cfg.n_train = j.value("n_train", 200);
    cfg.A = j.value("A", 1.0);
    cfg.c3 = j.value("c3", 1.0);
    cfg.master_seed = j.value("master_seed", static_cast<std::uint64_t>(1));
    return cfg;
}

LabeledDataset generate_dataset(const HierarchicalModelSpec& spec, int n, double A, std::uint64_t seed, int d,
                                int l) {
    if (n < 0) throw std::invalid_argument("generate_dataset: n must be nonnegative");
    spec.validate(d * l);
    LabeledDataset data;
    data.bound_A = A;
    data.inputs.reserve(n);
    data.labels.reserve(n);
    RngStream stream(seed, {0x6461746173657473ULL});
    bool warned = false;
    std::vector<double> flat(static_cast<size_t>(d) * l);
    for (int i = 0; i < n; ++i) {
        Matrix x(d, l);
        for (int j = 0; j < l; ++j)
            for (int r = 0; r < d; ++r) {
                const double v = stream.next_uniform(A);
                x(r, j) = v;
                flat[static_cast<size_t>(j) * d + r] = v;
            }
        double m = eval_hierarchical(spec, flat);
        if (m < 0.0 || m > 1.0) {
            if (!warned) {
                std::fprintf(stderr, "generate_dataset: clamping a-posteriori values outside [0,1]\n");
                warned = true;
            }
            m = std::min(1.0, std::max(0.0, m));
        }
        data.labels.push_back(stream.next_unit() < m ? 1 : -1);
        data.inputs.push_back(std::move(x));
    }
    return data;
}

namespace {

RateRow run_cell(const ExperimentConfig& cfg, int n, int rep) {
    RateRow row;
    row.n = n;
    row.repetition = rep;
    try {
        ModelConfig model = cfg.model;
        if (model.beta <= 0.0) model.beta = std::max(1.0, cfg.c3 * std::log(static_cast<double>(n)));

        InitConfig init = cfg.init;
        init.n_nominal = std::max(1.0, static_cast<double>(n));

        // The data and evaluation draws are independent per (n, repetition)
        // cell; the initialization seed is paired across the n grid within a
        // repetition, so the slope compares the same random dictionary at
        // growing sample sizes instead of re-rolling it per cell.
        RngStream cell_seed(cfg.master_seed, {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep)});
        const std::uint64_t data_seed = cell_seed.next_u64();
        const std::uint64_t mc_seed = cell_seed.next_u64();
        const std::uint64_t train_seed = RngStream(cfg.master_seed, {0x696e6974ULL, static_cast<std::uint64_t>(rep)}).next_u64();

        LabeledDataset data = generate_dataset(cfg.target, n, cfg.A, data_seed, model.d, model.l);

        const auto t0 = std::chrono::steady_clock::now();
        TrainedModel fit = train(data, model, init, cfg.train, train_seed);
        row.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        const int dl = model.d * model.l;
        auto m_fn = [&](std::span<const double> x) {
            double v = eval_hierarchical(cfg.target, x);
            return std::min(1.0, std::max(0.0, v));
        };
        auto f_fn = [&](std::span<const double> x) {
            Matrix in(model.d, model.l);
            for (int j = 0; j < model.l; ++j)
                for (int r = 0; r < model.d; ++r) in(r, j) = x[static_cast<size_t>(j) * model.d + r];
            return mixture_forward(in, fit.w_hat, fit.thetas_hat, model);
        };
        auto eta_fn = [&](std::span<const double> x) { return classify(f_fn(x)); };

        McEstimate exc = excess_misclassification(eta_fn, m_fn, dl, cfg.A, cfg.n_mc, mc_seed);
        McEstimate sur = surrogate_excess(f_fn, m_fn, dl, cfg.A, cfg.n_mc, mc_seed + 1);
        row.excess = exc.value;
        row.std_err = exc.std_err;
        row.surrogate_excess = sur.value;
        row.surrogate_std_err = sur.std_err;
    } catch (const std::exception& e) {
        row.failed = true;
        row.error = e.what();
    }
    return row;
}

} // namespace

bool fit_rate_slope(const std::vector<RateRow>& rows, double* slope) {
    // Mean excess per n, floored at the mean standard error before the log.
    std::vector<std::pair<double, double>> pts; // (log n, log excess)
    std::vector<int> ns;
    for (const auto& r : rows)
        if (!r.failed && std::find(ns.begin(), ns.end(), r.n) == ns.end()) ns.push_back(r.n);
    for (int n : ns) {
        double mean = 0.0, se = 0.0;
        int c = 0;
        for (const auto& r : rows)
            if (!r.failed && r.n == n) {
                mean += r.excess;
                se += r.std_err;
                ++c;
            }
        if (c == 0) continue;
        mean /= c;
        se /= c;
        const double floored = std::max(mean, std::max(se, 1e-12));
        pts.emplace_back(std::log(static_cast<double>(n)), std::log(floored));
    }
    if (pts.size() < 2) return false;
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (auto [x, y] : pts) {
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    const double m = pts.size();
    const double denom = m * sxx - sx * sx;
    if (denom == 0.0) return false;
    *slope = (m * sxy - sx * sy) / denom;
    return true;
}

RateStudyResult run_rate_study(const ExperimentConfig& cfg, int threads) {
    cfg.validate();
    RateStudyResult res;

    std::vector<std::pair<int, int>> cells;
    for (int n : cfg.n_grid)
        for (int rep = 0; rep < cfg.repetitions; ++rep) cells.emplace_back(n, rep);

    res.rows.resize(cells.size());
    if (threads <= 1) {
        for (size_t i = 0; i < cells.size(); ++i) res.rows[i] = run_cell(cfg, cells[i].first, cells[i].second);
    } else {
        // Cells are independent with derived sub-seeds; assembly stays in
        // cell order so the report is identical for any thread count.
        std::vector<std::future<RateRow>> futs(cells.size());
        size_t next = 0;
        while (next < cells.size()) {
            const size_t batch = std::min<size_t>(threads, cells.size() - next);
            for (size_t b = 0; b < batch; ++b)
                futs[next + b] = std::async(std::launch::async, run_cell, std::cref(cfg), cells[next + b].first,
                                            cells[next + b].second);
            for (size_t b = 0; b < batch; ++b) res.rows[next + b] = futs[next + b].get();
            next += batch;
        }
    }

    res.slope_defined = fit_rate_slope(res.rows, &res.slope);
    if (res.slope_defined) {
        // Bootstrap over repetitions within each n (percentile interval).
        std::vector<double> slopes;
        RngStream boot(cfg.master_seed, {0x626f6f74ULL});
        for (int b = 0; b < 200; ++b) {
            std::vector<RateRow> resampled;
            for (int n : cfg.n_grid) {
                std::vector<const RateRow*> pool;
                for (const auto& r : res.rows)
                    if (!r.failed && r.n == n) pool.push_back(&r);
                if (pool.empty()) continue;
                for (size_t i = 0; i < pool.size(); ++i)
                    resampled.push_back(*pool[boot.next_below(pool.size())]);
            }
            double s;
            if (fit_rate_slope(resampled, &s)) slopes.push_back(s);
        }
        if (!slopes.empty()) {
            std::sort(slopes.begin(), slopes.end());
            res.slope_ci_lo = slopes[static_cast<size_t>(0.025 * (slopes.size() - 1))];
            res.slope_ci_hi = slopes[static_cast<size_t>(0.975 * (slopes.size() - 1))];
        }
    }
    return res;
}

std::string RateStudyResult::to_csv() const {
    std::ostringstream out;
    out << "n,repetition,excess_misclassification,std_err,surrogate_excess,train_seconds\n";
    for (const auto& r : rows) {
        out << r.n << ',' << r.repetition << ',' << fmt_double(r.excess) << ',' << fmt_double(r.std_err) << ','
            << fmt_double(r.surrogate_excess) << ',' << fmt_double(r.train_seconds) << '\n';
    }
    return out.str();
}

nlohmann::json RateStudyResult::slope_report() const {
    nlohmann::json j;
    j["slope"] = slope_defined ? nlohmann::json(slope) : nlohmann::json(nullptr);
    if (slope_defined) {
        j["ci_lo"] = slope_ci_lo;
        j["ci_hi"] = slope_ci_hi;
    }
    int failures = 0;
    for (const auto& r : rows)
        if (r.failed) ++failures;
    j["rows"] = rows.size();
    j["failed_rows"] = failures;
    return j;
}

std::vector<PerturbRow> run_perturbation_study(const ModelConfig& cfg, const NetworkParams& theta,
                                               const NetworkMask& mask, const std::vector<double>& eps_grid,
                                               int n_inputs, double A, std::uint64_t seed) {
    for (size_t i = 0; i + 1 < eps_grid.size(); ++i)
        if (eps_grid[i] < eps_grid[i + 1])
            throw std::invalid_argument("run_perturbation_study: eps grid must be descending");
    for (double e : eps_grid)
        if (e < 0.0) throw std::invalid_argument("run_perturbation_study: eps must be nonnegative");

    // Shared inputs across the grid, so the deviation envelopes nest.
    std::vector<Matrix> inputs;
    RngStream in_stream(seed, {0x696e70757473ULL});
    for (int i = 0; i < n_inputs; ++i) {
        Matrix x(cfg.d, cfg.l);
        for (double& v : x.data()) v = in_stream.next_uniform(A);
        inputs.push_back(std::move(x));
    }
    std::vector<double> base(inputs.size());
    for (size_t i = 0; i < inputs.size(); ++i) base[i] = network_forward(inputs[i], theta, cfg);

    std::vector<PerturbRow> rows;
    for (size_t gi = 0; gi < eps_grid.size(); ++gi) {
        const double eps = eps_grid[gi];
        // Common random numbers across the grid: the same unit draw scaled by
        // eps, so each row is still i.i.d. uniform[-eps, eps] per entry and
        // the ratio column isolates the local sensitivity.
        RngStream perturb_stream(seed, {0x70657274ULL});
        NetworkParams tilde = theta;
        for_each_param(tilde, [&](double& v) { v += eps * perturb_stream.next_uniform(1.0); });
        apply_mask_in_place(tilde, mask); // off-mask coordinates stay zero

        double dev = 0.0;
        for (size_t i = 0; i < inputs.size(); ++i)
            dev = std::max(dev, std::fabs(network_forward(inputs[i], tilde, cfg) - base[i]));
        rows.push_back({eps, dev, eps > 0.0 ? dev / eps : 0.0});
    }
    return rows;
}

std::string perturb_csv(const std::vector<PerturbRow>& rows) {
    std::ostringstream out;
    out << "eps,max_deviation,ratio\n";
    for (const auto& r : rows)
        out << fmt_double(r.eps) << ',' << fmt_double(r.max_deviation) << ',' << fmt_double(r.ratio) << '\n';
    return out.str();
}

double rademacher_lower_bound(const Matrix& theta_outputs, int n_signs, std::uint64_t seed) {
    if (n_signs < 1) throw std::invalid_argument("rademacher_lower_bound: n_signs >= 1 required");
    if (theta_outputs.rows() < 1) throw std::invalid_argument("rademacher_lower_bound: need at least one theta");
    const int n = theta_outputs.cols();
    std::vector<double> signs(n);
    double acc = 0.0;
    for (int s = 0; s < n_signs; ++s) {
        RngStream stream(seed, {static_cast<std::uint64_t>(s)});
        for (int i = 0; i < n; ++i) signs[i] = stream.next_sign();
        double best = 0.0;
        for (int t = 0; t < theta_outputs.rows(); ++t) {
            const double v = std::fabs(dot(theta_outputs.row(t), signs)) / n;
            best = std::max(best, v);
        }
        acc += best;
    }
    return acc / n_signs;
}

RademacherStudy estimate_rademacher(const ModelConfig& cfg, const InitConfig& icfg, double c6,
                                    const std::vector<Matrix>& inputs, int n_signs, int n_thetas,
                                    std::uint64_t seed) {
    if (n_thetas < 1) throw std::invalid_argument("estimate_rademacher: n_thetas >= 1 required");
    const int n = static_cast<int>(inputs.size());
    Matrix outs(n_thetas, n);
    for (int t = 0; t < n_thetas; ++t) {
        InitConfig ic = icfg;
        ic.seed = RngStream(seed, {0x7468657461ULL, static_cast<std::uint64_t>(t)}).next_u64();
        auto [theta, mask] = init_network(cfg, ic, 0);

        // Random direction over the trainable coordinates, scaled to a
        // radius drawn as c6 * U^(1/W) (volume-uniform in the masked ball).
        NetworkParams delta = make_zero_network(cfg);
        RngStream dir(seed, {0x646972ULL, static_cast<std::uint64_t>(t)});
        for_each_param(delta, [&](double& v) { v = dir.next_gaussian(); });
        apply_mask_in_place(delta, mask);
        double ssq = 0.0;
        std::size_t free_coords = 0;
        for_each_param(static_cast<const NetworkParams&>(delta), [&](double v) {
            ssq += v * v;
            if (v != 0.0) ++free_coords;
        });
        const double radius =
            c6 * std::pow(dir.next_unit(), 1.0 / static_cast<double>(std::max<std::size_t>(free_coords, 1)));
        if (ssq > 0.0) axpy(theta, radius / std::sqrt(ssq), delta);

        for (int i = 0; i < n; ++i) outs(t, i) = truncate(network_forward(inputs[i], theta, cfg), cfg.beta);
    }
    RademacherStudy study;
    study.estimate = rademacher_lower_bound(outs, n_signs, seed);
    study.n = n;
    study.n_signs = n_signs;
    study.n_thetas = n_thetas;
    return study;
}

} // namespace hmtc
