#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>

#include <CLI11.hpp>

#include "hmtc/experiment.hpp"
#include "hmtc/serialize.hpp"
#include "hmtc/verify.hpp"

namespace {

using hmtc::json;

hmtc::ExperimentConfig load_config(const std::string& path, std::uint64_t seed, const std::string& mode) {
    auto j = nlohmann::json::parse(hmtc::read_text_file(path));
    hmtc::ExperimentConfig cfg = hmtc::ExperimentConfig::from_json(j);
    cfg.master_seed = seed;
    if (mode == "full")
        cfg.train.mode = hmtc::TrainConfig::Mode::full;
    else if (mode == "outer-only")
        cfg.train.mode = hmtc::TrainConfig::Mode::outer_only;
    return cfg;
}

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

hmtc::ModelConfig resolved_model(const hmtc::ExperimentConfig& cfg, int n) {
    hmtc::ModelConfig m = cfg.model;
    if (m.beta <= 0.0) m.beta = std::max(1.0, cfg.c3 * std::log(static_cast<double>(n)));
    return m;
}

int cmd_train(const hmtc::ExperimentConfig& cfg, const std::string& out_dir) {
    hmtc::ModelConfig model = resolved_model(cfg, cfg.n_train);
    hmtc::InitConfig init = cfg.init;
    init.n_nominal = std::max(1.0, static_cast<double>(cfg.n_train));
    hmtc::LabeledDataset data =
        hmtc::generate_dataset(cfg.target, cfg.n_train, cfg.A, cfg.master_seed, model.d, model.l);
    hmtc::TrainedModel fit = hmtc::train(data, model, init, cfg.train, cfg.master_seed);

    json model_doc;
    model_doc["config"] = hmtc::config_to_json(model);
    model_doc["w"] = fit.w_hat.w;
    model_doc["t_hat"] = fit.t_hat;
    auto nets = json::array();
    auto masks = json::array();
    for (int k = 0; k < model.K; ++k) {
        nets.push_back(hmtc::network_to_json(model, fit.thetas_hat[k]));
        masks.push_back(hmtc::mask_to_json(fit.masks[k]));
    }
    model_doc["networks"] = std::move(nets);
    model_doc["masks"] = std::move(masks);
    hmtc::write_text_file(join(out_dir, "model.json"), nlohmann::json(model_doc).dump(2) + "\n");

    std::string csv = "step,empirical_loss\n";
    for (size_t t = 0; t < fit.loss_trace.size(); ++t) {
        char buf[64];
        std::snprintf(buf, sizeof(buf), "%zu,%.17g\n", t, fit.loss_trace[t]);
        csv += buf;
    }
    hmtc::write_text_file(join(out_dir, "loss_trace.csv"), csv);
    std::printf("selected step %d, loss %.6f\n", fit.t_hat, fit.loss_trace[fit.t_hat]);
    return 0;
}

int cmd_rate_study(const hmtc::ExperimentConfig& cfg, const std::string& out_dir, int threads) {
    hmtc::RateStudyResult res = hmtc::run_rate_study(cfg, threads);
    hmtc::write_text_file(join(out_dir, "rate_study.csv"), res.to_csv());
    hmtc::write_text_file(join(out_dir, "slope.json"), res.slope_report().dump(2) + "\n");
    if (res.slope_defined)
        std::printf("fitted slope %.4f (bootstrap CI [%.4f, %.4f])\n", res.slope, res.slope_ci_lo, res.slope_ci_hi);
    else
        std::printf("slope undefined (fewer than two n values)\n");
    for (const auto& r : res.rows)
        if (r.failed) std::fprintf(stderr, "cell n=%d rep=%d failed: %s\n", r.n, r.repetition, r.error.c_str());
    return 0;
}

int cmd_perturb(const hmtc::ExperimentConfig& cfg, const std::string& out_dir) {
    hmtc::ModelConfig model = resolved_model(cfg, cfg.n_train);
    hmtc::InitConfig init = cfg.init;
    init.n_nominal = std::max(1.0, static_cast<double>(cfg.n_train));
    init.seed = cfg.master_seed;
    auto [theta, mask] = hmtc::init_network(model, init, 0);
    std::vector<double> grid = {1e-3, 1e-4, 1e-5};
    auto rows = hmtc::run_perturbation_study(model, theta, mask, grid, 64, cfg.A, cfg.master_seed);
    hmtc::write_text_file(join(out_dir, "perturb.csv"), hmtc::perturb_csv(rows));
    for (const auto& r : rows) std::printf("eps %.1e  max deviation %.6e  ratio %.6e\n", r.eps, r.max_deviation, r.ratio);
    return 0;
}

int cmd_rademacher(const hmtc::ExperimentConfig& cfg, const std::string& out_dir) {
    hmtc::ModelConfig model = resolved_model(cfg, cfg.n_train);
    hmtc::InitConfig init = cfg.init;
    init.n_nominal = std::max(1.0, static_cast<double>(cfg.n_train));
    hmtc::LabeledDataset data =
        hmtc::generate_dataset(cfg.target, cfg.n_train, cfg.A, cfg.master_seed, model.d, model.l);
    hmtc::RademacherStudy study =
        hmtc::estimate_rademacher(model, init, cfg.train.c6, data.inputs, 64, 32, cfg.master_seed);
    json j;
    j["estimate_lower_bound"] = study.estimate;
    j["n"] = study.n;
    j["n_signs"] = study.n_signs;
    j["n_thetas"] = study.n_thetas;
    hmtc::write_text_file(join(out_dir, "rademacher.json"), nlohmann::json(j).dump(2) + "\n");
    std::printf("rademacher lower bound %.6e (n=%d)\n", study.estimate, study.n);
    return 0;
}

int cmd_verify(const std::string& selector, const std::string& out_dir, std::uint64_t seed) {
    nlohmann::json report = hmtc::verify_constructions(selector, seed);
    hmtc::write_text_file(join(out_dir, "verify_report.json"), report.dump(2) + "\n");
    const bool ok = report.at("all_pass").get<bool>();
    if (report.contains("checks"))
        for (const auto& [name, r] : report.at("checks").items())
            std::printf("%-10s %s\n", name.c_str(), r.at("pass").get<bool>() ? "pass" : "FAIL");
    return ok ? 0 : 1;
}

int cmd_build(const hmtc::ExperimentConfig& cfg, const std::string& out_dir, int h_budget, int logit_grid) {
    hmtc::ModelConfig model = cfg.model;
    if (model.beta <= 0.0) model.beta = 10.0;
    hmtc::BuiltNetwork built = logit_grid > 0 ? hmtc::assemble_theorem1_network(cfg.target, model, logit_grid)
                                              : hmtc::build_hierarchical_approximator(cfg.target, h_budget, model);
    hmtc::write_text_file(join(out_dir, "built_model.json"),
                          nlohmann::json(hmtc::network_to_json(model, built.params)).dump(2) + "\n");
    hmtc::write_text_file(join(out_dir, "certificate.json"), built.certificate.to_json().dump(2) + "\n");
    std::printf("built network: %d layers used, sup error %.3e\n", built.certificate.layers_used,
                built.certificate.measured_sup_error);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"hard-max transformer classifier experiments"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string out_dir = ".";
    std::string mode;
    std::string selector = "all";
    std::uint64_t seed = 1;
    int threads = 1;
    int h_budget = 16;
    int logit_grid = 0;

    app.add_option("--config", config_path, "experiment config (JSON)");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--mode", mode, "training mode: full | outer-only")
        ->check(CLI::IsMember({"", "full", "outer-only"}));
    app.add_option("--threads", threads, "worker threads for independent cells");

    auto* train_cmd = app.add_subcommand("train", "train one mixture on synthetic data");
    auto* rate_cmd = app.add_subcommand("rate-study", "excess-misclassification rate study");
    auto* perturb_cmd = app.add_subcommand("perturb", "weight-perturbation sensitivity study");
    auto* rad_cmd = app.add_subcommand("rademacher", "empirical Rademacher lower bound");
    auto* verify_cmd = app.add_subcommand("verify", "run the construction certificate checks");
    verify_cmd->add_option("--suite", selector, "all or comma-separated suite names");
    auto* build_cmd = app.add_subcommand("build", "emit constructive weights to file");
    build_cmd->add_option("--terms", h_budget, "terms-per-function budget");
    build_cmd->add_option("--logit-grid", logit_grid, "attach a logit head on this grid (0 = identity readout)");

    CLI11_PARSE(app, argc, argv);

    try {
        std::filesystem::create_directories(out_dir);
        if (verify_cmd->parsed()) return cmd_verify(selector, out_dir, seed);

        if (config_path.empty()) {
            std::fprintf(stderr, "--config is required for this subcommand\n");
            return 2;
        }
        hmtc::ExperimentConfig cfg = load_config(config_path, seed, mode);
        cfg.out_dir = out_dir;

        if (train_cmd->parsed()) return cmd_train(cfg, out_dir);
        if (rate_cmd->parsed()) return cmd_rate_study(cfg, out_dir, threads);
        if (perturb_cmd->parsed()) return cmd_perturb(cfg, out_dir);
        if (rad_cmd->parsed()) return cmd_rademacher(cfg, out_dir);
        if (build_cmd->parsed()) return cmd_build(cfg, out_dir, h_budget, logit_grid);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
