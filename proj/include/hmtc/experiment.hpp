#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "hmtc/builders.hpp"
#include "hmtc/hierarchical.hpp"
#include "hmtc/optimizer.hpp"

namespace hmtc {

struct ExperimentConfig {
    HierarchicalModelSpec target;
    ModelConfig model;
    InitConfig init;
    TrainConfig train;
    std::vector<int> n_grid;
    int n_mc = 10000;
    int repetitions = 1;
    int n_train = 200; // sample size for the plain `train` subcommand
    double A = 1.0;
    double c3 = 1.0; // beta_n = max(1, c3 * log n) when model.beta is left at 0
    std::uint64_t master_seed = 1;
    std::string out_dir = ".";

    void validate() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
};

// X_i i.i.d. uniform on [-A, A]^{d*l}; Y_i = +1 with probability m(X_i).
// Values of m outside [0, 1] are clamped (with a one-line warning).
LabeledDataset generate_dataset(const HierarchicalModelSpec& spec, int n, double A, std::uint64_t seed, int d,
                                int l);

struct RateRow {
    int n = 0;
    int repetition = 0;
    double excess = 0.0;
    double std_err = 0.0;
    double surrogate_excess = 0.0;
    double train_seconds = 0.0;
    double surrogate_std_err = 0.0; // used by the surrogate diagnostic, not a CSV column
    bool failed = false;
    std::string error;
};

struct RateStudyResult {
    std::vector<RateRow> rows;
    bool slope_defined = false;
    double slope = 0.0;
    double slope_ci_lo = 0.0;
    double slope_ci_hi = 0.0;

    // Columns exactly: n,repetition,excess_misclassification,std_err,
    // surrogate_excess,train_seconds.
    std::string to_csv() const;
    nlohmann::json slope_report() const;
};

RateStudyResult run_rate_study(const ExperimentConfig& cfg, int threads = 1);

// Least-squares slope of log(mean excess) over log n; means with
// excess <= 0 are floored at their standard error before the log.
// Returns false when fewer than two distinct n values are present.
bool fit_rate_slope(const std::vector<RateRow>& rows, double* slope);

struct PerturbRow {
    double eps = 0.0;
    double max_deviation = 0.0;
    double ratio = 0.0; // max_deviation / eps (0 for eps = 0)
};

// For each eps, perturbs every trainable weight by i.i.d. uniform[-eps, eps]
// (mask respected) and records the sup deviation of the untruncated network
// output over n_inputs uniform inputs.
std::vector<PerturbRow> run_perturbation_study(const ModelConfig& cfg, const NetworkParams& theta,
                                               const NetworkMask& mask, const std::vector<double>& eps_grid,
                                               int n_inputs, double A, std::uint64_t seed);
std::string perturb_csv(const std::vector<PerturbRow>& rows);

// Sampling lower bound of the Rademacher complexity: the average over
// n_signs Rademacher draws of the maximum over the sampled parameter rows of
// |1/n sum_i eps_i out(t, i)|. Rows of theta_outputs hold T_beta(f_theta(X_i)).
double rademacher_lower_bound(const Matrix& theta_outputs, int n_signs, std::uint64_t seed);

struct RademacherStudy {
    double estimate = 0.0;
    int n = 0;
    int n_signs = 0;
    int n_thetas = 0;
};

// Default theta sampler: fresh random initializations perturbed inside the
// ball of radius c6 over their trainable coordinates.
RademacherStudy estimate_rademacher(const ModelConfig& cfg, const InitConfig& icfg, double c6,
                                    const std::vector<Matrix>& inputs, int n_signs, int n_thetas,
                                    std::uint64_t seed);

} // namespace hmtc
