#pragma once

#include <json.hpp>

#include "hmtc/config.hpp"
#include "hmtc/hierarchical.hpp"
#include "hmtc/params.hpp"
#include "hmtc/spline.hpp"

namespace hmtc {

// All component / token / head indices below are 0-based. The ones row sits
// at component d, position rows at d+1..d+l, the per-head scratch pair at
// head*I + d+l+1 and head*I + d+l+2.

// ---- Attention-head gadget --------------------------------------------------
//
// Emits query/key/value matrices such that token 0 attends to token j and
// every other token attends to k, with margin B/2 in the scores, and the
// selected value adds z^(s1)_0 * (beta + z^(s2)_j) to component s3 of token 0.

struct Lemma9Certificate {
    double B = 0.0;
    double beta = 0.0;
    double input_bound = 0.0;     // declared bound on ||z_0||_inf
    double threshold = 0.0;       // minimal admissible B at delta = 0
    double eps_admissible = 0.0;  // weight perturbation budget
    double delta_admissible = 0.0;// input perturbation budget at this B
    int tau = 0;
};

AttentionHead build_lemma9_head(const ModelConfig& cfg, int s0, int s1, int s2, int j, int k, int s3, double beta,
                                double B, double input_bound, Lemma9Certificate* certificate = nullptr);

// ---- Pointwise FFN gadget ---------------------------------------------------
//
// relu:     component j1 := alpha * max(y^(j2), 0), component j2 := 0
// identity: component j1 := alpha * y^(j2),          component j2 := 0
// All other components pass through. Four hidden units, nine (relu) or ten
// (identity) nonzero entries, all bounded by max(|alpha|, 1).

enum class Lemma10Variant { relu, identity };

FfnWeights build_lemma10_ffn(const ModelConfig& cfg, int j1, int j2, double alpha, Lemma10Variant variant);

// ---- Spline-product encoder -------------------------------------------------

struct ProductTerm {
    double alpha = 0.0;
    std::vector<int> exponents; // one basis index per input coordinate, length d*l
};

struct ProductTermSpec {
    std::vector<ProductTerm> terms;
};

struct EncoderCertificate {
    double eps_admissible = 0.0;
    double delta_admissible = 0.0;
    double measured_sup_error = 0.0;  // against the brute-force oracle at eps = 0
    double measured_input_bound = 0.0;
    double predicted_error_per_eps = 0.0; // first-order growth estimate from the layer bounds
    std::vector<double> B_schedule;       // per factor layer (max over heads)
    nlohmann::json component_map;
};

struct BuiltEncoder {
    std::vector<LayerParams> layers;
    EncoderCertificate certificate;
};

// Emits degree*(d*l) + 1 layer pairs computing
// sum_s alpha_s * prod_k B_{j_{s,k}}(x^(k)) into the target component of
// token 0. target_component must lie in [d+l+3, I).
BuiltEncoder build_spline_product_encoder(const ModelConfig& cfg, const SplineBasisSpec& basis,
                                          const ProductTermSpec& terms, int target_component);

// ---- Hierarchical-composition approximator ----------------------------------

struct NodeReport {
    int node_index = 0;
    int target_component = 0;
    int first_layer = 0;
    int layer_count = 0;
    int term_count = 0;
    int degree = 0;
    double fit_sup_error = 0.0;      // least-squares fit of g on its own grid
    double measured_sup_error = 0.0; // node value read from the network vs the oracle
};

struct HierarchicalCertificate {
    double eps_admissible = 0.0;
    double measured_sup_error = 0.0;
    double measured_input_bound = 0.0;
    std::vector<double> B_schedule;
    nlohmann::json component_map;
    std::vector<NodeReport> nodes;
    int layers_used = 0;

    nlohmann::json to_json() const;
};

struct BuiltNetwork {
    NetworkParams params;
    HierarchicalCertificate certificate;
};

// Bottom-up composition of spline-product blocks, one per inner node, each
// writing its value into a reserved component of token 0; a final copy gadget
// moves the root value into the readout component. The final net is the
// two-unit identity. h_budget caps the tensor-product terms per node at
// h_budget - 1.
BuiltNetwork build_hierarchical_approximator(const HierarchicalModelSpec& spec, int h_budget, const ModelConfig& cfg);

// ---- Logit head -------------------------------------------------------------
//
// One-hidden-layer net interpolating z -> log(z / (1 - z)) on the grid
// {1/K, ..., (K-1)/K}, constant continuation at the ends, zero outside
// (-2/K, 1 + 2/K). Exactly 3K + 9 neurons, every weight bounded by K.
FinalNetWeights build_logit_head(int Kgrid);

// Hierarchical approximator for m composed with the logit head, so the
// untruncated network output approximates log(m(x) / (1 - m(x))).
BuiltNetwork assemble_theorem1_network(const HierarchicalModelSpec& spec, const ModelConfig& cfg, int Kgrid);

} // namespace hmtc
