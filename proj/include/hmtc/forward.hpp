#pragma once

#include <vector>

#include "hmtc/config.hpp"
#include "hmtc/params.hpp"

namespace hmtc {

// One encoded sequence: d_model x l, stored column-major by token so that the
// pointwise FFN walks contiguous memory.
struct EncodedSequence {
    int d_model = 0;
    int l = 0;
    std::vector<double> z; // column-major: z[token * d_model + component]

    EncodedSequence() = default;
    EncodedSequence(int dm, int len) : d_model(dm), l(len), z(static_cast<size_t>(dm) * len, 0.0) {}

    double& at(int comp, int token) { return z[static_cast<size_t>(token) * d_model + comp]; }
    double at(int comp, int token) const { return z[static_cast<size_t>(token) * d_model + comp]; }

    std::span<double> col(int token) { return {z.data() + static_cast<size_t>(token) * d_model, static_cast<size_t>(d_model)}; }
    std::span<const double> col(int token) const {
        return {z.data() + static_cast<size_t>(token) * d_model, static_cast<size_t>(d_model)};
    }

    bool operator==(const EncodedSequence& o) const { return d_model == o.d_model && l == o.l && z == o.z; }
};

// Head-by-token matrix of selected key indices (0-based tokens).
using ArgmaxIndices = std::vector<std::vector<int>>; // [head][token]

struct AttentionResult {
    EncodedSequence y;
    ArgmaxIndices jhat;
};

// Lays out the input as data rows, a ones row, the positional identity block
// and zero padding up to d_model. x is d x l.
EncodedSequence encode_input(const Matrix& x, const ModelConfig& cfg);

// Hard-max multi-head attention with residual connection. Ties in the argmax
// go to the smallest token index. The selected indices are returned for
// inspection and for the frozen-selection backward pass.
AttentionResult hardmax_attention_layer(const EncodedSequence& z_prev, const std::vector<AttentionHead>& heads,
                                        const ModelConfig& cfg);

// Token-wise one-hidden-layer ReLU net with residual connection.
EncodedSequence pointwise_ffn_layer(const EncodedSequence& y, const FfnWeights& ffn);

// Clamp to [-beta, beta].
inline double truncate(double v, double beta) { return std::max(-beta, std::min(beta, v)); }

// Final shallow net: sum_j v1_j * relu(v0_slope_j * u + v0_bias_j).
double final_net(double u, const FinalNetWeights& v);

// Full pass of one network; returns the untruncated scalar output. The caller
// applies truncate() where the mixture does.
double network_forward(const Matrix& x, const NetworkParams& theta, const ModelConfig& cfg);

// sum_k w_k * truncate(network_forward(x, theta_k)).
double mixture_forward(const Matrix& x, const MixtureState& w, const std::vector<NetworkParams>& thetas,
                       const ModelConfig& cfg);

// Plug-in label: +1 for fval >= 0 (zero maps to +1), -1 otherwise.
inline int classify(double fval) { return fval >= 0.0 ? 1 : -1; }

// Everything the frozen-selection backward pass needs from a forward run,
// plus the distances to the nearest argmax tie / ReLU kink / clamp boundary
// (used to filter finite-difference checks away from nondifferentiable
// points).
struct ForwardTrace {
    std::vector<EncodedSequence> z;      // z_0 .. z_N
    std::vector<EncodedSequence> y_post; // post-attention y_1 .. y_N
    std::vector<ArgmaxIndices> jhat;     // per layer
    double readout = 0.0;                // z_N component picked for the final net
    double output = 0.0;                 // untruncated network output
    double min_argmax_gap = 1e300;       // best-vs-runner-up score gap over all heads/tokens
    double min_relu_margin = 1e300;      // |preactivation| over FFN and final-net units
};

double network_forward_traced(const Matrix& x, const NetworkParams& theta, const ModelConfig& cfg, ForwardTrace& trace);

} // namespace hmtc
