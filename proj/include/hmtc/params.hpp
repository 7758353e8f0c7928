#pragma once

#include <functional>
#include <vector>

#include "hmtc/config.hpp"
#include "hmtc/matrix.hpp"

namespace hmtc {

struct AttentionHead {
    Matrix w_query; // d_key x d_model
    Matrix w_key;   // d_key x d_model
    Matrix w_value; // d_v   x d_model
};

struct FfnWeights {
    Matrix w1;              // d_ff x d_model
    std::vector<double> b1; // d_ff
    Matrix w2;              // d_model x d_ff
    std::vector<double> b2; // d_model
};

struct FinalNetWeights {
    std::vector<double> v1;       // output weights, length J
    std::vector<double> v0_slope; // hidden slopes, length J
    std::vector<double> v0_bias;  // hidden biases, length J
};

struct LayerParams {
    std::vector<AttentionHead> heads; // exactly h entries
    FfnWeights ffn;
};

struct NetworkParams {
    std::vector<LayerParams> layers; // exactly N entries
    FinalNetWeights final;
};

// Outer mixture weights, constrained to { w >= 0, sum w <= 1 }.
struct MixtureState {
    std::vector<double> w;
};

AttentionHead make_zero_head(const ModelConfig& cfg);
FfnWeights make_zero_ffn(const ModelConfig& cfg);
LayerParams make_zero_layer(const ModelConfig& cfg);
NetworkParams make_zero_network(const ModelConfig& cfg);

void check_shapes(const NetworkParams& p, const ModelConfig& cfg);

// Visits every trainable scalar of a network in a fixed documented order:
// per layer, heads in order (w_query, w_key, w_value row-major), then
// w1 row-major, b1, w2 row-major, b2; finally v1, v0_slope, v0_bias.
// This order defines the flattening used by the inner-ball projection.
void for_each_param(NetworkParams& p, const std::function<void(double&)>& f);
void for_each_param(const NetworkParams& p, const std::function<void(double)>& f);

std::size_t param_count(const NetworkParams& p);

// p += s * q (matching shapes).
void axpy(NetworkParams& p, double s, const NetworkParams& q);

} // namespace hmtc
