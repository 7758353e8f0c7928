#include "hmtc/params.hpp"

#include <stdexcept>

namespace hmtc {

AttentionHead make_zero_head(const ModelConfig& cfg) {
    return {Matrix(cfg.d_key, cfg.d_model()), Matrix(cfg.d_key, cfg.d_model()), Matrix(cfg.d_v(), cfg.d_model())};
}

FfnWeights make_zero_ffn(const ModelConfig& cfg) {
    return {Matrix(cfg.d_ff, cfg.d_model()), std::vector<double>(cfg.d_ff, 0.0), Matrix(cfg.d_model(), cfg.d_ff),
            std::vector<double>(cfg.d_model(), 0.0)};
}

LayerParams make_zero_layer(const ModelConfig& cfg) {
    LayerParams lp;
    lp.heads.reserve(cfg.h);
    for (int s = 0; s < cfg.h; ++s) lp.heads.push_back(make_zero_head(cfg));
    lp.ffn = make_zero_ffn(cfg);
    return lp;
}

NetworkParams make_zero_network(const ModelConfig& cfg) {
    NetworkParams p;
    p.layers.reserve(cfg.N);
    for (int r = 0; r < cfg.N; ++r) p.layers.push_back(make_zero_layer(cfg));
    p.final.v1.assign(cfg.J, 0.0);
    p.final.v0_slope.assign(cfg.J, 0.0);
    p.final.v0_bias.assign(cfg.J, 0.0);
    return p;
}

void check_shapes(const NetworkParams& p, const ModelConfig& cfg) {
    auto fail = [](const char* msg) { throw std::invalid_argument(std::string("NetworkParams: ") + msg); };
    if (static_cast<int>(p.layers.size()) != cfg.N) fail("layer count != N");
    for (const auto& lp : p.layers) {
        if (static_cast<int>(lp.heads.size()) != cfg.h) fail("head count != h");
        for (const auto& hd : lp.heads) {
            if (hd.w_query.rows() != cfg.d_key || hd.w_query.cols() != cfg.d_model()) fail("w_query shape");
            if (hd.w_key.rows() != cfg.d_key || hd.w_key.cols() != cfg.d_model()) fail("w_key shape");
            if (hd.w_value.rows() != cfg.d_v() || hd.w_value.cols() != cfg.d_model()) fail("w_value shape");
        }
        if (lp.ffn.w1.rows() != cfg.d_ff || lp.ffn.w1.cols() != cfg.d_model()) fail("w1 shape");
        if (static_cast<int>(lp.ffn.b1.size()) != cfg.d_ff) fail("b1 shape");
        if (lp.ffn.w2.rows() != cfg.d_model() || lp.ffn.w2.cols() != cfg.d_ff) fail("w2 shape");
        if (static_cast<int>(lp.ffn.b2.size()) != cfg.d_model()) fail("b2 shape");
    }
    if (p.final.v1.size() != p.final.v0_slope.size() || p.final.v1.size() != p.final.v0_bias.size())
        fail("final net shape");
    if (static_cast<int>(p.final.v1.size()) != cfg.J) fail("final net width != J");
}

void for_each_param(NetworkParams& p, const std::function<void(double&)>& f) {
    for (auto& lp : p.layers) {
        for (auto& hd : lp.heads) {
            for (double& v : hd.w_query.data()) f(v);
            for (double& v : hd.w_key.data()) f(v);
            for (double& v : hd.w_value.data()) f(v);
        }
        for (double& v : lp.ffn.w1.data()) f(v);
        for (double& v : lp.ffn.b1) f(v);
        for (double& v : lp.ffn.w2.data()) f(v);
        for (double& v : lp.ffn.b2) f(v);
    }
    for (double& v : p.final.v1) f(v);
    for (double& v : p.final.v0_slope) f(v);
    for (double& v : p.final.v0_bias) f(v);
}

void for_each_param(const NetworkParams& p, const std::function<void(double)>& f) {
    for_each_param(const_cast<NetworkParams&>(p), [&](double& v) { f(v); });
}

std::size_t param_count(const NetworkParams& p) {
    std::size_t n = 0;
    for_each_param(p, [&](double) { ++n; });
    return n;
}

void axpy(NetworkParams& p, double s, const NetworkParams& q) {
    std::vector<double> flat;
    flat.reserve(param_count(q));
    for_each_param(q, [&](double v) { flat.push_back(v); });
    std::size_t i = 0;
    for_each_param(p, [&](double& v) { v += s * flat[i++]; });
    if (i != flat.size()) throw std::invalid_argument("axpy: shape mismatch");
}

} // namespace hmtc
