#include "hmtc/forward.hpp"

#include <cmath>
#include <stdexcept>

namespace hmtc {

EncodedSequence encode_input(const Matrix& x, const ModelConfig& cfg) {
    cfg.validate();
    if (x.rows() != cfg.d || x.cols() != cfg.l)
        throw std::invalid_argument("encode_input: x must be d x l");
    for (double v : x.data())
        if (!std::isfinite(v)) throw std::invalid_argument("encode_input: non-finite input");

    EncodedSequence z(cfg.d_model(), cfg.l);
    for (int j = 0; j < cfg.l; ++j) {
        for (int s = 0; s < cfg.d; ++s) z.at(s, j) = x(s, j);
        z.at(cfg.ones_row(), j) = 1.0;
        z.at(cfg.pos_row(j), j) = 1.0;
        // components d+l+1 .. d_model-1 stay zero
    }
    return z;
}

namespace {

struct HeadScratch {
    std::vector<double> keys;  // d_key x l, key j at offset j*d_key
    std::vector<double> q;     // d_key
    std::vector<double> v;     // d_v
};

} // namespace

AttentionResult hardmax_attention_layer(const EncodedSequence& z_prev, const std::vector<AttentionHead>& heads,
                                        const ModelConfig& cfg) {
    const int l = z_prev.l;
    const int dm = z_prev.d_model;
    if (dm != cfg.d_model() || l != cfg.l)
        throw std::invalid_argument("hardmax_attention_layer: sequence shape mismatch");
    if (static_cast<int>(heads.size()) != cfg.h)
        throw std::invalid_argument("hardmax_attention_layer: need exactly h heads");

    AttentionResult out;
    out.y = z_prev; // residual
    out.jhat.assign(cfg.h, std::vector<int>(l, 0));

    HeadScratch sc;
    sc.keys.resize(static_cast<size_t>(cfg.d_key) * l);
    sc.q.resize(cfg.d_key);
    sc.v.resize(cfg.d_v());

    for (int s = 0; s < cfg.h; ++s) {
        const AttentionHead& hd = heads[s];
        if (hd.w_query.rows() != cfg.d_key || hd.w_query.cols() != dm || hd.w_key.rows() != cfg.d_key ||
            hd.w_key.cols() != dm || hd.w_value.rows() != cfg.d_v() || hd.w_value.cols() != dm)
            throw std::invalid_argument("hardmax_attention_layer: head shape mismatch");

        for (int j = 0; j < l; ++j)
            matvec(hd.w_key, z_prev.col(j), {sc.keys.data() + static_cast<size_t>(j) * cfg.d_key,
                                             static_cast<size_t>(cfg.d_key)});

        for (int i = 0; i < l; ++i) {
            matvec(hd.w_query, z_prev.col(i), sc.q);
            int best = 0;
            double best_score = 0.0;
            for (int j = 0; j < l; ++j) {
                double score = 0.0;
                const double* kj = sc.keys.data() + static_cast<size_t>(j) * cfg.d_key;
                for (int t = 0; t < cfg.d_key; ++t) score += sc.q[t] * kj[t];
                if (j == 0 || score > best_score) { // strict '>' keeps the smallest index on ties
                    best = j;
                    best_score = score;
                }
            }
            out.jhat[s][i] = best;
            matvec(hd.w_value, z_prev.col(best), sc.v);
            double* ycol = out.y.col(i).data();
            const int base = s * cfg.d_v();
            for (int t = 0; t < cfg.d_v(); ++t) ycol[base + t] += sc.v[t] * best_score;
        }
    }
    return out;
}

EncodedSequence pointwise_ffn_layer(const EncodedSequence& y, const FfnWeights& ffn) {
    const int dm = y.d_model;
    if (ffn.w1.cols() != dm || ffn.w2.rows() != dm || ffn.w1.rows() != static_cast<int>(ffn.b1.size()) ||
        ffn.w2.cols() != ffn.w1.rows() || static_cast<int>(ffn.b2.size()) != dm)
        throw std::invalid_argument("pointwise_ffn_layer: shape mismatch");

    const int dff = ffn.w1.rows();
    EncodedSequence z = y; // residual
    std::vector<double> hidden(dff);
    for (int tok = 0; tok < y.l; ++tok) {
        auto ycol = y.col(tok);
        matvec(ffn.w1, ycol, hidden);
        for (int u = 0; u < dff; ++u) hidden[u] = std::max(hidden[u] + ffn.b1[u], 0.0);
        double* zcol = z.col(tok).data();
        for (int r = 0; r < dm; ++r) {
            double s = 0.0;
            auto row = ffn.w2.row(r);
            for (int u = 0; u < dff; ++u) s += row[u] * hidden[u];
            zcol[r] += s + ffn.b2[r];
        }
    }
    return z;
}

double final_net(double u, const FinalNetWeights& v) {
    double s = 0.0;
    for (size_t j = 0; j < v.v1.size(); ++j) s += v.v1[j] * std::max(v.v0_slope[j] * u + v.v0_bias[j], 0.0);
    return s;
}

double network_forward(const Matrix& x, const NetworkParams& theta, const ModelConfig& cfg) {
    check_shapes(theta, cfg);
    EncodedSequence z = encode_input(x, cfg);
    for (int r = 0; r < cfg.N; ++r) {
        AttentionResult att = hardmax_attention_layer(z, theta.layers[r].heads, cfg);
        z = pointwise_ffn_layer(att.y, theta.layers[r].ffn);
    }
    return final_net(z.at(cfg.readout_component(), 0), theta.final);
}

double mixture_forward(const Matrix& x, const MixtureState& w, const std::vector<NetworkParams>& thetas,
                       const ModelConfig& cfg) {
    if (w.w.size() != thetas.size() || static_cast<int>(w.w.size()) != cfg.K)
        throw std::invalid_argument("mixture_forward: K mismatch");
    double s = 0.0;
    for (int k = 0; k < cfg.K; ++k) {
        if (w.w[k] == 0.0) continue; // projection leaves exact zeros; skip the dead networks
        s += w.w[k] * truncate(network_forward(x, thetas[k], cfg), cfg.beta);
    }
    return s;
}

double network_forward_traced(const Matrix& x, const NetworkParams& theta, const ModelConfig& cfg,
                              ForwardTrace& trace) {
    check_shapes(theta, cfg);
    trace = ForwardTrace{};
    trace.z.reserve(cfg.N + 1);
    trace.y_post.reserve(cfg.N);
    trace.jhat.reserve(cfg.N);
    trace.z.push_back(encode_input(x, cfg));

    std::vector<double> scores(cfg.l);
    std::vector<double> q(cfg.d_key);
    std::vector<double> key(cfg.d_key);

    for (int r = 0; r < cfg.N; ++r) {
        AttentionResult att = hardmax_attention_layer(trace.z.back(), theta.layers[r].heads, cfg);

        // Track the best-vs-second-best score gap for the margin report.
        // Heads with all-zero query and key matrices (head 1 is structurally
        // zeroed there) score identically zero for every token; their pinned
        // tie is not a differentiability hazard, so they are skipped.
        for (int s = 0; s < cfg.h && cfg.l > 1; ++s) {
            const AttentionHead& hd = theta.layers[r].heads[s];
            if (max_abs(hd.w_query.data()) == 0.0 && max_abs(hd.w_key.data()) == 0.0) continue;
            for (int i = 0; i < cfg.l; ++i) {
                matvec(hd.w_query, trace.z.back().col(i), q);
                double best = -1e300, second = -1e300;
                for (int j = 0; j < cfg.l; ++j) {
                    matvec(hd.w_key, trace.z.back().col(j), key);
                    double sc = dot(q, key);
                    if (sc > best) {
                        second = best;
                        best = sc;
                    } else if (sc > second) {
                        second = sc;
                    }
                }
                trace.min_argmax_gap = std::min(trace.min_argmax_gap, best - second);
            }
        }

        // FFN ReLU margins.
        const FfnWeights& ffn = theta.layers[r].ffn;
        std::vector<double> hidden(cfg.d_ff);
        for (int tok = 0; tok < cfg.l; ++tok) {
            matvec(ffn.w1, att.y.col(tok), hidden);
            for (int u = 0; u < cfg.d_ff; ++u)
                trace.min_relu_margin = std::min(trace.min_relu_margin, std::fabs(hidden[u] + ffn.b1[u]));
        }

        trace.jhat.push_back(std::move(att.jhat));
        trace.y_post.push_back(att.y);
        trace.z.push_back(pointwise_ffn_layer(att.y, ffn));
    }

    trace.readout = trace.z.back().at(cfg.readout_component(), 0);
    for (size_t j = 0; j < theta.final.v1.size(); ++j)
        trace.min_relu_margin = std::min(
            trace.min_relu_margin, std::fabs(theta.final.v0_slope[j] * trace.readout + theta.final.v0_bias[j]));
    trace.output = final_net(trace.readout, theta.final);
    return trace.output;
}

} // namespace hmtc
