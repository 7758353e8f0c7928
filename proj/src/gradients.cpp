#include "hmtc/gradients.hpp"

#include <cmath>

namespace hmtc {

NetworkParams network_backward(const NetworkParams& theta, const ModelConfig& cfg, const ForwardTrace& trace,
                               double output_grad) {
    NetworkParams grad = make_zero_network(cfg);
    const int dm = cfg.d_model();
    const int dv = cfg.d_v();

    // Final net. relu'(u) = 1 for u > 0, 0 otherwise (kinks take 0).
    double g_readout = 0.0;
    {
        const FinalNetWeights& fv = theta.final;
        for (size_t j = 0; j < fv.v1.size(); ++j) {
            const double pre = fv.v0_slope[j] * trace.readout + fv.v0_bias[j];
            const double act = pre > 0.0 ? pre : 0.0;
            grad.final.v1[j] = output_grad * act;
            if (pre > 0.0) {
                const double gpre = output_grad * fv.v1[j];
                grad.final.v0_slope[j] = gpre * trace.readout;
                grad.final.v0_bias[j] = gpre;
                g_readout += gpre * fv.v0_slope[j];
            }
        }
    }

    // Gradient w.r.t. the encoded sequences, walked backwards through the
    // layer pairs. gz is d(loss)/d(z_r), stored like an EncodedSequence.
    EncodedSequence gz(dm, cfg.l);
    gz.at(cfg.readout_component(), 0) = g_readout;

    std::vector<double> hidden(cfg.d_ff);
    std::vector<double> g_hidden(cfg.d_ff);
    std::vector<double> q(cfg.d_key), key(cfg.d_key), val(dv);
    std::vector<double> gq(cfg.d_key), gk(cfg.d_key), gv(dv);

    for (int r = cfg.N - 1; r >= 0; --r) {
        const LayerParams& lp = theta.layers[r];
        const EncodedSequence& y = trace.y_post[r]; // attention output, FFN input
        const EncodedSequence& z_in = trace.z[r];   // attention input

        // FFN backward (per token; residual passes gz through).
        EncodedSequence gy(dm, cfg.l);
        for (int tok = 0; tok < cfg.l; ++tok) {
            auto ycol = y.col(tok);
            matvec(lp.ffn.w1, ycol, hidden);
            for (int u = 0; u < cfg.d_ff; ++u) hidden[u] += lp.ffn.b1[u];

            auto gzcol = gz.col(tok);
            double* gycol = gy.col(tok).data();
            for (int c = 0; c < dm; ++c) gycol[c] = gzcol[c];

            for (int u = 0; u < cfg.d_ff; ++u) {
                double s = 0.0;
                for (int c = 0; c < dm; ++c) s += lp.ffn.w2(c, u) * gzcol[c];
                g_hidden[u] = hidden[u] > 0.0 ? s : 0.0;
            }
            FfnWeights& gffn = grad.layers[r].ffn;
            for (int c = 0; c < dm; ++c) {
                const double a = gzcol[c];
                gffn.b2[c] += a;
                auto grow = gffn.w2.row(c);
                for (int u = 0; u < cfg.d_ff; ++u) grow[u] += a * (hidden[u] > 0.0 ? hidden[u] : 0.0);
            }
            for (int u = 0; u < cfg.d_ff; ++u) {
                const double gu = g_hidden[u];
                if (gu == 0.0) continue;
                gffn.b1[u] += gu;
                auto grow = gffn.w1.row(u);
                for (int c = 0; c < dm; ++c) grow[c] += gu * ycol[c];
                auto w1row = lp.ffn.w1.row(u);
                for (int c = 0; c < dm; ++c) gycol[c] += gu * w1row[c];
            }
        }

        // Attention backward with frozen selections.
        EncodedSequence gz_prev = gy; // residual
        for (int s = 0; s < cfg.h; ++s) {
            const AttentionHead& hd = lp.heads[s];
            AttentionHead& ghd = grad.layers[r].heads[s];
            const int base = s * dv;
            for (int i = 0; i < cfg.l; ++i) {
                const int jh = trace.jhat[r][s][i];
                matvec(hd.w_query, z_in.col(i), q);
                matvec(hd.w_key, z_in.col(jh), key);
                matvec(hd.w_value, z_in.col(jh), val);
                const double score = dot(q, key);

                auto gycol = gy.col(i);
                double gscore = 0.0;
                for (int t = 0; t < dv; ++t) {
                    gv[t] = gycol[base + t] * score;
                    gscore += gycol[base + t] * val[t];
                }
                for (int t = 0; t < cfg.d_key; ++t) {
                    gq[t] = gscore * key[t];
                    gk[t] = gscore * q[t];
                }

                auto zi = z_in.col(i);
                auto zj = z_in.col(jh);
                double* gz_i = gz_prev.col(i).data();
                double* gz_j = gz_prev.col(jh).data();
                for (int t = 0; t < cfg.d_key; ++t) {
                    auto gqrow = ghd.w_query.row(t);
                    auto wqrow = hd.w_query.row(t);
                    const double a = gq[t];
                    for (int c = 0; c < dm; ++c) {
                        gqrow[c] += a * zi[c];
                        gz_i[c] += a * wqrow[c];
                    }
                    auto gkrow = ghd.w_key.row(t);
                    auto wkrow = hd.w_key.row(t);
                    const double b = gk[t];
                    for (int c = 0; c < dm; ++c) {
                        gkrow[c] += b * zj[c];
                        gz_j[c] += b * wkrow[c];
                    }
                }
                for (int t = 0; t < dv; ++t) {
                    auto gvrow = ghd.w_value.row(t);
                    auto wvrow = hd.w_value.row(t);
                    const double a = gv[t];
                    for (int c = 0; c < dm; ++c) {
                        gvrow[c] += a * zj[c];
                        gz_j[c] += a * wvrow[c];
                    }
                }
            }
        }
        gz = std::move(gz_prev);
    }

    return grad;
}

} // namespace hmtc
