#include "hmtc/mask.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "hmtc/rng.hpp"

namespace hmtc {

double InitConfig::range() const { return c4 * std::pow(n_nominal, c5); }

void InitConfig::validate(const ModelConfig& cfg) const {
    if (tau < cfg.l + 1 || tau > cfg.l + cfg.d + 1)
        throw std::invalid_argument("InitConfig: tau must lie in {l+1, ..., l+d+1}");
    if (c4 <= 0.0 || c5 < 0.0) throw std::invalid_argument("InitConfig: c4 > 0 and c5 >= 0 required");
    if (n_nominal < 1.0) throw std::invalid_argument("InitConfig: n_nominal >= 1 required");
}

namespace {

// Stream tags for the per-matrix roles. Draw and prune streams are separate
// so that the pruning choice never shifts the value draws.
enum Role : std::uint64_t {
    kQuery = 0,
    kKey = 1,
    kValue = 2,
    kW1 = 3,
    kB1 = 4,
    kW2 = 5,
    kB2 = 6,
    kV1 = 7,
    kV0Slope = 8,
    kV0Bias = 9,
    kPruneOffset = 100,
};

void draw_matrix(Matrix& m, RngStream base, double range) {
    for (int r = 0; r < m.rows(); ++r) {
        RngStream row_stream = base.child(static_cast<std::uint64_t>(r));
        for (int c = 0; c < m.cols(); ++c) m(r, c) = row_stream.next_uniform(range);
    }
}

void draw_vector(std::vector<double>& v, RngStream stream, double range) {
    for (double& x : v) x = stream.next_uniform(range);
}

// Chooses tau survivors without replacement (partial Fisher-Yates over the
// index set) and turns the rest of the line off.
void prune_line(std::vector<std::uint8_t*> line, int tau, RngStream stream) {
    const int len = static_cast<int>(line.size());
    if (tau > len) throw std::invalid_argument("init_network: tau exceeds a row length");
    std::vector<int> idx(len);
    std::iota(idx.begin(), idx.end(), 0);
    for (int i = 0; i < tau; ++i) {
        const int j = i + static_cast<int>(stream.next_below(static_cast<std::uint64_t>(len - i)));
        std::swap(idx[i], idx[j]);
    }
    for (int i = tau; i < len; ++i) *line[idx[i]] = 0;
}

void prune_rows(MaskMatrix& m, int tau, RngStream base) {
    for (int r = 0; r < m.rows; ++r) {
        std::vector<std::uint8_t*> line(m.cols);
        for (int c = 0; c < m.cols; ++c) line[c] = &m.at(r, c);
        prune_line(std::move(line), tau, base.child(static_cast<std::uint64_t>(r)));
    }
}

void prune_cols(MaskMatrix& m, int tau, RngStream base) {
    for (int c = 0; c < m.cols; ++c) {
        std::vector<std::uint8_t*> line(m.rows);
        for (int r = 0; r < m.rows; ++r) line[r] = &m.at(r, c);
        prune_line(std::move(line), tau, base.child(static_cast<std::uint64_t>(c)));
    }
}

void mask_matrix_apply(Matrix& m, const MaskMatrix& mask) {
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
            if (!mask.at(r, c)) m(r, c) = 0.0;
}

bool matrix_compliant(const Matrix& m, const MaskMatrix& mask) {
    for (int r = 0; r < m.rows(); ++r)
        for (int c = 0; c < m.cols(); ++c)
            if (!mask.at(r, c) && m(r, c) != 0.0) return false;
    return true;
}

} // namespace

std::pair<NetworkParams, NetworkMask> init_network(const ModelConfig& cfg, const InitConfig& icfg,
                                                   std::uint64_t network_index) {
    cfg.validate();
    icfg.validate(cfg);
    const double range = icfg.range();
    const int dm = cfg.d_model();

    NetworkParams p = make_zero_network(cfg);
    NetworkMask mask;
    mask.layers.resize(cfg.N);

    RngStream net_stream(icfg.seed, {network_index});

    for (int r = 0; r < cfg.N; ++r) {
        LayerParams& lp = p.layers[r];
        LayerMask& lm = mask.layers[r];
        lm.heads.resize(cfg.h);
        RngStream layer_stream = net_stream.child(static_cast<std::uint64_t>(r));

        for (int s = 0; s < cfg.h; ++s) {
            RngStream head_stream = layer_stream.child(1000 + static_cast<std::uint64_t>(s));
            draw_matrix(lp.heads[s].w_query, head_stream.child(kQuery), range);
            draw_matrix(lp.heads[s].w_key, head_stream.child(kKey), range);
            draw_matrix(lp.heads[s].w_value, head_stream.child(kValue), range);

            HeadMask& hm = lm.heads[s];
            hm.q = MaskMatrix(cfg.d_key, dm, 1);
            hm.k = MaskMatrix(cfg.d_key, dm, 1);
            hm.v = MaskMatrix(cfg.d_v(), dm, 1);
            prune_rows(hm.q, icfg.tau, head_stream.child(kPruneOffset + kQuery));
            prune_rows(hm.k, icfg.tau, head_stream.child(kPruneOffset + kKey));
            prune_rows(hm.v, icfg.tau, head_stream.child(kPruneOffset + kValue));

            // Structural zeros win over pruning.
            if (s == 0) {
                hm.q = MaskMatrix(cfg.d_key, dm, 0);
                hm.k = MaskMatrix(cfg.d_key, dm, 0);
            } else {
                for (int row : {cfg.d_key - 2, cfg.d_key - 1})
                    for (int c = cfg.d + cfg.l + 1; c < dm; ++c) {
                        hm.q.at(row, c) = 0;
                        hm.k.at(row, c) = 0;
                    }
            }
            mask_matrix_apply(lp.heads[s].w_query, hm.q);
            mask_matrix_apply(lp.heads[s].w_key, hm.k);
            mask_matrix_apply(lp.heads[s].w_value, hm.v);
        }

        RngStream ffn_stream = layer_stream.child(2000);
        draw_matrix(lp.ffn.w1, ffn_stream.child(kW1), range);
        draw_vector(lp.ffn.b1, ffn_stream.child(kB1), range);
        draw_matrix(lp.ffn.w2, ffn_stream.child(kW2), range);
        draw_vector(lp.ffn.b2, ffn_stream.child(kB2), range);

        lm.w1 = MaskMatrix(cfg.d_ff, dm, 1);
        lm.w2 = MaskMatrix(dm, cfg.d_ff, 1);
        prune_rows(lm.w1, icfg.tau, ffn_stream.child(kPruneOffset + kW1));
        prune_cols(lm.w2, icfg.tau, ffn_stream.child(kPruneOffset + kW2));
        // The FFN must never write into the data/ones/position components.
        for (int row = 0; row < cfg.d + cfg.l + 1; ++row)
            for (int c = 0; c < cfg.d_ff; ++c) lm.w2.at(row, c) = 0;
        mask_matrix_apply(lp.ffn.w1, lm.w1);
        mask_matrix_apply(lp.ffn.w2, lm.w2);
    }

    RngStream final_stream = net_stream.child(3000);
    draw_vector(p.final.v1, final_stream.child(kV1), range);
    draw_vector(p.final.v0_slope, final_stream.child(kV0Slope), range);
    draw_vector(p.final.v0_bias, final_stream.child(kV0Bias), range);

    return {std::move(p), std::move(mask)};
}

NetworkParams apply_mask(const NetworkParams& params, const NetworkMask& mask) {
    NetworkParams out = params;
    apply_mask_in_place(out, mask);
    return out;
}

void apply_mask_in_place(NetworkParams& params, const NetworkMask& mask) {
    if (params.layers.size() != mask.layers.size()) throw std::invalid_argument("apply_mask: layer count mismatch");
    for (size_t r = 0; r < params.layers.size(); ++r) {
        LayerParams& lp = params.layers[r];
        const LayerMask& lm = mask.layers[r];
        if (lp.heads.size() != lm.heads.size()) throw std::invalid_argument("apply_mask: head count mismatch");
        for (size_t s = 0; s < lp.heads.size(); ++s) {
            mask_matrix_apply(lp.heads[s].w_query, lm.heads[s].q);
            mask_matrix_apply(lp.heads[s].w_key, lm.heads[s].k);
            mask_matrix_apply(lp.heads[s].w_value, lm.heads[s].v);
        }
        mask_matrix_apply(lp.ffn.w1, lm.w1);
        mask_matrix_apply(lp.ffn.w2, lm.w2);
    }
}

bool mask_compliant(const NetworkParams& params, const NetworkMask& mask) {
    for (size_t r = 0; r < params.layers.size(); ++r) {
        const LayerParams& lp = params.layers[r];
        const LayerMask& lm = mask.layers[r];
        for (size_t s = 0; s < lp.heads.size(); ++s) {
            if (!matrix_compliant(lp.heads[s].w_query, lm.heads[s].q)) return false;
            if (!matrix_compliant(lp.heads[s].w_key, lm.heads[s].k)) return false;
            if (!matrix_compliant(lp.heads[s].w_value, lm.heads[s].v)) return false;
        }
        if (!matrix_compliant(lp.ffn.w1, lm.w1)) return false;
        if (!matrix_compliant(lp.ffn.w2, lm.w2)) return false;
    }
    return true;
}

namespace {

int row_nonzeros(const Matrix& m, int r) {
    int n = 0;
    for (int c = 0; c < m.cols(); ++c)
        if (m(r, c) != 0.0) ++n;
    return n;
}

int col_nonzeros(const Matrix& m, int c) {
    int n = 0;
    for (int r = 0; r < m.rows(); ++r)
        if (m(r, c) != 0.0) ++n;
    return n;
}

} // namespace

bool satisfies_structural_constraints(const NetworkParams& params, const ModelConfig& cfg, int tau,
                                      std::string* why) {
    auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    for (size_t r = 0; r < params.layers.size(); ++r) {
        const LayerParams& lp = params.layers[r];
        for (size_t s = 0; s < lp.heads.size(); ++s) {
            const AttentionHead& hd = lp.heads[s];
            for (const Matrix* m : {&hd.w_query, &hd.w_key, &hd.w_value})
                for (int row = 0; row < m->rows(); ++row)
                    if (row_nonzeros(*m, row) > tau)
                        return fail("head matrix row sparsity exceeds tau at layer " + std::to_string(r));
            if (s == 0) {
                for (const Matrix* m : {&hd.w_query, &hd.w_key})
                    for (double v : m->data())
                        if (v != 0.0) return fail("head 1 query/key must be zero at layer " + std::to_string(r));
            }
            for (const Matrix* m : {&hd.w_query, &hd.w_key})
                for (int row : {cfg.d_key - 2, cfg.d_key - 1})
                    for (int c = cfg.d + cfg.l + 1; c < cfg.d_model(); ++c)
                        if ((*m)(row, c) != 0.0)
                            return fail("query/key last-two-rows structural zero violated at layer " +
                                        std::to_string(r));
        }
        for (int row = 0; row < cfg.d_ff; ++row)
            if (row_nonzeros(lp.ffn.w1, row) > tau)
                return fail("w1 row sparsity exceeds tau at layer " + std::to_string(r));
        for (int c = 0; c < cfg.d_ff; ++c)
            if (col_nonzeros(lp.ffn.w2, c) > tau)
                return fail("w2 column sparsity exceeds tau at layer " + std::to_string(r));
        for (int row = 0; row < cfg.d + cfg.l + 1; ++row)
            for (int c = 0; c < cfg.d_ff; ++c)
                if (lp.ffn.w2(row, c) != 0.0)
                    return fail("w2 protected-row structural zero violated at layer " + std::to_string(r));
    }
    if (why) why->clear();
    return true;
}

} // namespace hmtc
