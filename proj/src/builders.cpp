#include "hmtc/builders.hpp"

#include <algorithm>
#include <cmath>
#include <initializer_list>
#include <stdexcept>

#include "hmtc/forward.hpp"
#include "hmtc/mask.hpp"
#include "hmtc/oracles.hpp"

namespace hmtc {

namespace {

int builder_tau(const ModelConfig& cfg) { return cfg.l + cfg.d + 1; }

double lemma9_threshold(const ModelConfig& cfg, int tau, double beta, double input_bound, double delta) {
    const double zb = std::max(input_bound, 1.0);
    return 168.0 * cfg.d_key * tau * tau * cfg.l * (std::fabs(beta) + 1.0) * zb * zb *
           std::max(delta * delta, 1.0);
}

AttentionHead make_product_head(const ModelConfig& cfg, int s0, int s1, int s2, int j, int k, int s3, double beta,
                                double B) {
    const int dm = cfg.d_model();
    AttentionHead hd = make_zero_head(cfg);

    // Query: row 0 picks component s1; the last two rows hold the -B gate on
    // the ones row and the "token > 0" indicator (their entries stay within
    // the first d+l+1 columns, as the structural zeros require).
    hd.w_query(0, s1) = 1.0;
    hd.w_query(cfg.d_key - 2, cfg.ones_row()) = -B;
    for (int i = 1; i < cfg.l; ++i) hd.w_query(cfg.d_key - 1, cfg.pos_row(i)) = 1.0;

    // Key: row 0 carries beta on the ones row plus component s2; the last two
    // rows hold the "token != j" indicator and the 2B bonus at token k.
    hd.w_key(0, cfg.ones_row()) = beta;
    hd.w_key(0, s2) += 1.0; // s2 == ones_row folds into a single entry
    for (int i = 0; i < cfg.l; ++i)
        if (i != j) hd.w_key(cfg.d_key - 2, cfg.pos_row(i)) = 1.0;
    hd.w_key(cfg.d_key - 1, cfg.pos_row(k)) = 2.0 * B;

    // Value: unit vector into the slab position of s3, keyed to token j.
    hd.w_value(s3 - s0 * cfg.d_v(), cfg.pos_row(j)) = 1.0;
    (void)dm;
    return hd;
}

// Sequentially allocates FFN hidden units for the small gadgets.
class FfnComposer {
  public:
    explicit FfnComposer(const ModelConfig& cfg) : cfg_(cfg), ffn_(make_zero_ffn(cfg)) {}

    int add_neuron(std::initializer_list<std::pair<int, double>> w1_entries) {
        if (next_ >= cfg_.d_ff) throw std::invalid_argument("builder: infeasible head budget (d_ff exhausted)");
        const int n = next_++;
        for (auto [comp, coeff] : w1_entries) ffn_.w1(n, comp) = coeff;
        return n;
    }

    int add_neuron_list(const std::vector<std::pair<int, double>>& w1_entries) {
        if (next_ >= cfg_.d_ff) throw std::invalid_argument("builder: infeasible head budget (d_ff exhausted)");
        const int n = next_++;
        for (auto [comp, coeff] : w1_entries) ffn_.w1(n, comp) = coeff;
        return n;
    }

    void write(int row, int neuron, double coeff) { ffn_.w2(row, neuron) += coeff; }

    // comp := 0. One unit when the current value is known nonnegative,
    // otherwise the two-sided cancellation.
    void kill(int comp, bool known_nonneg) {
        const int np = add_neuron({{comp, 1.0}});
        write(comp, np, -1.0);
        if (!known_nonneg) {
            const int nm = add_neuron({{comp, -1.0}});
            write(comp, nm, 1.0);
        }
    }

    // comp := max(comp, 0), using y + relu(-y) = relu(y).
    void relu_in_place(int comp) {
        const int n = add_neuron({{comp, -1.0}});
        write(comp, n, 1.0);
    }

    // dst += sum of entries (component, coefficient), via a +/- unit pair.
    void add_linear(int dst, const std::vector<std::pair<int, double>>& entries) {
        std::vector<std::pair<int, double>> neg;
        neg.reserve(entries.size());
        for (auto [c, a] : entries) neg.emplace_back(c, -a);
        const int np = add_neuron_list(entries);
        const int nm = add_neuron_list(neg);
        write(dst, np, 1.0);
        write(dst, nm, -1.0);
    }

    FfnWeights take() { return std::move(ffn_); }

    int used() const { return next_; }

  private:
    const ModelConfig& cfg_;
    FfnWeights ffn_;
    int next_ = 0;
};

// One multiplicative step of a product program. beta shifts the source
// (beta = -u realizes the truncated factor), relu applies the positive part
// after the multiplication.
struct FactorOp {
    int src_component = 0;
    int src_token = 0;
    double beta = 0.0;
    bool relu = false;
};

struct BlockSpec {
    std::vector<std::vector<FactorOp>> programs; // per term, equal lengths
    std::vector<double> alphas;                  // per term
    int target_component = 0;
    bool cleanup = true;
};

int block_layer_count(const BlockSpec& b) {
    const int F = b.programs.empty() ? 0 : static_cast<int>(b.programs.front().size());
    return F + 1 + (b.cleanup ? 1 : 0);
}

// Active terms occupy heads 1 .. n; head 0 stays inert (its query/key are
// structurally zero, so its argmax degenerates to token 0 with value 0).
void emit_block(const ModelConfig& cfg, const BlockSpec& block, const std::vector<double>& input_bounds,
                int global_layer_offset, int tau, std::vector<LayerParams>& out,
                std::vector<double>* B_schedule) {
    const int n_terms = static_cast<int>(block.programs.size());
    if (n_terms > cfg.h - 1) throw std::invalid_argument("builder: infeasible head budget (more terms than heads)");
    if (cfg.l < 2) throw std::invalid_argument("builder: sequence length must be at least 2");
    const int F = n_terms == 0 ? 0 : static_cast<int>(block.programs.front().size());
    for (const auto& p : block.programs)
        if (static_cast<int>(p.size()) != F) throw std::invalid_argument("builder: ragged factor programs");

    auto slot = [&](int head, int f) { return f % 2 == 0 ? cfg.scratch_a(head) : cfg.scratch_b(head); };
    auto bound_at = [&](int g) {
        return g < static_cast<int>(input_bounds.size()) ? std::max(input_bounds[g], 1.0) : 1.0;
    };

    for (int f = 0; f < F; ++f) {
        LayerParams lp = make_zero_layer(cfg);
        const double zb = bound_at(global_layer_offset + f);
        double bmax = 0.0;
        for (int t = 0; t < n_terms; ++t) {
            const int s = 1 + t;
            const FactorOp& op = block.programs[t][f];
            const int src_acc = f == 0 ? cfg.ones_row() : slot(s, f - 1);
            const int k_tok = op.src_token == 0 ? 1 : 0;
            const double B = 4.0 * lemma9_threshold(cfg, tau, op.beta, zb, 0.0);
            bmax = std::max(bmax, B);
            lp.heads[s] = make_product_head(cfg, s, src_acc, op.src_component, op.src_token, k_tok, slot(s, f),
                                            op.beta, B);
        }
        if (B_schedule) B_schedule->push_back(bmax);

        FfnComposer fc(cfg);
        for (int t = 0; t < n_terms; ++t) {
            const int s = 1 + t;
            if (block.programs[t][f].relu) fc.relu_in_place(slot(s, f));
            if (f >= 1) fc.kill(slot(s, f - 1), /*known_nonneg=*/block.programs[t][f - 1].relu);
        }
        lp.ffn = fc.take();
        out.push_back(std::move(lp));
    }

    // Sum layer: inert attention, then target := sum_t alpha_t * acc_t with
    // the accumulator reads grouped tau entries per hidden unit.
    {
        LayerParams lp = make_zero_layer(cfg);
        FfnComposer fc(cfg);
        fc.kill(block.target_component, false);
        std::vector<std::pair<int, double>> group;
        for (int t = 0; t < n_terms; ++t) {
            group.emplace_back(slot(1 + t, F - 1), block.alphas[t]);
            if (static_cast<int>(group.size()) == tau || t == n_terms - 1) {
                fc.add_linear(block.target_component, group);
                group.clear();
            }
        }
        lp.ffn = fc.take();
        out.push_back(std::move(lp));
    }

    if (block.cleanup) {
        LayerParams lp = make_zero_layer(cfg);
        FfnComposer fc(cfg);
        for (int t = 0; t < n_terms; ++t) fc.kill(slot(1 + t, F - 1), false);
        lp.ffn = fc.take();
        out.push_back(std::move(lp));
    }
}

std::vector<LayerParams> emit_plan(const ModelConfig& cfg, const std::vector<BlockSpec>& blocks, int copy_src,
                                   const std::vector<double>& input_bounds, int tau,
                                   std::vector<double>* B_schedule) {
    std::vector<LayerParams> layers;
    if (B_schedule) B_schedule->clear();
    int offset = 0;
    for (const auto& b : blocks) {
        emit_block(cfg, b, input_bounds, offset, tau, layers, B_schedule);
        offset += block_layer_count(b);
    }
    if (copy_src >= 0) {
        LayerParams lp = make_zero_layer(cfg);
        lp.ffn = build_lemma10_ffn(cfg, cfg.readout_component(), copy_src, 1.0, Lemma10Variant::identity);
        layers.push_back(std::move(lp));
    }
    return layers;
}

// Runs the emitted layers on one encoded input, optionally folding the
// per-layer input sup-norms into `bounds`.
EncodedSequence run_layers(const ModelConfig& cfg, EncodedSequence z, const std::vector<LayerParams>& layers,
                           std::vector<double>* bounds) {
    for (size_t r = 0; r < layers.size(); ++r) {
        if (bounds) (*bounds)[r] = std::max((*bounds)[r], max_abs(z.z));
        AttentionResult att = hardmax_attention_layer(z, layers[r].heads, cfg);
        z = pointwise_ffn_layer(att.y, layers[r].ffn);
    }
    return z;
}

GridSpec default_box_grid(int dim, double A, double target_points) {
    GridSpec g;
    const int per_dim = std::max(3, static_cast<int>(std::ceil(std::pow(target_points, 1.0 / dim))));
    g.counts.assign(dim, per_dim);
    g.lo.assign(dim, -A);
    g.hi.assign(dim, A);
    return g;
}

Matrix coords_to_input(std::span<const double> x, const ModelConfig& cfg) {
    Matrix m(cfg.d, cfg.l);
    for (int j = 0; j < cfg.l; ++j)
        for (int i = 0; i < cfg.d; ++i) m(i, j) = x[static_cast<size_t>(j) * cfg.d + i];
    return m;
}

// Factor schedule for one tensor-product term: truncated-power coordinates
// first so the positive-part gadget always sees a nonnegative accumulator,
// then the monomial coordinates (identity gadgets carry any sign).
std::vector<FactorOp> schedule_term(const std::vector<int>& exponents,
                                    const std::vector<SplineBasisSpec>& dim_basis,
                                    const std::vector<std::pair<int, int>>& sources, int degree,
                                    const ModelConfig& cfg) {
    const size_t dims = exponents.size();
    std::vector<size_t> order;
    for (size_t d = 0; d < dims; ++d)
        if (exponents[d] > dim_basis[d].degree) order.push_back(d);
    for (size_t d = 0; d < dims; ++d)
        if (exponents[d] <= dim_basis[d].degree) order.push_back(d);

    std::vector<FactorOp> ops;
    ops.reserve(dims * static_cast<size_t>(degree));
    for (size_t od : order) {
        const int e = exponents[od];
        const auto [comp, tok] = sources[od];
        if (e <= dim_basis[od].degree) {
            for (int m = 0; m < degree; ++m) {
                if (m < e)
                    ops.push_back({comp, tok, 0.0, false}); // multiply by x
                else
                    ops.push_back({cfg.ones_row(), 0, 0.0, false}); // multiply by 1
            }
        } else {
            const double u = dim_basis[od].knots[static_cast<size_t>(e - dim_basis[od].degree - 1)];
            for (int m = 0; m < degree; ++m) ops.push_back({comp, tok, -u, true}); // multiply by (x-u)_+
        }
    }
    return ops;
}

double measure_eps_admissible(const std::vector<double>& bounds, int tau) {
    double eps = 1.0;
    for (double z : bounds) {
        const double zb = std::max(z, 1.0);
        eps = std::min(eps, 1.0 / (36.0 * tau * zb * zb));
    }
    return eps;
}

double predicted_growth(const ModelConfig& cfg, const std::vector<double>& bounds,
                        const std::vector<double>& B_schedule, double max_alpha, int tau) {
    // First-order estimate: each factor layer contributes the lemma's
    // attention coefficient, amplified by the FFN factor of every later layer.
    const double cap = 1e300;
    double total = 0.0;
    double amp_tail = 1.0;
    for (int f = static_cast<int>(B_schedule.size()) - 1; f >= 0; --f) {
        const double zb = std::max(f < static_cast<int>(bounds.size()) ? bounds[f] : 1.0, 1.0);
        const double attn = 136.0 * cfg.d_key * std::pow(tau, 3) * cfg.l * zb * zb * zb * B_schedule[f];
        total = std::min(cap, total + std::min(cap, attn * amp_tail));
        const double ffn_amp = 5.0 * cfg.d_ff * std::max(max_alpha, 1.0) * (zb + 1.0) * cfg.d_model();
        amp_tail = std::min(cap, amp_tail * ffn_amp);
    }
    return total;
}

} // namespace

AttentionHead build_lemma9_head(const ModelConfig& cfg, int s0, int s1, int s2, int j, int k, int s3, double beta,
                                double B, double input_bound, Lemma9Certificate* certificate) {
    cfg.validate();
    const int dm = cfg.d_model();
    if (s0 < 0 || s0 >= cfg.h) throw std::invalid_argument("build_lemma9_head: head index out of range");
    if (s1 < 0 || s1 >= dm || s2 < 0 || s2 >= dm)
        throw std::invalid_argument("build_lemma9_head: source component out of range");
    if (j < 0 || j >= cfg.l || k < 0 || k >= cfg.l || j == k)
        throw std::invalid_argument("build_lemma9_head: need distinct tokens j != k");
    if (s3 < s0 * cfg.d_v() || s3 >= (s0 + 1) * cfg.d_v())
        throw std::invalid_argument("build_lemma9_head: target outside the head slab");
    if (!(input_bound > 0.0)) throw std::invalid_argument("build_lemma9_head: input bound must be positive");

    const int tau = builder_tau(cfg);
    const double threshold = lemma9_threshold(cfg, tau, beta, input_bound, 0.0);
    if (B < threshold)
        throw std::invalid_argument("build_lemma9_head: B below the admissible threshold " +
                                    std::to_string(threshold));

    if (certificate) {
        certificate->B = B;
        certificate->beta = beta;
        certificate->input_bound = input_bound;
        certificate->threshold = threshold;
        certificate->tau = tau;
        const double zb = std::max(input_bound, 1.0);
        certificate->eps_admissible = std::min(1.0, 1.0 / (36.0 * tau * zb * zb));
        certificate->delta_admissible = std::sqrt(B / threshold);
    }
    return make_product_head(cfg, s0, s1, s2, j, k, s3, beta, B);
}

FfnWeights build_lemma10_ffn(const ModelConfig& cfg, int j1, int j2, double alpha, Lemma10Variant variant) {
    const int dm = cfg.d_model();
    if (cfg.d_ff < 4) throw std::invalid_argument("build_lemma10_ffn: d_ff must be at least 4");
    if (j1 < 0 || j1 >= dm || j2 < 0 || j2 >= dm || j1 == j2)
        throw std::invalid_argument("build_lemma10_ffn: need distinct components");

    FfnWeights ffn = make_zero_ffn(cfg);
    // Hidden units: relu(y_j1), relu(-y_j1), relu(y_j2), relu(-y_j2).
    ffn.w1(0, j1) = 1.0;
    ffn.w1(1, j1) = -1.0;
    ffn.w1(2, j2) = 1.0;
    ffn.w1(3, j2) = -1.0;
    ffn.w2(j1, 0) = -1.0;
    ffn.w2(j1, 1) = 1.0;
    ffn.w2(j1, 2) = alpha;
    if (variant == Lemma10Variant::identity) ffn.w2(j1, 3) = -alpha;
    ffn.w2(j2, 2) = -1.0;
    ffn.w2(j2, 3) = 1.0;
    return ffn;
}

BuiltEncoder build_spline_product_encoder(const ModelConfig& cfg, const SplineBasisSpec& basis,
                                          const ProductTermSpec& terms, int target_component) {
    cfg.validate();
    basis.validate();
    if (basis.degree < 1) throw std::invalid_argument("build_spline_product_encoder: basis degree must be >= 1");
    const int dl = cfg.d * cfg.l;
    if (target_component < cfg.d + cfg.l + 3 || target_component >= cfg.I)
        throw std::invalid_argument("build_spline_product_encoder: target outside the free component range");
    if (static_cast<int>(terms.terms.size()) > cfg.h - 1)
        throw std::invalid_argument("build_spline_product_encoder: infeasible head budget");
    for (const auto& t : terms.terms) {
        if (static_cast<int>(t.exponents.size()) != dl)
            throw std::invalid_argument("build_spline_product_encoder: exponent list must have d*l entries");
        for (int e : t.exponents)
            if (e < 0 || e >= basis.size())
                throw std::invalid_argument("build_spline_product_encoder: basis index out of range");
    }

    const int tau = builder_tau(cfg);
    std::vector<SplineBasisSpec> dim_basis(dl, basis);
    std::vector<std::pair<int, int>> sources(dl);
    for (int k = 0; k < dl; ++k) sources[k] = {k % cfg.d, k / cfg.d};

    ProductTermSpec padded = terms;
    if (padded.terms.empty()) padded.terms.push_back({0.0, std::vector<int>(dl, 0)});

    BlockSpec block;
    block.target_component = target_component;
    block.cleanup = false; // the contract is degree*(d*l) + 1 pairs
    double max_alpha = 0.0;
    for (const auto& t : padded.terms) {
        block.programs.push_back(schedule_term(t.exponents, dim_basis, sources, basis.degree, cfg));
        block.alphas.push_back(t.alpha);
        max_alpha = std::max(max_alpha, std::fabs(t.alpha));
    }
    // Degenerate term list still emits the full layer budget.
    const int F = basis.degree * dl;
    for (auto& p : block.programs)
        if (static_cast<int>(p.size()) != F)
            throw std::invalid_argument("build_spline_product_encoder: internal schedule length mismatch");

    const std::vector<BlockSpec> plan{block};

    // Pass 1: provisional weights to measure the per-layer value bounds.
    std::vector<LayerParams> layers = emit_plan(cfg, plan, -1, {}, tau, nullptr);
    GridSpec grid = default_box_grid(dl, basis.A, 300.0);
    std::vector<double> bounds(layers.size(), 0.0);
    for (std::size_t g = 0; g < grid.total(); ++g) {
        const auto x = grid.point(g);
        run_layers(cfg, encode_input(coords_to_input(x, cfg), cfg), layers, &bounds);
    }

    // Pass 2: re-emit with the B schedule from the measured bounds, then
    // validate against the brute-force basis-product oracle.
    BuiltEncoder built;
    built.layers = emit_plan(cfg, plan, -1, bounds, tau, &built.certificate.B_schedule);
    double sup_err = 0.0;
    for (std::size_t g = 0; g < grid.total(); ++g) {
        const auto x = grid.point(g);
        EncodedSequence z = run_layers(cfg, encode_input(coords_to_input(x, cfg), cfg), built.layers, nullptr);
        double oracle = 0.0;
        for (const auto& t : terms.terms) {
            double prod = t.alpha;
            for (int k = 0; k < dl; ++k) prod *= truncated_power_basis(x[k], basis, t.exponents[k]);
            oracle += prod;
        }
        sup_err = std::max(sup_err, std::fabs(z.at(target_component, 0) - oracle));
    }

    built.certificate.measured_sup_error = sup_err;
    built.certificate.measured_input_bound = bounds.empty() ? 1.0 : *std::max_element(bounds.begin(), bounds.end());
    built.certificate.eps_admissible = measure_eps_admissible(bounds, tau);
    built.certificate.delta_admissible = 2.0; // B is 4x the delta = 0 threshold
    built.certificate.predicted_error_per_eps =
        predicted_growth(cfg, bounds, built.certificate.B_schedule, max_alpha, tau);
    nlohmann::json cmap;
    cmap["target"] = target_component;
    cmap["final_accumulator_parity"] = (F - 1) % 2 == 0 ? "scratch_a" : "scratch_b";
    for (size_t t = 0; t < padded.terms.size(); ++t) {
        nlohmann::json hj;
        hj["head"] = 1 + static_cast<int>(t);
        hj["scratch_a"] = cfg.scratch_a(1 + static_cast<int>(t));
        hj["scratch_b"] = cfg.scratch_b(1 + static_cast<int>(t));
        cmap["heads"].push_back(hj);
    }
    built.certificate.component_map = std::move(cmap);
    return built;
}

namespace {

struct NodePlanInternal {
    const HierarchicalModelSpec::Node* node = nullptr;
    int index = 0;
    std::vector<std::pair<int, int>> sources; // (component, token) per input
    std::vector<SplineBasisSpec> dim_basis;
    std::vector<std::vector<int>> term_exponents;
    std::vector<double> alphas;
    int degree = 1;
    double fit_sup_error = 0.0;
    int first_layer = 0;
    int layer_count = 0;
};

int assign_postorder(const HierarchicalModelSpec::Node& n, std::vector<const HierarchicalModelSpec::Node*>& order) {
    if (n.is_leaf) return -1;
    for (const auto& c : n.children) assign_postorder(c, order);
    order.push_back(&n);
    return static_cast<int>(order.size()) - 1;
}

} // namespace

BuiltNetwork build_hierarchical_approximator(const HierarchicalModelSpec& spec, int h_budget,
                                             const ModelConfig& cfg) {
    cfg.validate();
    const int dl = cfg.d * cfg.l;
    spec.validate(dl);
    if (h_budget < 2) throw std::invalid_argument("build_hierarchical_approximator: budget h too small");
    const int max_terms = std::min(h_budget, cfg.h) - 1;

    // Wrap a bare coordinate pick into a single linear node so level-0 specs
    // go through the same machinery.
    HierarchicalModelSpec::Node root = spec.root;
    if (root.is_leaf) {
        HierarchicalModelSpec::Node wrap;
        wrap.is_leaf = false;
        wrap.g = "sum";
        wrap.p_smoothness = 2.0;
        wrap.children.push_back(root);
        root = wrap;
    }

    std::vector<const HierarchicalModelSpec::Node*> postorder;
    assign_postorder(root, postorder);
    const int n_nodes = static_cast<int>(postorder.size());
    if (cfg.I < cfg.d + cfg.l + 4 + n_nodes)
        throw std::invalid_argument("build_hierarchical_approximator: I too small for the reserved components");

    const int tau = builder_tau(cfg);
    const double A = spec.bound_A;

    // Per-node plans, children first. Child nodes are found by pointer.
    std::vector<NodePlanInternal> plans(n_nodes);
    std::vector<BlockSpec> blocks;
    auto node_index_of = [&](const HierarchicalModelSpec::Node* n) {
        for (int i = 0; i < n_nodes; ++i)
            if (postorder[i] == n) return i;
        throw std::logic_error("node not in postorder");
    };

    int layer_cursor = 0;
    for (int idx = 0; idx < n_nodes; ++idx) {
        NodePlanInternal& plan = plans[idx];
        plan.node = postorder[idx];
        plan.index = idx;
        const auto& node = *plan.node;
        const int arity = static_cast<int>(node.children.size());

        // Source location and fit interval per input.
        std::vector<double> lo(arity), hi(arity);
        for (int c = 0; c < arity; ++c) {
            const auto& child = node.children[c];
            if (child.is_leaf) {
                plan.sources.emplace_back(child.coordinate % cfg.d, child.coordinate / cfg.d);
                lo[c] = -A;
                hi[c] = A;
            } else {
                const int ci = node_index_of(&child);
                plan.sources.emplace_back(cfg.reserved_component(ci), 0);
                const double b = node_value_bound(child, A);
                lo[c] = -b - 1.0;
                hi[c] = b + 1.0;
            }
        }

        // Basis size from the head budget: per-dim count, degree capped so at
        // least the constant and linear functions fit.
        const int per_dim = static_cast<int>(std::floor(std::pow(static_cast<double>(max_terms), 1.0 / arity)));
        const int desired_degree = std::clamp(static_cast<int>(std::floor(node.p_smoothness)), 1, 3);
        const int degree = std::min(desired_degree, per_dim - 1);
        if (degree < 1)
            throw std::invalid_argument("build_hierarchical_approximator: budget h too small for node degree");
        const int n_knots = per_dim - degree - 1;
        plan.degree = degree;
        for (int c = 0; c < arity; ++c)
            plan.dim_basis.push_back(SplineBasisSpec::equidistant(degree, n_knots, lo[c], hi[c]));

        // Tensor-product exponents and a least-squares fit of g on a 4x
        // oversampled uniform grid over the fit box.
        int total_terms = 1;
        for (int c = 0; c < arity; ++c) total_terms *= plan.dim_basis[c].size();
        std::vector<int> exps(arity, 0);
        for (int t = 0; t < total_terms; ++t) {
            plan.term_exponents.push_back(exps);
            for (int c = 0; c < arity; ++c) {
                if (++exps[c] < plan.dim_basis[c].size()) break;
                exps[c] = 0;
            }
        }

        GridSpec fit_grid;
        const int pts = std::max(per_dim + 1,
                                 static_cast<int>(std::ceil(std::pow(4.0 * total_terms, 1.0 / arity))));
        fit_grid.counts.assign(arity, pts);
        fit_grid.lo = lo;
        fit_grid.hi = hi;
        const auto& g = smooth_function(node.g);
        Matrix design(static_cast<int>(fit_grid.total()), total_terms);
        std::vector<double> rhs(fit_grid.total());
        for (std::size_t row = 0; row < fit_grid.total(); ++row) {
            const auto args = fit_grid.point(row);
            rhs[row] = g.eval(args, node.g_params);
            for (int t = 0; t < total_terms; ++t) {
                double prod = 1.0;
                for (int c = 0; c < arity; ++c)
                    prod *= truncated_power_basis(args[c], plan.dim_basis[c], plan.term_exponents[t][c]);
                design(static_cast<int>(row), t) = prod;
            }
        }
        plan.alphas = least_squares(design, rhs);
        for (std::size_t row = 0; row < fit_grid.total(); ++row) {
            double fitted = 0.0;
            for (int t = 0; t < total_terms; ++t) fitted += design(static_cast<int>(row), t) * plan.alphas[t];
            plan.fit_sup_error = std::max(plan.fit_sup_error, std::fabs(fitted - rhs[row]));
        }

        BlockSpec block;
        block.target_component = cfg.reserved_component(idx);
        block.cleanup = true;
        for (int t = 0; t < total_terms; ++t) {
            block.programs.push_back(schedule_term(plan.term_exponents[t], plan.dim_basis, plan.sources, degree, cfg));
            block.alphas.push_back(plan.alphas[t]);
        }
        plan.first_layer = layer_cursor;
        plan.layer_count = block_layer_count(block);
        layer_cursor += plan.layer_count;
        blocks.push_back(std::move(block));
    }

    const int copy_src = cfg.reserved_component(n_nodes - 1);
    const int layers_needed = layer_cursor + 1;
    if (cfg.N < layers_needed)
        throw std::invalid_argument("build_hierarchical_approximator: cfg.N must be at least " +
                                    std::to_string(layers_needed));

    // Pass 1 with provisional B, measure bounds, re-emit.
    std::vector<LayerParams> layers = emit_plan(cfg, blocks, copy_src, {}, tau, nullptr);
    GridSpec grid = default_box_grid(dl, A, 600.0);
    std::vector<double> bounds(layers.size(), 0.0);
    for (std::size_t gidx = 0; gidx < grid.total(); ++gidx) {
        const auto x = grid.point(gidx);
        run_layers(cfg, encode_input(coords_to_input(x, cfg), cfg), layers, &bounds);
    }

    BuiltNetwork built;
    std::vector<LayerParams> final_layers = emit_plan(cfg, blocks, copy_src, bounds, tau,
                                                      &built.certificate.B_schedule);

    // Validation pass: per-node and end-to-end sup errors on the grid.
    std::vector<double> node_err(n_nodes, 0.0);
    double sup_err = 0.0;
    for (std::size_t gidx = 0; gidx < grid.total(); ++gidx) {
        const auto x = grid.point(gidx);
        EncodedSequence z = run_layers(cfg, encode_input(coords_to_input(x, cfg), cfg), final_layers, nullptr);
        for (int idx = 0; idx < n_nodes; ++idx) {
            const double oracle = eval_hierarchical_node(*postorder[idx], x);
            const int comp = idx == n_nodes - 1 ? cfg.readout_component() : cfg.reserved_component(idx);
            node_err[idx] = std::max(node_err[idx], std::fabs(z.at(comp, 0) - oracle));
        }
        sup_err = std::max(sup_err, std::fabs(z.at(cfg.readout_component(), 0) - eval_hierarchical_node(root, x)));
    }

    // Assemble the full parameter set: emitted layers, identity padding, and
    // the two-unit identity readout net.
    built.params = make_zero_network(cfg);
    for (size_t r = 0; r < final_layers.size(); ++r) built.params.layers[r] = std::move(final_layers[r]);
    if (cfg.J < 2) throw std::invalid_argument("build_hierarchical_approximator: J must be at least 2");
    built.params.final.v1[0] = 1.0;
    built.params.final.v0_slope[0] = 1.0;
    built.params.final.v1[1] = -1.0;
    built.params.final.v0_slope[1] = -1.0;

    built.certificate.layers_used = layers_needed;
    built.certificate.measured_sup_error = sup_err;
    built.certificate.measured_input_bound =
        bounds.empty() ? 1.0 : *std::max_element(bounds.begin(), bounds.end());
    built.certificate.eps_admissible = measure_eps_admissible(bounds, tau);
    nlohmann::json cmap;
    cmap["readout"] = cfg.readout_component();
    for (int idx = 0; idx < n_nodes; ++idx) {
        nlohmann::json nj;
        nj["node"] = idx;
        nj["g"] = postorder[idx]->g;
        nj["component"] = cfg.reserved_component(idx);
        nj["first_layer"] = plans[idx].first_layer;
        nj["layer_count"] = plans[idx].layer_count;
        cmap["nodes"].push_back(nj);

        NodeReport rep;
        rep.node_index = idx;
        rep.target_component = cfg.reserved_component(idx);
        rep.first_layer = plans[idx].first_layer;
        rep.layer_count = plans[idx].layer_count;
        rep.term_count = static_cast<int>(plans[idx].alphas.size());
        rep.degree = plans[idx].degree;
        rep.fit_sup_error = plans[idx].fit_sup_error;
        rep.measured_sup_error = node_err[idx];
        built.certificate.nodes.push_back(rep);
    }
    built.certificate.component_map = std::move(cmap);
    return built;
}

FinalNetWeights build_logit_head(int Kgrid) {
    if (Kgrid < 6) throw std::invalid_argument("build_logit_head: Kgrid must be at least 6");
    const double K = static_cast<double>(Kgrid);
    auto logit_at = [&](int k) {
        const double z = static_cast<double>(k) / K;
        return std::log(z / (1.0 - z));
    };

    FinalNetWeights net;
    const int n_units = 3 * (Kgrid + 3);
    net.v1.reserve(n_units);
    net.v0_slope.reserve(n_units);
    net.v0_bias.reserve(n_units);

    // Hat k spans ((k-1)/K, (k+1)/K) and is built from three units
    // relu(K z - (k-1)) - 2 relu(K z - k) + relu(K z - (k+1)), weighted by
    // the clamped logit value a_k. The three units whose kink sits past
    // z = 1 are rescaled (positively homogeneous, so the function is
    // unchanged) to keep every weight within [-K, K].
    for (int k = -1; k <= Kgrid + 1; ++k) {
        const double a = logit_at(std::clamp(k, 1, Kgrid - 1));
        const double outer[3] = {a, -2.0 * a, a};
        for (int o = -1; o <= 1; ++o) {
            const int t = k + o;
            double slope = K;
            double bias = -static_cast<double>(t);
            double weight = outer[o + 1];
            if (std::abs(t) > Kgrid) {
                const double gamma = std::fabs(static_cast<double>(t)) / K;
                slope /= gamma;
                bias /= gamma;
                weight *= gamma;
            }
            net.v1.push_back(weight);
            net.v0_slope.push_back(slope);
            net.v0_bias.push_back(bias);
        }
    }
    return net;
}

BuiltNetwork assemble_theorem1_network(const HierarchicalModelSpec& spec, const ModelConfig& cfg, int Kgrid) {
    BuiltNetwork built = build_hierarchical_approximator(spec, cfg.h, cfg);
    FinalNetWeights logit = build_logit_head(Kgrid);
    const int needed = static_cast<int>(logit.v1.size());
    if (cfg.J < needed)
        throw std::invalid_argument("assemble_theorem1_network: J must be at least " + std::to_string(needed));
    built.params.final.v1.assign(cfg.J, 0.0);
    built.params.final.v0_slope.assign(cfg.J, 0.0);
    built.params.final.v0_bias.assign(cfg.J, 0.0);
    for (int i = 0; i < needed; ++i) {
        built.params.final.v1[i] = logit.v1[i];
        built.params.final.v0_slope[i] = logit.v0_slope[i];
        built.params.final.v0_bias[i] = logit.v0_bias[i];
    }
    built.certificate.component_map["logit_grid"] = Kgrid;
    return built;
}

nlohmann::json HierarchicalCertificate::to_json() const {
    nlohmann::json j;
    j["admissible_eps"] = eps_admissible;
    j["measured_sup_error"] = measured_sup_error;
    j["measured_input_bound"] = measured_input_bound;
    j["B_schedule"] = B_schedule;
    j["component_map"] = component_map;
    j["layers_used"] = layers_used;
    auto arr = nlohmann::json::array();
    for (const auto& n : nodes) {
        nlohmann::json nj;
        nj["node"] = n.node_index;
        nj["component"] = n.target_component;
        nj["first_layer"] = n.first_layer;
        nj["layer_count"] = n.layer_count;
        nj["terms"] = n.term_count;
        nj["degree"] = n.degree;
        nj["fit_sup_error"] = n.fit_sup_error;
        nj["measured_sup_error"] = n.measured_sup_error;
        arr.push_back(nj);
    }
    j["nodes"] = arr;
    return j;
}

} // namespace hmtc
