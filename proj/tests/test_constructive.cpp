#include <doctest.h>

#include <cmath>
#include <cstring>

#include "hmtc/builders.hpp"
#include "hmtc/forward.hpp"
#include "hmtc/mask.hpp"
#include "hmtc/oracles.hpp"
#include "hmtc/rng.hpp"
#include "hmtc/serialize.hpp"
#include "hmtc/verify.hpp"

using namespace hmtc;

namespace {

ModelConfig lemma9_cfg() {
    ModelConfig cfg;
    cfg.d = 2;
    cfg.l = 3;
    cfg.h = 2;
    cfg.I = 9;
    cfg.d_key = 3;
    cfg.d_ff = 6;
    cfg.N = 1;
    cfg.J = 2;
    cfg.K = 1;
    cfg.beta = 10.0;
    return cfg;
}

double run_network_readout(const ModelConfig& cfg, const std::vector<LayerParams>& layers,
                           std::span<const double> coords, int component) {
    Matrix x(cfg.d, cfg.l);
    for (int j = 0; j < cfg.l; ++j)
        for (int r = 0; r < cfg.d; ++r) x(r, j) = coords[static_cast<size_t>(j) * cfg.d + r];
    EncodedSequence z = encode_input(x, cfg);
    for (const auto& lp : layers) {
        AttentionResult att = hardmax_attention_layer(z, lp.heads, cfg);
        z = pointwise_ffn_layer(att.y, lp.ffn);
    }
    return z.at(component, 0);
}

HierarchicalModelSpec spec_from(const char* text) {
    return HierarchicalModelSpec::from_json(nlohmann::json::parse(text));
}

} // namespace

TEST_CASE("lemma 9 head: argmax pattern and exact product at eps = delta = 0") {
    ModelConfig cfg = lemma9_cfg();
    const double input_bound = 1.5;
    const double beta = 0.6;
    const int s0 = 1, s1 = 0, s2 = 1, j = 2, k = 0;
    const int s3 = cfg.scratch_b(s0);
    const int tau = cfg.l + cfg.d + 1;
    const double threshold = 168.0 * cfg.d_key * tau * tau * cfg.l * (beta + 1.0) * input_bound * input_bound;

    Lemma9Certificate cert;
    AttentionHead head = build_lemma9_head(cfg, s0, s1, s2, j, k, s3, beta, 2.0 * threshold, input_bound, &cert);
    CHECK(cert.threshold == doctest::Approx(threshold));
    CHECK(cert.eps_admissible > 0.0);
    CHECK(cert.delta_admissible >= 1.0);

    Lemma9CheckResult res = check_lemma9_head(cfg, head, s0, s1, s2, j, k, s3, beta, cert, 120, 55);
    CHECK(res.argmax_ok);
    CHECK(res.value_ok);
    CHECK(res.perturbed_argmax_ok);
    CHECK(res.max_value_error <= 1e-12);
}

TEST_CASE("lemma 9 head integrates with the attention layer") {
    ModelConfig cfg = lemma9_cfg();
    const double input_bound = 1.0;
    const double beta = -0.25;
    const int s0 = 1, s1 = 2, s2 = 0, j = 1, k = 2;
    const int s3 = cfg.scratch_a(s0);
    const int tau = cfg.l + cfg.d + 1;
    const double B = 4.0 * 168.0 * cfg.d_key * tau * tau * cfg.l * (std::fabs(beta) + 1.0);
    AttentionHead head = build_lemma9_head(cfg, s0, s1, s2, j, k, s3, beta, B, input_bound, nullptr);

    std::vector<AttentionHead> heads = {make_zero_head(cfg), head};
    RngStream s(77);
    for (int trial = 0; trial < 50; ++trial) {
        Matrix x(cfg.d, cfg.l);
        for (double& v : x.data()) v = s.next_uniform(1.0);
        EncodedSequence z = encode_input(x, cfg);
        AttentionResult att = hardmax_attention_layer(z, heads, cfg);
        CHECK(att.jhat[s0][0] == j);
        for (int r = 1; r < cfg.l; ++r) CHECK(att.jhat[s0][r] == k);
        const double expected = z.at(s1, 0) * (beta + z.at(s2, j));
        CHECK(std::fabs(att.y.at(s3, 0) - z.at(s3, 0) - expected) <= 1e-12);
        // Tokens past the first stay untouched in the gadget slab.
        for (int r = 1; r < cfg.l; ++r)
            for (int c = s0 * cfg.d_v(); c < (s0 + 1) * cfg.d_v(); ++c) CHECK(att.y.at(c, r) == z.at(c, r));
    }
}

TEST_CASE("lemma 9 rejects an insufficient B with the computed threshold") {
    ModelConfig cfg = lemma9_cfg();
    try {
        build_lemma9_head(cfg, 1, 0, 1, 2, 0, cfg.scratch_a(1), 0.5, 10.0, 1.0, nullptr);
        FAIL("expected rejection");
    } catch (const std::invalid_argument& e) {
        CHECK(std::string(e.what()).find("threshold") != std::string::npos);
    }
}

TEST_CASE("corrupted lemma 9 heads fail the certificate check") {
    ModelConfig cfg = lemma9_cfg();
    const double input_bound = 1.2;
    const double beta = 0.4;
    const int s0 = 1, s1 = 0, s2 = 1, j = 2, k = 0;
    const int s3 = cfg.scratch_b(s0);
    Lemma9Certificate cert;
    const int tau = cfg.l + cfg.d + 1;
    const double threshold = 168.0 * cfg.d_key * tau * tau * cfg.l * (beta + 1.0) * input_bound * input_bound;
    AttentionHead head = build_lemma9_head(cfg, s0, s1, s2, j, k, s3, beta, threshold, input_bound, &cert);

    SUBCASE("one entry off by ten admissible eps trips the exact-value criterion") {
        AttentionHead corrupted = head;
        corrupted.w_query(0, s1) += 10.0 * cert.eps_admissible;
        Lemma9CheckResult res = check_lemma9_head(cfg, corrupted, s0, s1, s2, j, k, s3, beta, cert, 40, 99);
        CHECK_FALSE(res.pass());
        CHECK_FALSE(res.value_ok);
    }
    SUBCASE("destroying the key bonus flips the selection itself") {
        // The selection margin is about B/2, so it takes a corruption on the
        // scale of B (far past the admissible eps) to move the argmax.
        AttentionHead corrupted = head;
        corrupted.w_key(cfg.d_key - 1, cfg.pos_row(k)) = -2.0 * cert.B;
        Lemma9CheckResult res = check_lemma9_head(cfg, corrupted, s0, s1, s2, j, k, s3, beta, cert, 40, 99);
        CHECK_FALSE(res.argmax_ok);
    }
}

TEST_CASE("lemma 10 gadget formulas are exact") {
    ModelConfig cfg = lemma9_cfg();
    cfg.d_ff = 4;
    const int dm = cfg.d_model();
    RngStream s(31);

    SUBCASE("relu variant, alpha = 1 on a concrete vector") {
        FfnWeights ffn = build_lemma10_ffn(cfg, 3, 7, 1.0, Lemma10Variant::relu);
        EncodedSequence y(dm, cfg.l);
        for (double& v : y.z) v = s.next_uniform(2.0);
        y.at(7, 0) = 2.0;
        EncodedSequence z = pointwise_ffn_layer(y, ffn);
        CHECK(z.at(3, 0) == 2.0);
        CHECK(z.at(7, 0) == 0.0);
        for (int c = 0; c < dm; ++c)
            if (c != 3 && c != 7) CHECK(z.at(c, 0) == y.at(c, 0));
    }
    SUBCASE("alpha = 0 zeroes both components") {
        FfnWeights ffn = build_lemma10_ffn(cfg, 2, 9, 0.0, Lemma10Variant::relu);
        EncodedSequence y(dm, cfg.l);
        for (double& v : y.z) v = s.next_uniform(2.0);
        EncodedSequence z = pointwise_ffn_layer(y, ffn);
        for (int tok = 0; tok < cfg.l; ++tok) {
            CHECK(z.at(2, tok) == 0.0);
            CHECK(z.at(9, tok) == 0.0);
            for (int c = 0; c < dm; ++c)
                if (c != 2 && c != 9) CHECK(z.at(c, tok) == y.at(c, tok));
        }
    }
    SUBCASE("identity variant carries the sign") {
        FfnWeights ffn = build_lemma10_ffn(cfg, 5, 11, 2.0, Lemma10Variant::identity);
        EncodedSequence y(dm, cfg.l);
        for (double& v : y.z) v = s.next_uniform(2.0);
        y.at(11, 1) = -3.0;
        EncodedSequence z = pointwise_ffn_layer(y, ffn);
        CHECK(z.at(5, 1) == -6.0);
        CHECK(z.at(11, 1) == 0.0);
    }
    SUBCASE("random vectors, both variants, machine precision") {
        for (int trial = 0; trial < 100; ++trial) {
            const int j1 = static_cast<int>(s.next_below(dm));
            int j2 = static_cast<int>(s.next_below(dm));
            if (j2 == j1) j2 = (j2 + 1) % dm;
            const double alpha = s.next_uniform(4.0);
            const bool identity = trial % 2 == 0;
            FfnWeights ffn =
                build_lemma10_ffn(cfg, j1, j2, alpha, identity ? Lemma10Variant::identity : Lemma10Variant::relu);
            // Weight bound from the lemma.
            for (const auto& m : {ffn.w1, ffn.w2})
                for (double v : m.data()) CHECK(std::fabs(v) <= std::max(std::fabs(alpha), 1.0));
            EncodedSequence y(dm, cfg.l);
            for (double& v : y.z) v = s.next_uniform(3.0);
            EncodedSequence z = pointwise_ffn_layer(y, ffn);
            for (int tok = 0; tok < cfg.l; ++tok) {
                const double want = identity ? alpha * y.at(j2, tok) : alpha * std::max(y.at(j2, tok), 0.0);
                CHECK(std::fabs(z.at(j1, tok) - want) <= 1e-12);
                CHECK(std::fabs(z.at(j2, tok)) <= 1e-12);
            }
        }
    }
    SUBCASE("preconditions") {
        ModelConfig narrow = cfg;
        narrow.d_ff = 3;
        CHECK_THROWS(build_lemma10_ffn(narrow, 0, 1, 1.0, Lemma10Variant::relu));
        CHECK_THROWS(build_lemma10_ffn(cfg, 4, 4, 1.0, Lemma10Variant::relu));
    }
}

TEST_CASE("spline product encoder matches the brute-force oracle") {
    ModelConfig cfg;
    cfg.d = 1;
    cfg.l = 2;
    cfg.h = 4;
    cfg.I = 8;
    cfg.d_key = 3;
    cfg.d_ff = 2 * cfg.h + 2;
    cfg.J = 2;
    cfg.K = 1;
    cfg.beta = 50.0;
    const int target = cfg.d + cfg.l + 3;

    SUBCASE("constant product term") {
        SplineBasisSpec basis;
        basis.degree = 1;
        basis.knots = {0.0};
        basis.A = 1.0;
        cfg.N = basis.degree * cfg.d * cfg.l + 1;
        ProductTermSpec terms;
        terms.terms.push_back({1.0, {0, 0}});
        BuiltEncoder enc = build_spline_product_encoder(cfg, basis, terms, target);
        CHECK(static_cast<int>(enc.layers.size()) == cfg.N);
        RngStream s(5);
        for (int t = 0; t < 30; ++t) {
            std::vector<double> x = {s.next_uniform(1.0), s.next_uniform(1.0)};
            CHECK(std::fabs(run_network_readout(cfg, enc.layers, x, target) - 1.0) <= 1e-9);
        }
    }
    SUBCASE("single linear term x^(1)") {
        SplineBasisSpec basis;
        basis.degree = 1;
        basis.knots = {0.0};
        basis.A = 1.0;
        cfg.N = basis.degree * cfg.d * cfg.l + 1;
        ProductTermSpec terms;
        terms.terms.push_back({1.0, {1, 0}});
        BuiltEncoder enc = build_spline_product_encoder(cfg, basis, terms, target);
        RngStream s(7);
        for (int t = 0; t < 100; ++t) {
            std::vector<double> x = {s.next_uniform(1.0), s.next_uniform(1.0)};
            CHECK(std::fabs(run_network_readout(cfg, enc.layers, x, target) - x[0]) <= 1e-9);
        }
    }
    SUBCASE("two mixed terms at degree two") {
        SplineBasisSpec basis;
        basis.degree = 2;
        basis.knots = {-0.4, 0.3};
        basis.A = 1.0;
        cfg.N = basis.degree * cfg.d * cfg.l + 1;
        ProductTermSpec terms;
        terms.terms.push_back({1.0, {1, 4}});  // x * (x' - u_2)_+^2
        terms.terms.push_back({-2.0, {3, 2}}); // -2 (x - u_1)_+^2 * x'^2
        BuiltEncoder enc = build_spline_product_encoder(cfg, basis, terms, target);
        CHECK(static_cast<int>(enc.layers.size()) == cfg.N);
        CHECK(enc.certificate.measured_sup_error <= 1e-6);
        RngStream s(9);
        for (int t = 0; t < 100; ++t) {
            std::vector<double> x = {s.next_uniform(1.0), s.next_uniform(1.0)};
            double oracle = 0.0;
            for (const auto& term : terms.terms) {
                double prod = term.alpha;
                for (int c = 0; c < 2; ++c) prod *= truncated_power_basis(x[c], basis, term.exponents[c]);
                oracle += prod;
            }
            CHECK(std::fabs(run_network_readout(cfg, enc.layers, x, target) - oracle) <= 1e-6);
        }
        // Certificate sanity.
        CHECK(enc.certificate.eps_admissible > 0.0);
        CHECK(enc.certificate.B_schedule.size() == static_cast<size_t>(basis.degree * cfg.d * cfg.l));
    }
    SUBCASE("head budget is enforced") {
        SplineBasisSpec basis;
        basis.degree = 1;
        basis.knots = {0.0};
        basis.A = 1.0;
        cfg.N = basis.degree * cfg.d * cfg.l + 1;
        ProductTermSpec terms;
        for (int t = 0; t < cfg.h; ++t) terms.terms.push_back({1.0, {0, 0}});
        CHECK_THROWS(build_spline_product_encoder(cfg, basis, terms, target));
    }
}

TEST_CASE("built encoder weights are reachable configurations") {
    ModelConfig cfg;
    cfg.d = 1;
    cfg.l = 2;
    cfg.h = 4;
    cfg.I = 8;
    cfg.d_key = 3;
    cfg.d_ff = 2 * cfg.h + 2;
    cfg.J = 2;
    cfg.beta = 50.0;
    SplineBasisSpec basis;
    basis.degree = 2;
    basis.knots = {-0.3, 0.4};
    basis.A = 1.0;
    cfg.N = basis.degree * cfg.d * cfg.l + 1;
    ProductTermSpec terms;
    terms.terms.push_back({0.7, {1, 3}});
    terms.terms.push_back({-1.1, {2, 1}});
    BuiltEncoder enc = build_spline_product_encoder(cfg, basis, terms, cfg.d + cfg.l + 3);

    NetworkParams net = make_zero_network(cfg);
    for (size_t r = 0; r < enc.layers.size(); ++r) net.layers[r] = enc.layers[r];
    std::string why;
    CHECK_MESSAGE(satisfies_structural_constraints(net, cfg, cfg.l + cfg.d + 1, &why), why);
}

TEST_CASE("hierarchical approximator reproduces a linear node") {
    ModelConfig cfg;
    cfg.d = 1;
    cfg.l = 2;
    cfg.h = 8;
    cfg.I = 8;
    cfg.d_key = 3;
    cfg.d_ff = 2 * cfg.h + 2;
    cfg.N = 6;
    cfg.J = 2;
    cfg.beta = 50.0;
    auto spec = spec_from(R"({"level":1,"A":1.0,
        "root":{"g":"sum","children":[{"leaf":0}]}})");
    BuiltNetwork built = build_hierarchical_approximator(spec, cfg.h, cfg);
    CHECK(built.certificate.measured_sup_error <= 1e-6);

    RngStream s(3);
    for (int t = 0; t < 50; ++t) {
        Matrix x(cfg.d, cfg.l);
        for (double& v : x.data()) v = s.next_uniform(1.0);
        CHECK(std::fabs(network_forward(x, built.params, cfg) - x(0, 0)) <= 1e-6);
    }
    // Mask compatibility of the full built network.
    std::string why;
    CHECK_MESSAGE(satisfies_structural_constraints(built.params, cfg, cfg.l + cfg.d + 1, &why), why);
}

TEST_CASE("hierarchical approximator rejects an infeasible budget") {
    ModelConfig cfg;
    cfg.d = 1;
    cfg.l = 2;
    cfg.h = 8;
    cfg.I = 8;
    cfg.d_key = 3;
    cfg.d_ff = 2 * cfg.h + 2;
    cfg.N = 6;
    cfg.J = 2;
    cfg.beta = 50.0;
    auto spec = spec_from(R"({"level":1,"A":1.0,
        "root":{"g":"product","children":[{"leaf":0},{"leaf":1}]}})");
    // An arity-2 node needs at least 2 basis functions per dimension, i.e.
    // a budget of 2*2 terms; budget 4 gives 3 usable terms at most.
    CHECK_THROWS(build_hierarchical_approximator(spec, 1, cfg));
    CHECK_THROWS(build_hierarchical_approximator(spec, 4, cfg));
}

TEST_CASE("hierarchical approximator error is non-increasing in the budget") {
    ModelConfig cfg;
    cfg.d = 1;
    cfg.l = 2;
    cfg.h = 32;
    cfg.I = 8;
    cfg.d_key = 3;
    cfg.d_ff = 2 * cfg.h + 2;
    cfg.N = 7;
    cfg.J = 2;
    cfg.beta = 50.0;
    auto spec = spec_from(R"({"level":1,"A":1.0,
        "root":{"g":"product","children":[{"leaf":0},{"leaf":1}]}})");
    std::vector<double> errs;
    for (int budget : {8, 16, 32})
        errs.push_back(build_hierarchical_approximator(spec, budget, cfg).certificate.measured_sup_error);
    CHECK(errs[1] <= errs[0] + 1e-9);
    CHECK(errs[2] <= errs[1] + 1e-9);
}

TEST_CASE("two-level composition error satisfies the Lipschitz recursion") {
    ModelConfig cfg;
    cfg.d = 1;
    cfg.l = 2;
    cfg.h = 16;
    cfg.I = 9; // two nodes
    cfg.d_key = 3;
    cfg.d_ff = 2 * cfg.h + 2;
    cfg.N = 12;
    cfg.J = 2;
    cfg.beta = 50.0;
    auto spec = spec_from(R"({"level":2,"A":1.0,
        "root":{"g":"quadratic","children":[
            {"g":"product","children":[{"leaf":0},{"leaf":1}]}]}})");
    BuiltNetwork built = build_hierarchical_approximator(spec, cfg.h, cfg);
    REQUIRE(built.certificate.nodes.size() == 2);
    const auto& child = built.certificate.nodes[0];
    const auto& root = built.certificate.nodes[1];
    // |g2(h~) - g2(h)| <= L * child error, plus the root's own fit error.
    const double lip = smooth_function("quadratic").lipschitz(node_value_bound(spec.root.children[0], 1.0) + 1.0, {});
    CHECK(root.measured_sup_error <= lip * child.measured_sup_error + root.fit_sup_error + 1e-6);
    CHECK(built.certificate.measured_sup_error <= 0.05);
}

TEST_CASE("logit head construction") {
    for (int K : {6, 16, 64}) {
        FinalNetWeights net = build_logit_head(K);
        CHECK(static_cast<int>(net.v1.size()) == 3 * K + 9);
        double wmax = 0.0;
        for (const auto* v : {&net.v1, &net.v0_slope, &net.v0_bias})
            for (double w : *v) wmax = std::max(wmax, std::fabs(w));
        CHECK(wmax <= K);

        for (int k = 1; k <= K - 1; ++k) {
            const double z = static_cast<double>(k) / K;
            CHECK(std::fabs(final_net(z, net) - std::log(z / (1.0 - z))) <= 1e-12);
        }
        for (double z : {-2.0 / K, -0.5, -3.0, 1.0 + 2.0 / K, 1.7, 4.0})
            CHECK(std::fabs(final_net(z, net)) <= 1e-9);
        double sup = 0.0;
        for (int i = 0; i <= 10000; ++i) sup = std::max(sup, std::fabs(final_net(-1.0 + 3.0 * i / 1e4, net)));
        CHECK(sup <= std::log(static_cast<double>(K)) + 1e-9);
    }
    CHECK_THROWS(build_logit_head(5));
}

TEST_CASE("assembled network approximates the logit of m") {
    ModelConfig cfg;
    cfg.d = 1;
    cfg.l = 2;
    cfg.h = 16;
    cfg.I = 8;
    cfg.d_key = 3;
    cfg.d_ff = 2 * cfg.h + 2;
    cfg.N = 6;
    cfg.J = 3 * 16 + 9;
    cfg.beta = 50.0;

    SUBCASE("constant one half maps to zero") {
        auto spec = spec_from(R"({"level":1,"A":1.0,
            "root":{"g":"affine","params":[0.5,0.0],"children":[{"leaf":0}]}})");
        BuiltNetwork built = assemble_theorem1_network(spec, cfg, 16);
        Matrix x(cfg.d, cfg.l);
        x(0, 0) = 0.3;
        x(0, 1) = -0.6;
        CHECK(std::fabs(network_forward(x, built.params, cfg)) <= 1e-6);
    }
    SUBCASE("sign agreement with the Bayes rule for a linear m") {
        auto spec = spec_from(R"({"level":1,"A":1.0,
            "root":{"g":"affine","params":[0.5,0.5],"children":[{"leaf":0}]}})");
        BuiltNetwork built = assemble_theorem1_network(spec, cfg, 16);
        RngStream s(21);
        int agree = 0;
        const int n = 1000;
        for (int i = 0; i < n; ++i) {
            Matrix x(cfg.d, cfg.l);
            for (double& v : x.data()) v = s.next_uniform(1.0);
            const double m = (x(0, 0) + 1.0) / 2.0;
            const int bayes = m >= 0.5 ? 1 : -1;
            if (classify(network_forward(x, built.params, cfg)) == bayes) ++agree;
        }
        CHECK(agree >= 950);
    }
    SUBCASE("monotone m gives a monotone sweep up to fit error") {
        auto spec = spec_from(R"({"level":1,"A":1.0,
            "root":{"g":"affine","params":[0.5,0.4],"children":[{"leaf":0}]}})");
        BuiltNetwork built = assemble_theorem1_network(spec, cfg, 16);
        double prev = -1e300;
        for (int i = 0; i <= 60; ++i) {
            Matrix x(cfg.d, cfg.l);
            x(0, 0) = -1.0 + 2.0 * i / 60.0;
            x(0, 1) = 0.0;
            const double v = network_forward(x, built.params, cfg);
            CHECK(v >= prev - 1e-6);
            prev = v;
        }
    }
}

TEST_CASE("lemma 9 head places its gadget rows correctly for d_key above three") {
    ModelConfig cfg = lemma9_cfg();
    cfg.d_key = 5;
    const double input_bound = 1.0;
    const double beta = 0.3;
    const int s0 = 1, s1 = 0, s2 = 1, j = 2, k = 1;
    const int s3 = cfg.scratch_a(s0);
    const int tau = cfg.l + cfg.d + 1;
    const double B = 4.0 * 168.0 * cfg.d_key * tau * tau * cfg.l * (std::fabs(beta) + 1.0);
    Lemma9Certificate cert;
    AttentionHead head = build_lemma9_head(cfg, s0, s1, s2, j, k, s3, beta, B, input_bound, &cert);

    // Middle rows stay zero; the gate rows are the last two (so the
    // structural zeros past column d+l+1 hold).
    for (int row = 1; row < cfg.d_key - 2; ++row)
        for (int c = 0; c < cfg.d_model(); ++c) {
            CHECK(head.w_query(row, c) == 0.0);
            CHECK(head.w_key(row, c) == 0.0);
        }
    Lemma9CheckResult res = check_lemma9_head(cfg, head, s0, s1, s2, j, k, s3, beta, cert, 60, 11);
    CHECK(res.pass());

    NetworkParams net = make_zero_network(cfg);
    net.layers[0].heads[s0] = head;
    std::string why;
    CHECK_MESSAGE(satisfies_structural_constraints(net, cfg, tau, &why), why);
}

TEST_CASE("a built network with large gate entries serializes exactly") {
    ModelConfig cfg;
    cfg.d = 1;
    cfg.l = 2;
    cfg.h = 8;
    cfg.I = 8;
    cfg.d_key = 3;
    cfg.d_ff = 2 * cfg.h + 2;
    cfg.N = 6;
    cfg.J = 2;
    cfg.beta = 50.0;
    auto spec = spec_from(R"({"level":1,"A":1.0,
        "root":{"g":"product","children":[{"leaf":0},{"leaf":1}]}})");
    BuiltNetwork built = build_hierarchical_approximator(spec, cfg.h, cfg);

    const std::string text = network_to_json(cfg, built.params).dump();
    NetworkParams back = network_from_json(nlohmann::ordered_json::parse(text));
    Matrix x(cfg.d, cfg.l);
    x(0, 0) = 0.37;
    x(0, 1) = -0.81;
    const double a = network_forward(x, built.params, cfg);
    const double b = network_forward(x, back, cfg);
    CHECK(std::memcmp(&a, &b, sizeof a) == 0);
}

TEST_CASE("assembled two-level network still tracks the Bayes rule") {
    // m(x) = sigmoid(3 * x0 * x1) through a product node under a sigmoid
    // node, composed with the logit head.
    ModelConfig cfg;
    cfg.d = 1;
    cfg.l = 2;
    cfg.h = 16;
    cfg.I = 10; // two nodes reserved
    cfg.d_key = 3;
    cfg.d_ff = 2 * cfg.h + 2;
    cfg.N = 14;
    cfg.J = 3 * 16 + 9;
    cfg.K = 1;
    cfg.beta = 50.0;
    auto spec = spec_from(R"({"level":2,"A":1.0,
        "root":{"g":"sigmoid","params":[3.0],"children":[
            {"g":"product","children":[{"leaf":0},{"leaf":1}]}]}})");
    BuiltNetwork built = assemble_theorem1_network(spec, cfg, 16);

    RngStream s(33);
    int agree = 0, total = 0;
    for (int i = 0; i < 1000; ++i) {
        Matrix x(cfg.d, cfg.l);
        for (double& v : x.data()) v = s.next_uniform(1.0);
        std::vector<double> flat = {x(0, 0), x(0, 1)};
        const double m = eval_hierarchical(spec, flat);
        if (std::fabs(m - 0.5) < 0.05) continue; // skip the decision boundary band
        ++total;
        const int bayes = m >= 0.5 ? 1 : -1;
        if (classify(network_forward(x, built.params, cfg)) == bayes) ++agree;
    }
    REQUIRE(total > 500);
    CHECK(static_cast<double>(agree) / total >= 0.95);
}

TEST_CASE("verify_constructions drives the whole battery") {
    nlohmann::json empty = verify_constructions("");
    CHECK(empty.at("all_pass").get<bool>());
    CHECK_FALSE(empty.contains("checks"));

    nlohmann::json one = verify_constructions("lemma10");
    CHECK(one.at("all_pass").get<bool>());
    CHECK(one.at("checks").contains("lemma10"));
}
