#include "hmtc/hierarchical.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace hmtc {

namespace {

double param_or(std::span<const double> params, size_t i, double fallback) {
    return i < params.size() ? params[i] : fallback;
}

std::map<std::string, SmoothFunction> build_registry() {
    std::map<std::string, SmoothFunction> reg;

    SmoothFunction sum;
    sum.name = "sum";
    sum.min_arity = 1;
    sum.smoothness_p = 2.0;
    sum.eval = [](std::span<const double> a, std::span<const double>) {
        double s = 0.0;
        for (double v : a) s += v;
        return s;
    };
    sum.lipschitz = [](double, std::span<const double>) { return 1.0; };
    sum.output_bound = [](double b, int arity, std::span<const double>) { return b * arity; };
    reg[sum.name] = sum;

    SmoothFunction product;
    product.name = "product";
    product.min_arity = 2;
    product.max_arity = 2;
    product.smoothness_p = 2.0;
    product.eval = [](std::span<const double> a, std::span<const double>) { return a[0] * a[1]; };
    product.lipschitz = [](double b, std::span<const double>) { return std::max(b, 1.0); };
    product.output_bound = [](double b, int, std::span<const double>) { return b * b; };
    reg[product.name] = product;

    // params: [c0, c1, ..., c_arity]
    SmoothFunction affine;
    affine.name = "affine";
    affine.min_arity = 1;
    affine.smoothness_p = 2.0;
    affine.eval = [](std::span<const double> a, std::span<const double> p) {
        double s = param_or(p, 0, 0.0);
        for (size_t i = 0; i < a.size(); ++i) s += param_or(p, i + 1, 1.0) * a[i];
        return s;
    };
    affine.lipschitz = [](double, std::span<const double> p) {
        double m = 0.0;
        for (size_t i = 1; i < p.size(); ++i) m = std::max(m, std::fabs(p[i]));
        return std::max(m, 1.0);
    };
    affine.output_bound = [](double b, int arity, std::span<const double> p) {
        double s = std::fabs(param_or(p, 0, 0.0));
        for (int i = 0; i < arity; ++i) s += std::fabs(param_or(p, static_cast<size_t>(i) + 1, 1.0)) * b;
        return s;
    };
    reg[affine.name] = affine;

    // Logistic link 1 / (1 + exp(-gain * x)); params: [gain]. Values in (0, 1).
    SmoothFunction sigmoid;
    sigmoid.name = "sigmoid";
    sigmoid.min_arity = 1;
    sigmoid.max_arity = 1;
    sigmoid.smoothness_p = 2.0;
    sigmoid.eval = [](std::span<const double> a, std::span<const double> p) {
        const double gain = param_or(p, 0, 1.0);
        return 1.0 / (1.0 + std::exp(-gain * a[0]));
    };
    sigmoid.lipschitz = [](double, std::span<const double> p) { return std::fabs(param_or(p, 0, 1.0)) / 4.0; };
    sigmoid.output_bound = [](double, int, std::span<const double>) { return 1.0; };
    reg[sigmoid.name] = sigmoid;

    SmoothFunction quadratic;
    quadratic.name = "quadratic";
    quadratic.min_arity = 1;
    quadratic.max_arity = 1;
    quadratic.smoothness_p = 2.0;
    quadratic.eval = [](std::span<const double> a, std::span<const double>) { return a[0] * a[0]; };
    quadratic.lipschitz = [](double b, std::span<const double>) { return 2.0 * std::max(b, 1.0); };
    quadratic.output_bound = [](double b, int, std::span<const double>) { return b * b; };
    reg[quadratic.name] = quadratic;

    // Smooth bump exp(-gain * x^2); params: [gain].
    SmoothFunction bump;
    bump.name = "bump";
    bump.min_arity = 1;
    bump.max_arity = 1;
    bump.smoothness_p = 2.0;
    bump.eval = [](std::span<const double> a, std::span<const double> p) {
        const double gain = param_or(p, 0, 1.0);
        return std::exp(-gain * a[0] * a[0]);
    };
    bump.lipschitz = [](double b, std::span<const double> p) {
        const double gain = std::fabs(param_or(p, 0, 1.0));
        return 2.0 * gain * std::max(b, 1.0);
    };
    bump.output_bound = [](double, int, std::span<const double>) { return 1.0; };
    reg[bump.name] = bump;

    return reg;
}

const std::map<std::string, SmoothFunction>& registry() {
    static const std::map<std::string, SmoothFunction> reg = build_registry();
    return reg;
}

int node_level(const HierarchicalModelSpec::Node& n) {
    if (n.is_leaf) return 0;
    int m = 0;
    for (const auto& c : n.children) m = std::max(m, node_level(c));
    return m + 1;
}

void validate_node(const HierarchicalModelSpec::Node& n, int input_dim) {
    if (n.is_leaf) {
        if (n.coordinate < 0 || n.coordinate >= input_dim)
            throw std::invalid_argument("HierarchicalModelSpec: leaf coordinate out of range");
        return;
    }
    const SmoothFunction& g = smooth_function(n.g);
    const int arity = static_cast<int>(n.children.size());
    if (arity < g.min_arity || arity > g.max_arity)
        throw std::invalid_argument("HierarchicalModelSpec: arity mismatch for " + n.g);
    if (n.p_smoothness < 1.0) throw std::invalid_argument("HierarchicalModelSpec: smoothness p must be >= 1");
    for (const auto& c : n.children) validate_node(c, input_dim);
}

double node_bound(const HierarchicalModelSpec::Node& n, double A) {
    if (n.is_leaf) return A;
    double in_bound = 0.0;
    for (const auto& c : n.children) in_bound = std::max(in_bound, node_bound(c, A));
    const SmoothFunction& g = smooth_function(n.g);
    return g.output_bound(in_bound, static_cast<int>(n.children.size()), n.g_params);
}

double eval_node(const HierarchicalModelSpec::Node& n, std::span<const double> x) {
    if (n.is_leaf) return x[static_cast<size_t>(n.coordinate)];
    std::vector<double> args(n.children.size());
    for (size_t i = 0; i < n.children.size(); ++i) args[i] = eval_node(n.children[i], x);
    return smooth_function(n.g).eval(args, n.g_params);
}

int count_inner(const HierarchicalModelSpec::Node& n) {
    if (n.is_leaf) return 0;
    int c = 1;
    for (const auto& ch : n.children) c += count_inner(ch);
    return c;
}

HierarchicalModelSpec::Node node_from_json(const nlohmann::json& j) {
    HierarchicalModelSpec::Node n;
    if (j.contains("leaf")) {
        n.is_leaf = true;
        n.coordinate = j.at("leaf").get<int>();
        return n;
    }
    n.is_leaf = false;
    n.g = j.at("g").get<std::string>();
    if (j.contains("params")) n.g_params = j.at("params").get<std::vector<double>>();
    n.p_smoothness = j.value("p", smooth_function(n.g).smoothness_p);
    for (const auto& cj : j.at("children")) n.children.push_back(node_from_json(cj));
    return n;
}

nlohmann::json node_to_json(const HierarchicalModelSpec::Node& n) {
    if (n.is_leaf) return nlohmann::json{{"leaf", n.coordinate}};
    nlohmann::json j;
    j["g"] = n.g;
    if (!n.g_params.empty()) j["params"] = n.g_params;
    j["p"] = n.p_smoothness;
    auto arr = nlohmann::json::array();
    for (const auto& c : n.children) arr.push_back(node_to_json(c));
    j["children"] = arr;
    return j;
}

} // namespace

const SmoothFunction& smooth_function(const std::string& name) {
    auto it = registry().find(name);
    if (it == registry().end()) throw std::invalid_argument("unknown smooth function: " + name);
    return it->second;
}

std::vector<std::string> smooth_function_names() {
    std::vector<std::string> out;
    for (const auto& [k, v] : registry()) out.push_back(k);
    return out;
}

void HierarchicalModelSpec::validate(int input_dim) const {
    if (bound_A <= 0.0) throw std::invalid_argument("HierarchicalModelSpec: bound_A must be positive");
    validate_node(root, input_dim);
    if (level != node_level(root)) throw std::invalid_argument("HierarchicalModelSpec: level does not match tree");
}

double HierarchicalModelSpec::value_bound() const { return node_bound(root, bound_A); }

double eval_hierarchical(const HierarchicalModelSpec& spec, std::span<const double> x) {
    return eval_node(spec.root, x);
}

double eval_hierarchical_node(const HierarchicalModelSpec::Node& n, std::span<const double> x) {
    return eval_node(n, x);
}

double node_value_bound(const HierarchicalModelSpec::Node& n, double A) { return node_bound(n, A); }

int count_nodes(const HierarchicalModelSpec& spec) { return count_inner(spec.root); }

HierarchicalModelSpec HierarchicalModelSpec::from_json(const nlohmann::json& j) {
    HierarchicalModelSpec s;
    s.root = node_from_json(j.at("root"));
    s.level = j.value("level", node_level(s.root));
    s.bound_A = j.value("A", 1.0);
    return s;
}

nlohmann::json HierarchicalModelSpec::to_json() const {
    nlohmann::json j;
    j["level"] = level;
    j["A"] = bound_A;
    j["root"] = node_to_json(root);
    return j;
}

} // namespace hmtc
