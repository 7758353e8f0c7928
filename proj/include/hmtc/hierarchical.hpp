#pragma once

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace hmtc {

// Registry entry for a smooth inner function g with hand-declared metadata.
// `params` lets one registry name cover a family (gains, coefficients).
struct SmoothFunction {
    std::string name;
    int min_arity = 1;
    int max_arity = 64;
    double smoothness_p = 2.0; // default (p, C)-smoothness order
    // g(args; params)
    std::function<double(std::span<const double>, std::span<const double>)> eval;
    // Lipschitz constant valid on [-bound, bound]^arity
    std::function<double(double bound, std::span<const double>)> lipschitz;
    // |g| bound on [-bound, bound]^arity
    std::function<double(double bound, int arity, std::span<const double>)> output_bound;
};

const SmoothFunction& smooth_function(const std::string& name);
std::vector<std::string> smooth_function_names();

// Recursive description of an a-posteriori function from the hierarchical
// composition class: a leaf picks one input coordinate, a node applies a
// registry function to its children.
struct HierarchicalModelSpec {
    struct Node {
        bool is_leaf = true;
        int coordinate = 0; // 0-based index into the flattened input, leaves only
        std::string g;      // registry name, inner nodes only
        std::vector<double> g_params;
        double p_smoothness = 2.0; // declared smoothness of g
        std::vector<Node> children;
    };

    Node root;
    int level = 0;      // kappa
    double bound_A = 1; // input domain half-width

    void validate(int input_dim) const;

    // Bound on |h_j^{(i)}| for every sub-model, from the declared metadata.
    double value_bound() const;

    static HierarchicalModelSpec from_json(const nlohmann::json& j);
    nlohmann::json to_json() const;
};

// Exact recursive evaluation of the model at x (length d*l).
double eval_hierarchical(const HierarchicalModelSpec& spec, std::span<const double> x);

// Evaluation and the declared-Lipschitz value bound of one sub-model.
double eval_hierarchical_node(const HierarchicalModelSpec::Node& n, std::span<const double> x);
double node_value_bound(const HierarchicalModelSpec::Node& n, double A);

// Number of inner nodes (the sum over levels of N~_i in the composition).
int count_nodes(const HierarchicalModelSpec& spec);

} // namespace hmtc
