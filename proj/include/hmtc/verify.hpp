#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "hmtc/builders.hpp"
#include "hmtc/experiment.hpp"

namespace hmtc {

// Checks the argmax pattern, the token-0 value formula and the perturbation
// robustness of one product head over random valid inputs. Inputs satisfy the
// encoding constraint in their first d+l+1 components and carry uniform
// auxiliary values bounded by cert.input_bound; perturbations touch the
// nonzero entries of the head and, for delta, the auxiliary components only.
struct Lemma9CheckResult {
    bool argmax_ok = false;
    bool value_ok = false;
    bool perturbed_argmax_ok = false;
    double max_value_error = 0.0;

    bool pass() const { return argmax_ok && value_ok && perturbed_argmax_ok; }
};

Lemma9CheckResult check_lemma9_head(const ModelConfig& cfg, const AttentionHead& head, int s0, int s1, int s2,
                                    int j, int k, int s3, double beta, const Lemma9Certificate& cert, int n_inputs,
                                    std::uint64_t seed);

// Runs the constructive builders' certificate checks plus the projected-GD,
// surrogate-loss and gradient-bound diagnostics. The selector is "all" or a
// comma-separated subset of {lemma1, lemma2, lemma3, lemma9, lemma10,
// lemma11, lemma12, theorem3}; an empty selector yields an empty report.
// Every entry carries pass plus measured details; "all_pass" summarizes.
nlohmann::json verify_constructions(const std::string& selector, std::uint64_t seed = 20240801);

} // namespace hmtc
