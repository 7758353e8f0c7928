#pragma once

#include <cstdint>
#include <vector>

#include "hmtc/config.hpp"
#include "hmtc/params.hpp"

namespace hmtc {

// Boolean pattern saying which matrix entries may ever be nonzero. Biases and
// the final net are always trainable and carry no mask.
struct MaskMatrix {
    int rows = 0;
    int cols = 0;
    std::vector<std::uint8_t> on; // row-major, 1 = entry may be nonzero

    MaskMatrix() = default;
    MaskMatrix(int r, int c, std::uint8_t fill = 0) : rows(r), cols(c), on(static_cast<size_t>(r) * c, fill) {}

    std::uint8_t& at(int r, int c) { return on[static_cast<size_t>(r) * cols + c]; }
    std::uint8_t at(int r, int c) const { return on[static_cast<size_t>(r) * cols + c]; }

    bool operator==(const MaskMatrix& o) const { return rows == o.rows && cols == o.cols && on == o.on; }
};

struct HeadMask {
    MaskMatrix q, k, v;
    bool operator==(const HeadMask&) const = default;
};

struct LayerMask {
    std::vector<HeadMask> heads;
    MaskMatrix w1, w2;
    bool operator==(const LayerMask&) const = default;
};

// Sparsity pattern of one network, fixed at initialization.
struct NetworkMask {
    std::vector<LayerMask> layers;
    bool operator==(const NetworkMask&) const = default;
};

struct InitConfig {
    int tau = 3;              // pruning width, in {l+1, ..., l+d+1}
    double c4 = 1.0;          // init range = c4 * n^c5
    double c5 = 0.0;
    double n_nominal = 1.0;   // nominal sample size entering the range
    std::uint64_t seed = 1;   // master seed

    double range() const;
    void validate(const ModelConfig& cfg) const;
};

// Draws every weight uniformly on [-range, range], prunes each attention-head
// matrix row, each w1 row and each w2 column down to tau surviving entries,
// then applies the structural zeros: w_query/w_key of head 1 fully zero, the
// first d+l+1 rows of every w2 zero (the FFN may never write the data, ones
// and position components), and the last two rows of every w_query/w_key zero
// in columns past d+l+1. The mask records exactly the surviving positions, so
// a gradient step can never revive a structurally zeroed entry.
//
// Distinct network indices use independent sub-streams of the master seed.
std::pair<NetworkParams, NetworkMask> init_network(const ModelConfig& cfg, const InitConfig& icfg,
                                                   std::uint64_t network_index);

// Zeroes every entry where the mask is off; idempotent.
NetworkParams apply_mask(const NetworkParams& params, const NetworkMask& mask);
void apply_mask_in_place(NetworkParams& params, const NetworkMask& mask);

bool mask_compliant(const NetworkParams& params, const NetworkMask& mask);

// The mask a built (constructive) network must be compatible with: pruning
// width tau = l+d+1 and the structural zeros above. Checks row/column counts
// of the nonzero pattern and the structurally zeroed regions.
bool satisfies_structural_constraints(const NetworkParams& params, const ModelConfig& cfg, int tau,
                                      std::string* why = nullptr);

} // namespace hmtc
