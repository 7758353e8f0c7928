#pragma once

#include <stdexcept>
#include <string>

namespace hmtc {

// Architecture dimensions of one transformer network and of the mixture.
//
// Component layout inside a token column (0-based indices; the paper counts
// from 1). d_model = h * I components split into h slabs of height I = d_v;
// slab s covers [s*I, (s+1)*I). Within slab 0:
//   [0, d)            input coordinates of the token
//   d                 constant one
//   [d+1, d+l]        positional identity block
//   d+l+1             scratch A — also the scalar the final net reads
//   d+l+2             scratch B
//   [d+l+3, I)        free components used by constructive builders
// Slabs s >= 1 are zero after encoding; their offsets d+l+1 / d+l+2 serve as
// per-head scratch for the product gadgets.
struct ModelConfig {
    int d = 1;      // token dimension
    int l = 2;      // sequence length
    int h = 2;      // attention heads per layer
    int I = 7;      // slab width (= d_v)
    int d_key = 3;  // query/key dimension
    int d_ff = 6;   // FFN hidden width
    int N = 1;      // (attention, FFN) layer pairs
    int J = 4;      // final shallow net hidden width
    double beta = 1.0; // truncation level
    int K = 1;      // parallel networks in the mixture

    int d_model() const { return h * I; }
    int d_v() const { return I; }

    int ones_row() const { return d; }
    int pos_row(int token) const { return d + 1 + token; }              // 0-based token
    int readout_component() const { return d + l + 1; }                 // paper: d+l+2
    int scratch_a(int head) const { return head * I + d + l + 1; }      // 0-based head
    int scratch_b(int head) const { return head * I + d + l + 2; }
    int reserved_component(int idx) const { return d + l + 4 + idx; }   // paper: d+l+5+idx

    void validate() const {
        auto fail = [](const std::string& msg) { throw std::invalid_argument("ModelConfig: " + msg); };
        if (d < 1 || l < 1 || h < 1 || I < 1 || d_key < 1 || d_ff < 1 || N < 1 || J < 1 || K < 1)
            fail("all dimensions must be positive");
        if (I < d + l + 4) fail("I must be at least d+l+4");
        if (d_key < 3) fail("d_key must be at least 3");
        if (beta <= 0.0) fail("beta must be positive");
    }
};

} // namespace hmtc
