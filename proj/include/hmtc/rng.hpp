#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace hmtc {

// Counter-based pseudo-random streams built on SplitMix64.
//
// Every consumer derives its own stream from a master seed and a list of
// integer tags (network index, layer, matrix role, row, ...). Streams with
// distinct tag lists are independent, so e.g. enlarging the mixture from K
// to K+1 networks never changes the draws of networks 1..K.
//
// Derivation: the key is splitmix64 applied to the master seed, then folded
// with each tag via key = splitmix64(key ^ (tag + golden)). Output i of the
// stream is splitmix64(key + i * golden).

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

class RngStream {
  public:
    explicit RngStream(std::uint64_t master) : key_(splitmix64(master)) {}

    RngStream(std::uint64_t master, std::initializer_list<std::uint64_t> tags) : RngStream(master) {
        for (std::uint64_t t : tags) absorb(t);
    }

    // Folds one more tag into the stream identity.
    void absorb(std::uint64_t tag) { key_ = splitmix64(key_ ^ (tag + 0x9e3779b97f4a7c15ULL)); }

    RngStream child(std::uint64_t tag) const {
        RngStream s = *this;
        s.absorb(tag);
        return s;
    }

    std::uint64_t next_u64() { return splitmix64(key_ + (counter_++) * 0x9e3779b97f4a7c15ULL); }

    // Uniform on [0, 1) with 53 random bits.
    double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform on [-a, a].
    double next_uniform(double a) { return (2.0 * next_unit() - 1.0) * a; }

    // Uniform on [lo, hi).
    double next_range(double lo, double hi) { return lo + next_unit() * (hi - lo); }

    // Uniform integer in {0, ..., n-1}.
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

    int next_sign() { return (next_u64() & 1u) ? 1 : -1; }

    // Standard normal via Box-Muller (one value per call, second discarded
    // to keep the stream position independent of call parity).
    double next_gaussian() {
        const double u1 = next_unit();
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

  private:
    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace hmtc
