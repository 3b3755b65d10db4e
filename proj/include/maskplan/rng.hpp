#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace maskplan {

// Deterministic generator hierarchy. The engine is std::mt19937_64 (its output
// sequence is pinned by the standard); all distributions are implemented here
// by hand so results do not depend on the standard library build.
//
// Substreams are derived statelessly from (seed, label, index), so any module
// can re-derive its stream without threading generator state through the call
// graph.
class Rng {
public:
    explicit Rng(uint64_t seed);

    uint64_t next_u64();

    // Uniform on [0, 1).
    double uniform();
    // Uniform on [lo, hi).
    double uniform(double lo, double hi);
    // Uniform integer on [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi);
    bool bernoulli(double p);
    double normal(double mean = 0.0, double stddev = 1.0);

    // Weighted choice over `weights` (need not be normalized).
    int choice(const double* weights, int n);

    Rng fork(std::string_view label, uint64_t index = 0) const;

    uint64_t seed() const { return seed_; }

private:
    uint64_t seed_;
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// FNV-1a over arbitrary bytes; used for substream derivation and file hashes.
uint64_t fnv1a(const void* data, size_t n, uint64_t h = 1469598103934665603ull);
uint64_t fnv1a_str(std::string_view s, uint64_t h = 1469598103934665603ull);

}  // namespace maskplan
