#pragma once

#include <cstdint>
#include <random>

namespace surro {

// Deterministic uniform stream. Children derived with split() depend only on
// (seed, index), never on how many draws the parent has consumed, so replicate
// streams can be created in any order (or in parallel) with identical results.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : seed_(seed), eng_(mix(seed)) {}

    // Uniform draw in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    // Uniform integer in {lo, ..., hi} (inclusive).
    int uniform_int(int lo, int hi) {
        int span = hi - lo + 1;
        int k = static_cast<int>(uniform() * span);
        if (k >= span) k = span - 1; // guard the u -> 1 boundary
        return lo + k;
    }

    std::uint64_t seed() const { return seed_; }

    RngStream split(std::uint64_t index) const {
        return RngStream(mix(seed_ ^ mix(index + 0x632be59bd9b4e019ULL)));
    }

private:
    // splitmix64 finalizer
    static std::uint64_t mix(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ULL;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t seed_;
    std::mt19937_64 eng_;
};

} // namespace surro
