#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace neurophys {

// Deterministic RNG (xoshiro256** seeded via splitmix64). All randomness in
// the library flows through this type so that a fixed seed yields
// bit-identical results independent of platform or standard library.
class RandomSource {
   public:
    explicit RandomSource(std::uint64_t seed);

    std::uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform01();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Standard normal via Box-Muller.
    double gaussian();
    double gaussian(double mean, double sigma);
    // Uniform integer in [0, n).
    std::size_t index(std::size_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

    // Independent child stream. Deterministic in (parent seed, stream id);
    // insensitive to how much the parent has already been consumed.
    RandomSource derive(std::uint64_t stream) const;

   private:
    std::uint64_t state_[4];
    std::uint64_t seed_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace neurophys
