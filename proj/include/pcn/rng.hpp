#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace pcn {

// Seeded RNG with fixed algorithms for every distribution we use, so that
// outputs are reproducible bit-for-bit across runs and platforms
// (std::*_distribution is implementation-defined, mt19937_64 is not).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard normal via Box-Muller; the spare value is cached
    double gaussian();

    // uniform integer in [0, n), n >= 1
    std::uint64_t integer(std::uint64_t n);

    // Fisher-Yates
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(integer(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<std::size_t> permutation(std::size_t n);

    // k distinct indices from [0, n), k <= n, in random order
    std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k);

    // stable sub-stream derivation (splitmix64 mix of seed and stream id)
    static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

  private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace pcn
