#pragma once

#include <cstdint>
#include <random>

namespace stgia {

/// splitmix64 step; good avalanche, used to derive independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Derives a stream seed from a base seed and up to three stream labels.
/// Streams with distinct labels are statistically independent, so
/// per-(client, round) work can run in any order without affecting results.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a = 0,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t s = base;
    splitmix64(s);
    s ^= a + 0x6a09e667f3bcc909ULL;
    splitmix64(s);
    s ^= b + 0xbb67ae8584caa73bULL;
    splitmix64(s);
    s ^= c + 0x3c6ef372fe94f82bULL;
    return splitmix64(s);
}

/// Deterministic RNG handle. Wraps mt19937_64 with the distributions the
/// simulator needs; identical seeds give identical draw sequences within
/// one build.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double normal() { return normal_(engine_); }
    double uniform() { return uniform_(engine_); }  // [0, 1)
    std::uint64_t next_u64() { return engine_(); }

    /// Uniform integer in [0, n).
    std::size_t index(std::size_t n) {
        std::uniform_int_distribution<std::size_t> d(0, n - 1);
        return d(engine_);
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace stgia
