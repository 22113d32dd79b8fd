#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "cuecot/text.hpp"

namespace cuecot {

/// Seeded generator whose output is identical on every platform:
/// std::mt19937_64 is fully specified, and bounded draws use rejection
/// sampling instead of the implementation-defined standard distributions.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % n);
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    template <typename It>
    void shuffle(It first, It last) {
        const auto n = static_cast<std::uint64_t>(last - first);
        for (std::uint64_t i = n; i > 1; --i) {
            auto j = below(i);
            std::iter_swap(first + (i - 1), first + j);
        }
    }

private:
    std::mt19937_64 engine_;
};

/// Mixes a base seed with a salt string into an independent stream seed.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view salt) {
    std::uint64_t h = text::fnv1a(salt, 0xcbf29ce484222325ULL ^ (seed * 0x9E3779B97F4A7C15ULL));
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
}

}  // namespace cuecot
