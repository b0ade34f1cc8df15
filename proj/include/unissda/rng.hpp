#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string_view>
#include <vector>

namespace unissda {

// All stochastic behaviour in this project flows through Rng. Sampling is
// implemented on top of the raw mt19937_64 word stream instead of the
// std::*_distribution classes, whose output is implementation-defined; this
// keeps the bit-identical reproducibility contract independent of the
// standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_word() { return engine_(); }

    // Uniform on [0, 1): 53 random mantissa bits.
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // Uniform on (0, 1]; safe as a log() argument.
    double uniform_positive() {
        return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller; the second deviate of each pair is cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = uniform_positive();
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * std::numbers::pi * u2;
        cached_ = radius * std::sin(angle);
        has_cached_ = true;
        return radius * std::cos(angle);
    }

    // Uniform integer on [0, n), n > 0. Rejection sampling keeps it unbiased.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t word;
        do {
            word = engine_();
        } while (word >= limit);
        return word % n;
    }

    // Fisher-Yates shuffle (pinned here for the same portability reason).
    template <class T>
    void shuffle(std::vector<T>& values) {
        for (std::size_t i = values.size(); i > 1; --i) {
            std::swap(values[i - 1], values[static_cast<std::size_t>(below(i))]);
        }
    }

private:
    std::mt19937_64 engine_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (const char c : text) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

}  // namespace detail

// Derives an independent stream seed from a root seed and a stream label.
// Labels used by the training loop: "init", "batch", "augment", "interp";
// datagen uses "means", "shift", "source_samples", "target_samples",
// "split", "label".
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view label) {
    return detail::splitmix64(root ^ detail::fnv1a64(label));
}

inline Rng stream(std::uint64_t root, std::string_view label) {
    return Rng(derive_seed(root, label));
}

}  // namespace unissda
