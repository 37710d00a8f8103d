#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace voxrl {

// FNV-1a, 64 bit.
constexpr std::uint64_t hash64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

// splitmix64 finalizer, used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t mix64(std::uint64_t a, std::uint64_t b) { return mix64(a ^ mix64(b)); }

// Seeded generator with every draw algorithm spelled out explicitly; the
// standard <random> distributions are implementation-defined, so none are
// used here. Same seed, same draw sequence, on any platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed), gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // [0, 1), 53-bit resolution.
    double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double a, double b) { return a + (b - a) * uniform01(); }

    // [0, n), unbiased via rejection.
    int uniform_int(int n) {
        const auto bound = static_cast<std::uint64_t>(n);
        const std::uint64_t limit =
            std::numeric_limits<std::uint64_t>::max() -
            std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return static_cast<int>(x % bound);
    }

    // Standard normal, Box-Muller cosine branch (no cached second sample).
    double gaussian() {
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Child stream derived from the original seed and a tag. Independent of
    // any draws already made on this generator.
    Rng fork(std::string_view tag) const { return Rng(mix64(seed_, hash64(tag))); }
    Rng fork(std::uint64_t salt) const { return Rng(mix64(seed_, salt)); }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::mt19937_64 gen_;
};

}  // namespace voxrl
