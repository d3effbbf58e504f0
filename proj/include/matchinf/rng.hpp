// Counter-based splittable random streams.
//
// Every consumer of randomness owns a private stream whose key is derived by
// hashing a (seed, label, index...) path with the splitmix64 finalizer. Streams
// for different trials / draws / units therefore never share state, which makes
// parallel execution bit-identical to serial execution regardless of thread
// count or scheduling order.
#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace matchinf {

// splitmix64 finalizer: a well-mixed bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Fold a label path into a stream key. Order-sensitive.
constexpr std::uint64_t derive_key(std::uint64_t seed) noexcept { return mix64(seed); }

template <class... Rest>
constexpr std::uint64_t derive_key(std::uint64_t seed, std::uint64_t label, Rest... rest) noexcept {
    return derive_key(mix64(seed ^ mix64(label)), rest...);
}

// Well-known stream labels, one per consumer class.
namespace stream {
inline constexpr std::uint64_t trial = 0x745249414cULL;      // simulation trials
inline constexpr std::uint64_t draw = 0x44524157ULL;         // randomization draws
inline constexpr std::uint64_t tiebreak = 0x544945ULL;       // matching tie-break uniforms
inline constexpr std::uint64_t sample = 0x53414d50ULL;       // ad-hoc dataset sampling
}  // namespace stream

// Single uniform in [0,1) at (seed, label, index) without building an engine.
// Used for the per-unit tie-break variables, which must be addressable in O(1)
// from any thread.
inline double uniform_at(std::uint64_t seed, std::uint64_t label, std::uint64_t index) noexcept {
    const std::uint64_t k = derive_key(seed, label, index);
    return static_cast<double>(k >> 11) * 0x1.0p-53;
}

// A seeded stream: std::mt19937_64 engine plus hand-rolled distribution
// transforms. The transforms are pinned here (rather than <random>'s
// distribution objects) because the standard does not specify distribution
// algorithms and replay must be exact.
class Rng {
public:
    explicit Rng(std::uint64_t key) : eng_(key) {}

    template <class... Labels>
    static Rng derive(std::uint64_t seed, Labels... labels) {
        return Rng(derive_key(seed, static_cast<std::uint64_t>(labels)...));
    }

    std::uint64_t next_u64() { return eng_(); }

    // Uniform on [0,1), 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    bool bernoulli(double p) { return uniform() < p; }

    // Standard normal via Box-Muller with a cached spare.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        // u1 in (0,1] so the log is finite.
        const double u1 = 1.0 - uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n) by rejection (unbiased).
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t v = eng_();
        while (v >= limit) v = eng_();
        return v % n;
    }

private:
    std::mt19937_64 eng_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace matchinf
