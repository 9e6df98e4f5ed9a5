#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>

namespace lwp {

/// Deterministic random source.
///
/// Engine: std::mt19937_64, whose output sequence is fully specified by the
/// C++ standard. Distributions are implemented here rather than taken from
/// <random>, because the standard library's distributions are
/// implementation-defined and would break cross-platform replay:
///   - uniform():  top 53 bits of one engine draw, scaled by 2^-53, in [0, 1)
///   - normal():   Box-Muller on two uniforms, second variate cached
///   - below(n):   rejection sampling on the engine's 64-bit output
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64();
    double uniform();
    double uniform(double lo, double hi);
    double normal();
    double normal(double mean, double sd) { return mean + sd * normal(); }
    /// Uniform integer in [0, n). n must be > 0.
    std::size_t below(std::size_t n);

    /// In-place Fisher-Yates shuffle (i from back to front, j = below(i + 1)).
    void shuffle(std::span<std::size_t> items);

    /// Independent generator for a named sub-stream of this seed.
    /// Seed mixing is SplitMix64 over (seed, tag).
    Rng derive(std::uint64_t tag) const;

private:
    std::uint64_t seed_;
    std::mt19937_64 engine_;
    bool has_cached_normal_ = false;
    double cached_normal_ = 0.0;
};

/// One SplitMix64 step.
std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace lwp
