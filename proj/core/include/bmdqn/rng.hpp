#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace bmdqn {

/// Deterministic random stream with a fully specified generation scheme, so
/// that runs are reproducible bit-for-bit across platforms. The engine is
/// xoshiro256**; floating-point draws are built directly from the raw 64-bit
/// output (no dependence on std::distribution implementations).
///
/// Streams are value types: copying one clones its state, which is handy for
/// replaying a consumption sequence in tests.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform in [0, 1), 53-bit resolution.
    double uniform();

    /// Uniform in [lo, hi).
    double uniform(double lo, double hi);

    /// Standard normal via Box-Muller. Pairs of draws share two uniforms;
    /// the second value is cached.
    double normal();

    /// Uniform integer in [0, n). Rejection sampling, unbiased. n must be > 0.
    int uniform_int(int n);

    /// Poisson count with the given rate. A rate of zero (or below) returns 0
    /// without consuming any engine output.
    int poisson(double rate);

private:
    std::array<std::uint64_t, 4> state_;
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

/// 64-bit FNV-1a over a byte string. Used for purpose tags and content hashes.
std::uint64_t fnv1a64(std::string_view bytes);

/// Derives an independent stream from a master seed, a purpose tag, and up to
/// two indices (meta-iteration, task index, and the like). The derivation is
/// a fixed splitmix64-style mix of the four inputs, so any (seed, tag, a, b)
/// tuple names the same stream in every run.
RngStream derive_stream(std::uint64_t master_seed, std::string_view purpose,
                        std::uint64_t a = 0, std::uint64_t b = 0);

} // namespace bmdqn
