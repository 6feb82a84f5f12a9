#include "bmdqn/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bmdqn {

namespace {

std::uint64_t splitmix64_finalize(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xbf58476d1ce4e5b9ull;
    z ^= z >> 27;
    z *= 0x94d049bb133111ebull;
    z ^= z >> 31;
    return z;
}

std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

} // namespace

RngStream::RngStream(std::uint64_t seed) {
    // splitmix64 expansion, the standard way to seed xoshiro state.
    std::uint64_t s = seed;
    for (auto& word : state_) {
        s += 0x9e3779b97f4a7c15ull;
        word = splitmix64_finalize(s);
    }
    if (state_[0] == 0 && state_[1] == 0 && state_[2] == 0 && state_[3] == 0)
        state_[0] = 1;
}

std::uint64_t RngStream::next_u64() {
    const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double RngStream::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform();
}

double RngStream::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    // u1 is shifted into (0, 1] so the log is always finite.
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(angle);
    has_cached_normal_ = true;
    return r * std::cos(angle);
}

int RngStream::uniform_int(int n) {
    if (n <= 0)
        throw std::invalid_argument("RngStream::uniform_int: n must be positive");
    const auto bound = static_cast<std::uint64_t>(n);
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
        const std::uint64_t r = next_u64();
        if (r >= threshold)
            return static_cast<int>(r % bound);
    }
}

int RngStream::poisson(double rate) {
    if (rate <= 0.0)
        return 0;
    // Knuth's method; fine for the small rates used here.
    const double limit = std::exp(-rate);
    int k = 0;
    double p = 1.0;
    do {
        ++k;
        p *= uniform();
    } while (p > limit);
    return k - 1;
}

std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

RngStream derive_stream(std::uint64_t master_seed, std::string_view purpose,
                        std::uint64_t a, std::uint64_t b) {
    std::uint64_t s = splitmix64_finalize(master_seed ^ 0x6a09e667f3bcc908ull);
    s = splitmix64_finalize(s ^ fnv1a64(purpose));
    s = splitmix64_finalize(s ^ a);
    s = splitmix64_finalize(s ^ b);
    return RngStream(s);
}

} // namespace bmdqn
