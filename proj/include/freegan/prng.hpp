#ifndef FREEGAN_PRNG_HPP
#define FREEGAN_PRNG_HPP

#include <cstdint>

#include "freegan/common.hpp"

namespace freegan {

// splitmix64 finalizer (Steele, Lea, Flood 2014). All randomness in the
// project derives from this mixer so runs are reproducible across platforms.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Counter-based value: a pure function of (seed, a, b, c). Used for data
// sampling so that resuming at step s replays the exact sequence.
inline uint64_t counter_rand(uint64_t seed, uint64_t a, uint64_t b, uint64_t c) {
    uint64_t h = splitmix64(seed);
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b);
    h = splitmix64(h ^ c);
    return h;
}

inline real to_unit_real(uint64_t x) {
    return static_cast<real>(x >> 11) * 0x1.0p-53;  // [0, 1)
}

// Sequential stream for parameter initialization.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
        x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
        return x ^ (x >> 31);
    }

    real uniform() { return to_unit_real(next_u64()); }

    // Box-Muller; one draw per call for determinism.
    real gaussian() {
        real u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const real u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(kTwoPi * u2);
    }

    // standard truncated normal: resample outside two standard deviations
    real trunc_normal(real sigma) {
        real z = gaussian();
        while (std::abs(z) > 2.0) z = gaussian();
        return z * sigma;
    }

    long uniform_index(long n) { return static_cast<long>(next_u64() % static_cast<uint64_t>(n)); }

  private:
    uint64_t state_;
};

}  // namespace freegan

#endif  // FREEGAN_PRNG_HPP
