// SPDX-License-Identifier: Apache-2.0
//
// Deterministic random number generation. All stochastic behavior in the
// simulator flows through this header so that a (config, master seed) pair
// reproduces bit-identical runs on a given platform. Seeds for independent
// streams (symbols, noise, impairment draws, ...) are derived from the master
// seed with a named-stream/counter scheme; see derive_seed().

#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace ebpcal {

inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

// Documented counter scheme: stream seeds are
//   splitmix64(master XOR fnv1a(stream_name) XOR golden*counter).
// "counter" is the trial index for Monte Carlo runs.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                                 std::uint64_t counter = 0) {
    std::uint64_t s = master ^ fnv1a64(stream) ^ (0x9E3779B97F4A7C15ull * (counter + 1));
    return splitmix64_next(s);
}

// xoshiro256++ with splitmix64 seeding. Self-contained so draws do not depend
// on any library's distribution implementation.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t sm = seed;
        for (auto& w : s_) w = splitmix64_next(sm);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform on [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // symmetric uniform on [-half_range, +half_range]; exact zero for zero range
    double uniform_pm(double half_range) {
        if (half_range == 0.0) return 0.0;
        return uniform(-half_range, half_range);
    }

    // standard normal via Box-Muller (pair cached)
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double sigma) { return sigma * normal(); }

  private:
    static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    std::uint64_t s_[4]{};
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace ebpcal
