#pragma once

#include <cmath>
#include <complex>
#include <cstdint>

namespace mrblat {

// Counter-based seed derivation: mixing the master seed with run / radar / pulse
// indices gives independent streams, so adding a radar never perturbs the noise
// another radar sees.
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t derive_seed(uint64_t master, uint64_t a, uint64_t b = 0, uint64_t c = 0) {
    uint64_t s = splitmix64(master ^ 0x243f6a8885a308d3ULL);
    s = splitmix64(s ^ splitmix64(a));
    s = splitmix64(s ^ splitmix64(b + 0x13198a2e03707344ULL));
    s = splitmix64(s ^ splitmix64(c + 0xa4093822299f31d0ULL));
    return s;
}

/// xoshiro256** with a Box-Muller Gaussian layer. Self-contained so that
/// draws are bit-identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& si : s_) si = x = splitmix64(x);
        have_spare_ = false;
        spare_ = 0.0;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    /// Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 == 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    /// Circularly symmetric complex normal with total variance `var`.
    std::complex<double> cnormal(double var) {
        const double s = std::sqrt(0.5 * var);
        return {s * normal(), s * normal()};
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4];
    bool have_spare_;
    double spare_;
};

}  // namespace mrblat
