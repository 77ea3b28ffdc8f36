#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace kobe {

// Small self-contained generator (splitmix64 seeded xoshiro256**) so that
// seeded runs are reproducible independent of the standard library build.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) { reseed(seed); }

    void reseed(uint64_t seed) {
        uint64_t x = seed;
        for (auto& si : s_) {
            // splitmix64 stream to spread the seed over the state
            x += 0x9e3779b97f4a7c15ULL;
            uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
            z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
            si = z ^ (z >> 31);
        }
    }

    uint64_t next() {
        uint64_t* s = s_;
        const uint64_t result = rotl(s[1] * 5, 7) * 9;
        const uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    // Uniform integer in [0, n), n >= 1. Rejection sampling, unbiased.
    uint64_t below(uint64_t n) {
        const uint64_t threshold = (0 - n) % n;
        for (;;) {
            uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

    // Uniform float in [0, 1).
    float uniform() { return static_cast<float>(next() >> 40) * 0x1.0p-24f; }

    // Uniform float in [lo, hi).
    float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller (one value per call, cached pair).
    float normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        float u1 = 0.0f;
        while (u1 <= 1e-12f) u1 = uniform();
        float u2 = uniform();
        float r = std::sqrt(-2.0f * std::log(u1));
        float a = 6.28318530717958647692f * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    // Fisher-Yates permutation of [0, n).
    std::vector<uint32_t> permutation(size_t n) {
        std::vector<uint32_t> p(n);
        for (size_t i = 0; i < n; ++i) p[i] = static_cast<uint32_t>(i);
        shuffle(p);
        return p;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Deterministic derived stream, independent of call order at the call site.
    Rng fork(uint64_t tag) const {
        Rng r;
        r.reseed(s_[0] ^ (tag * 0x9e3779b97f4a7c15ULL) ^ s_[3]);
        return r;
    }

  private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4] = {};
    float spare_ = 0.0f;
    bool have_spare_ = false;
};

}  // namespace kobe
