#pragma once

#include <cmath>
#include <cstdint>

namespace posmask {

// splitmix64-seeded xoshiro256** with hand-rolled distributions, so that
// streams are bit-identical across standard libraries and platforms.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& w : s_) {
            x += 0x9E3779B97F4A7C15ULL;
            std::uint64_t z = x;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
            w = z ^ (z >> 31);
        }
        has_gauss_ = false;
    }

    std::uint64_t next_u64() {
        auto rotl = [](std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); };
        const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // uniform in [0, 1)
    double uniform() { return (next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n)
    std::uint64_t uniform_int(std::uint64_t n) { return next_u64() % n; }

    bool bernoulli(double p) { return uniform() < p; }

    double normal(double mean = 0.0, double std = 1.0) {
        if (has_gauss_) {
            has_gauss_ = false;
            return mean + std * gauss_;
        }
        // Box-Muller
        double u1 = 0.0;
        while (u1 <= 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        gauss_ = r * std::sin(a);
        has_gauss_ = true;
        return mean + std * r * std::cos(a);
    }

    // truncated normal: resample outside [-2std, 2std] (BERT-style init)
    double truncated_normal(double std) {
        for (;;) {
            double v = normal(0.0, std);
            if (std::fabs(v) <= 2.0 * std) return v;
        }
    }

    // Stable mixing for deriving per-page / per-run streams.
    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_word(int i) const { return s_[i]; }
    void set_state(const std::uint64_t st[4]) {
        for (int i = 0; i < 4; ++i) s_[i] = st[i];
        has_gauss_ = false;
    }

  private:
    std::uint64_t s_[4] = {};
    bool has_gauss_ = false;
    double gauss_ = 0.0;
};

}  // namespace posmask
