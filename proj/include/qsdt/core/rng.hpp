#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "qsdt/core/tensor.hpp"

namespace qsdt {

// Counter-based deterministic generator. Output i is the SplitMix64
// finalizer applied to seed + (i+1) * 0x9E3779B97F4A7C15 (Steele et al.,
// "Fast splittable pseudorandom number generators"). Pure 64-bit integer
// arithmetic, so identical seeds give identical streams on every platform.
class Rng {
  public:
    explicit Rng(uint64_t seed = 0) : seed_(seed), counter_(0) {}

    uint64_t seed() const { return seed_; }
    uint64_t counter() const { return counter_; }
    void restore(uint64_t seed, uint64_t counter) {
        seed_ = seed;
        counter_ = counter;
    }

    uint64_t next_u64() {
        ++counter_;
        uint64_t z = seed_ + counter_ * 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    float uniform(float lo, float hi) {
        return lo + static_cast<float>(uniform()) * (hi - lo);
    }

    // Box-Muller on the counter stream; no state beyond the counter is kept,
    // so restore() round-trips exactly.
    double normal() {
        double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
    }

    float normal(float mu, float sigma) { return mu + sigma * static_cast<float>(normal()); }

    // Uniform integer in [0, n).
    int64_t uniform_int(int64_t n) {
        return static_cast<int64_t>(uniform() * static_cast<double>(n)) % n;
    }

    bool bernoulli(double p) { return uniform() < p; }

    void fill_normal(Tensor& t, float mu, float sigma) {
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = normal(mu, sigma);
    }

    void fill_uniform(Tensor& t, float lo, float hi) {
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = uniform(lo, hi);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (int64_t i = static_cast<int64_t>(v.size()) - 1; i > 0; --i) {
            int64_t j = uniform_int(i + 1);
            std::swap(v[static_cast<size_t>(i)], v[static_cast<size_t>(j)]);
        }
    }

  private:
    uint64_t seed_;
    uint64_t counter_;
};

}  // namespace qsdt
