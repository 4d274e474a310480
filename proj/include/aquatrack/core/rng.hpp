// Seeded RNG wrapper. Every randomized component takes an explicit Rng so
// runs are reproducible from a single master seed.
#pragma once

#include <cstdint>
#include <random>

#include "aquatrack/core/tensor.hpp"

namespace aquatrack {

class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(gen_);
    }

    // Inclusive on both ends.
    int uniform_int(int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(gen_);
    }

    uint64_t next_u64() { return gen_(); }

    template <typename It>
    void shuffle(It first, It last) {
        std::shuffle(first, last, gen_);
    }

    Tensor normal_tensor(std::vector<int> shape, double stddev, double mean = 0.0) {
        Tensor t(std::move(shape));
        for (int64_t i = 0; i < t.size(); ++i) t[i] = normal(mean, stddev);
        return t;
    }

    Tensor uniform_tensor(std::vector<int> shape, double lo, double hi) {
        Tensor t(std::move(shape));
        for (int64_t i = 0; i < t.size(); ++i) t[i] = uniform(lo, hi);
        return t;
    }

    // splitmix64 step; derives decorrelated stream seeds from a master seed.
    static uint64_t mix(uint64_t seed, uint64_t stream) {
        uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace aquatrack
