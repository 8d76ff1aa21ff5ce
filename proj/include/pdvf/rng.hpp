#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace pdvf {

// splitmix64; used to derive well-separated seeds for named RNG streams.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_str(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Deterministic seed for a named stream, e.g. derive_seed(base, "collect", p, e, t).
template <typename... Ints>
uint64_t derive_seed(uint64_t base, std::string_view stream, Ints... idx) {
    uint64_t h = mix64(base ^ hash_str(stream));
    ((h = mix64(h ^ static_cast<uint64_t>(idx))), ...);
    return h;
}

class Rng {
public:
    explicit Rng(uint64_t seed = 0) : gen_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(gen_);
    }
    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(gen_);
    }
    // in [0, n)
    int uniform_int(int n) {
        return std::uniform_int_distribution<int>(0, n - 1)(gen_);
    }
    bool bernoulli(double p) { return std::bernoulli_distribution(p)(gen_); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        std::shuffle(v.begin(), v.end(), gen_);
    }

    std::mt19937_64& gen() { return gen_; }

private:
    std::mt19937_64 gen_;
};

}  // namespace pdvf
