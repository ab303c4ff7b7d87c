#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace disco {

// Fans one root seed out into independent named streams (FNV-1a + finalizer).
inline uint64_t derive_seed(uint64_t base, std::string_view stream) {
    uint64_t h = 14695981039346656037ull ^ base;
    for (char c : stream) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdull;
    h ^= h >> 33;
    return h;
}

inline uint64_t derive_seed(uint64_t base, std::string_view stream, uint64_t n) {
    uint64_t h = derive_seed(base, stream) ^ (n * 0x9e3779b97f4a7c15ull);
    h ^= h >> 29;
    h *= 0xbf58476d1ce4e5b9ull;
    h ^= h >> 32;
    return h;
}

// mt19937_64 behind explicit mappings; std::*_distribution is
// implementation-defined, so sequences would not be portable otherwise.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    // [0, 1)
    double next_double() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    bool bernoulli(double p) { return next_double() < p; }

    size_t index(size_t n) { return static_cast<size_t>(gen_() % n); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            std::swap(v[i - 1], v[index(i)]);
        }
    }

    // n distinct values from [0, pool) in draw order
    std::vector<size_t> sample_without_replacement(size_t pool, size_t n) {
        std::vector<size_t> ids(pool);
        for (size_t i = 0; i < pool; ++i) ids[i] = i;
        std::vector<size_t> out;
        out.reserve(n);
        for (size_t i = 0; i < n && !ids.empty(); ++i) {
            size_t j = index(ids.size());
            out.push_back(ids[j]);
            ids[j] = ids.back();
            ids.pop_back();
        }
        return out;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace disco
