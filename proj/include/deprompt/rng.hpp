#pragma once

// Deterministic seeded randomness. splitmix64 is used instead of <random>
// distributions because stub-backend outputs must be bit-identical across
// platforms and standard-library distributions are implementation-defined.

#include <cstdint>
#include <string_view>
#include <vector>

namespace deprompt {

inline uint64_t fnv1a64(std::string_view s, uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t mix64(uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Combines a seed with an arbitrary salt into a new independent seed.
inline uint64_t derive_seed(uint64_t seed, uint64_t salt) {
    return mix64(seed ^ mix64(salt));
}

inline uint64_t derive_seed(uint64_t seed, std::string_view salt) {
    return derive_seed(seed, fnv1a64(salt));
}

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    /// Uniform integer in [0, bound). bound must be > 0.
    uint64_t bounded(uint64_t bound) {
        // rejection sampling keeps the result unbiased
        uint64_t threshold = (0 - bound) % bound;
        for (;;) {
            uint64_t r = next();
            if (r >= threshold) return r % bound;
        }
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(bounded(i));
            using std::swap;
            swap(v[i - 1], v[j]);
        }
    }

    /// k distinct indices from [0, n), in selection order.
    std::vector<size_t> sample_indices(size_t n, size_t k) {
        std::vector<size_t> pool(n);
        for (size_t i = 0; i < n; ++i) pool[i] = i;
        std::vector<size_t> out;
        out.reserve(k);
        for (size_t i = 0; i < k && !pool.empty(); ++i) {
            size_t j = static_cast<size_t>(bounded(pool.size()));
            out.push_back(pool[j]);
            pool[j] = pool.back();
            pool.pop_back();
        }
        return out;
    }

private:
    uint64_t state_;
};

} // namespace deprompt
