#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace gfcl {

/// Deterministic random source (xoshiro256++ seeded via splitmix64).
///
/// Every sampling routine in the project draws from this type so that a run
/// is reproducible bit-for-bit across platforms; the standard-library
/// distributions are avoided because their output is implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) word = splitmix64(x);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Unbiased integer in [0, n). Lemire's method with rejection.
    std::uint64_t bounded(std::uint64_t n) {
        if (n == 0) throw std::invalid_argument("Rng::bounded: n must be positive");
        unsigned __int128 m = static_cast<unsigned __int128>(next_u64()) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t threshold = (0 - n) % n;
            while (lo < threshold) {
                m = static_cast<unsigned __int128>(next_u64()) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    /// Standard normal via Box-Muller; the paired value is cached.
    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[bounded(i)]);
        }
    }

    /// k distinct items drawn uniformly from `pool`, returned in ascending
    /// order. The pool is sorted before drawing so the result depends only on
    /// the pool's contents and the generator state.
    template <typename T>
    std::vector<T> sample(std::vector<T> pool, std::size_t k) {
        if (k > pool.size()) {
            throw std::invalid_argument("Rng::sample: k exceeds pool size");
        }
        std::sort(pool.begin(), pool.end());
        for (std::size_t i = 0; i < k; ++i) {
            const std::size_t j = i + static_cast<std::size_t>(bounded(pool.size() - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        std::sort(pool.begin(), pool.end());
        return pool;
    }

private:
    static std::uint64_t splitmix64(std::uint64_t& x) {
        x += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = x;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    static std::uint64_t rotl(std::uint64_t v, int k) { return (v << k) | (v >> (64 - k)); }

    std::uint64_t state_[4] = {};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

/// Stable sub-stream derivation: one run seed fans out into independent
/// streams for splitting, initialization, episode sampling, and so on.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view role) {
    std::uint64_t h = 0xCBF29CE484222325ull ^ seed;
    for (const char c : role) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= 0x100000001B3ull;
    }
    h ^= h >> 33;
    h *= 0xFF51AFD7ED558CCDull;
    h ^= h >> 33;
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view role, std::uint64_t index) {
    return derive_seed(derive_seed(seed, role) ^ (index * 0x9E3779B97F4A7C15ull), role);
}

}  // namespace gfcl
