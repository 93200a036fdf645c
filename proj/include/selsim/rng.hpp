#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace selsim {

// splitmix64, used to derive independent stream seeds from (seed, tag, ids).
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d2db33111eb593ULL;
    return x ^ (x >> 31);
}

inline uint64_t hash_tag(std::string_view tag) {
    // FNV-1a
    uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : tag) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline uint64_t derive_seed(uint64_t master, std::string_view tag,
                            uint64_t a = 0, uint64_t b = 0) {
    uint64_t s = mix64(master ^ hash_tag(tag));
    s = mix64(s ^ (a + 0x9e3779b97f4a7c15ULL));
    s = mix64(s ^ (b + 0x7f4a7c159e3779b9ULL));
    return s;
}

/// Deterministic PRNG for everything random in the simulator. All draws go
/// through explicit helpers (not std distributions) so streams are
/// reproducible across platforms within this implementation.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t next_u64() { return gen_(); }

    /// Uniform double in [0, 1).
    double uniform() {
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). n must be > 0.
    uint64_t below(uint64_t n) {
        // modulo bias is irrelevant at simulator scales; keep it simple
        return gen_() % n;
    }

    double normal() {
        // Box-Muller, one value per call (the spare is discarded so the
        // stream layout stays position-independent)
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 1e-300) u1 = 1e-300;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    /// Marsaglia-Tsang gamma sampler, shape alpha > 0, scale 1.
    double gamma(double alpha) {
        if (alpha < 1.0) {
            double u = uniform();
            if (u < 1e-300) u = 1e-300;
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        double d = alpha - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u < 1e-300) u = 1e-300;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    /// Dirichlet(beta) over k categories.
    std::vector<double> dirichlet(double beta, size_t k) {
        std::vector<double> p(k);
        double sum = 0.0;
        for (size_t i = 0; i < k; ++i) {
            p[i] = gamma(beta);
            sum += p[i];
        }
        if (sum <= 0.0) {
            for (auto& v : p) v = 1.0 / static_cast<double>(k);
            return p;
        }
        for (auto& v : p) v /= sum;
        return p;
    }

    /// Fisher-Yates shuffle.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            size_t j = static_cast<size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<size_t> permutation(size_t n) {
        std::vector<size_t> p(n);
        for (size_t i = 0; i < n; ++i) p[i] = i;
        shuffle(p);
        return p;
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace selsim
