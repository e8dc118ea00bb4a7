#pragma once

#include <Eigen/Dense>

#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

namespace evc {

using Eigen::MatrixXd;
using Eigen::MatrixXi;
using Eigen::VectorXd;

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

/// Log-domain conventions used throughout: log 0 = -inf, exp(-inf) = 0,
/// logsumexp over an all-(-inf) set is -inf. Backups must never produce NaN.
inline double log_or_neg_inf(double p) {
    assert(p >= 0.0);
    return p > 0.0 ? std::log(p) : neg_inf;
}

/// Stable log(sum_i exp(x_i)).
inline double logsumexp(const VectorXd& x) {
    double m = neg_inf;
    for (Eigen::Index i = 0; i < x.size(); ++i) m = std::max(m, x[i]);
    if (m == neg_inf) return neg_inf;
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) s += std::exp(x[i] - m);
    return m + std::log(s);
}

/// Stable log(sum_i w_i exp(x_i)) for nonnegative weights; entries with
/// w_i = 0 are skipped so that 0 * exp(-inf) never yields NaN.
inline double log_dot(const VectorXd& w, const VectorXd& x) {
    assert(w.size() == x.size());
    double m = neg_inf;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (w[i] > 0.0) m = std::max(m, x[i]);
    if (m == neg_inf) return neg_inf;
    double s = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i)
        if (w[i] > 0.0) s += w[i] * std::exp(x[i] - m);
    return m + std::log(s);
}

/// Deterministic counter-based RNG. A splitmix64 stream keyed by (seed, index)
/// gives reproducible per-trajectory substreams regardless of worker count.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    static std::uint64_t derive(std::uint64_t seed, std::uint64_t index) {
        // one splitmix64 round over the combined key
        std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (index + 1);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    /// Uniform double in [0, 1).
    double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

    /// Index drawn from an unnormalized nonnegative weight vector.
    int categorical(const VectorXd& weights) {
        double total = weights.sum();
        assert(total > 0.0);
        double u = next_double() * total;
        double acc = 0.0;
        int last = 0;
        for (Eigen::Index i = 0; i < weights.size(); ++i) {
            if (weights[i] <= 0.0) continue;
            acc += weights[i];
            last = int(i);
            if (u < acc) return last;
        }
        return last;  // u landed on accumulated rounding slack
    }

  private:
    std::uint64_t state_;
};

}  // namespace evc
