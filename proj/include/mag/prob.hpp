#pragma once

#include <cmath>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

namespace mag {

inline double vec_sum(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s;
}

inline void normalize_in_place(std::vector<double>& v) {
    double s = vec_sum(v);
    if (!(s > 0.0)) throw std::invalid_argument("normalize: non-positive mass");
    for (double& x : v) x /= s;
}

inline bool is_distribution(std::span<const double> v, double tol = 1e-9) {
    double s = 0.0;
    for (double x : v) {
        if (!(x >= 0.0) || !std::isfinite(x)) return false;
        s += x;
    }
    return std::abs(s - 1.0) <= tol;
}

inline void require_distribution(std::span<const double> v, double tol = 1e-9) {
    if (!is_distribution(v, tol)) throw std::invalid_argument("vector is not a probability distribution");
}

// Total variation distance, 0.5 * L1.
inline double total_variation(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("total_variation: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
    return 0.5 * s;
}

// KL(p || q). Terms with p_i == 0 contribute zero; p_i > 0 with q_i == 0
// yields +infinity.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) throw std::invalid_argument("kl_divergence: size mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) return std::numeric_limits<double>::infinity();
        s += p[i] * std::log(p[i] / q[i]);
    }
    return s;
}

}  // namespace mag
