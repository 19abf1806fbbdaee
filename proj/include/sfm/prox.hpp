#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "sfm/dense.hpp"
#include "sfm/rng.hpp"

namespace sfm {

// Outputs with magnitude below this are snapped to exact zero so that
// support-based metrics compare supports, not rounding noise.
inline constexpr double kZeroSnap = 1e-15;

struct ProxResult {
    std::vector<double> values;
    std::size_t theta = 0;   // active-set size
    double s_theta = 0.0;    // shrinkage scale S at theta
};

inline double soft_threshold(double v, double t) {
    if (v > t) return v - t;
    if (v < -t) return v + t;
    return 0.0;
}

inline std::vector<double> prox_l1(std::span<const double> p, double t) {
    if (t < 0.0) throw std::invalid_argument("prox_l1: negative threshold");
    std::vector<double> q(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) q[i] = soft_threshold(p[i], t);
    return q;
}

// Group (block) soft threshold: scales the whole vector toward zero.
inline std::vector<double> prox_group_l2(std::span<const double> p, double t) {
    if (t < 0.0) throw std::invalid_argument("prox_group_l2: negative threshold");
    double norm = 0.0;
    for (double v : p) norm += v * v;
    norm = std::sqrt(norm);
    std::vector<double> q(p.size(), 0.0);
    if (norm == 0.0) return q;
    const double factor = std::max(1.0 - t / norm, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) q[i] = factor * p[i];
    return q;
}

namespace detail {

inline void snap_zeros(std::vector<double>& q) {
    for (double& v : q) {
        if (std::abs(v) < kZeroSnap) v = 0.0;
    }
}

// Root of lam*m*j*S^(m-1) + S - c = 0 on [0, c]. Unique because the left
// side is strictly increasing in S >= 0.
inline double shrink_scale_root(double lam, int m, std::size_t j, double c) {
    if (c <= 0.0) return 0.0;
    const double a = lam * static_cast<double>(m) * static_cast<double>(j);
    if (a == 0.0) return c;
    if (m == 2) return c / (1.0 + a);
    if (m == 3) {
        // a*S^2 + S - c = 0, positive root.
        return (-1.0 + std::sqrt(1.0 + 4.0 * a * c)) / (2.0 * a);
    }
    // Safeguarded Newton on the bracket [0, c].
    double lo = 0.0, hi = c;
    double s = c / (1.0 + a);
    for (int iter = 0; iter < 100; ++iter) {
        const double pow_m2 = std::pow(s, m - 2);
        const double f = a * pow_m2 * s + s - c;
        if (std::abs(f) <= 1e-12) return s;
        if (f > 0.0) hi = s; else lo = s;
        const double df = a * static_cast<double>(m - 1) * pow_m2 + 1.0;
        double next = s - f / df;
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        s = next;
    }
    return s;
}

}  // namespace detail

// argmin_q 1/2 ||q - p||^2 + lam * ||q||_1^m, by descending-magnitude scan.
// The active set is the largest prefix (by |p|) where the per-element
// threshold lam*m*S_j^(m-1) still leaves the element positive.
inline ProxResult prox_pow_l1(std::span<const double> p, double lam, int m) {
    if (lam < 0.0) throw std::invalid_argument("prox_pow_l1: negative lambda");
    if (m < 2) throw std::invalid_argument("prox_pow_l1: order must be >= 2");

    const std::size_t d = p.size();
    ProxResult result;
    result.values.assign(p.begin(), p.end());
    if (lam == 0.0) {
        detail::snap_zeros(result.values);
        result.theta = static_cast<std::size_t>(
            std::count_if(result.values.begin(), result.values.end(),
                          [](double v) { return v != 0.0; }));
        double sum = 0.0;
        for (double v : result.values) sum += std::abs(v);
        result.s_theta = sum;
        return result;
    }

    std::vector<double> mags(d);
    for (std::size_t i = 0; i < d; ++i) mags[i] = std::abs(p[i]);
    std::sort(mags.begin(), mags.end(), std::greater<>());

    double cum = 0.0;
    std::size_t theta = 0;
    double s_theta = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        if (mags[j] == 0.0) break;
        cum += mags[j];
        double s_j;
        if (m == 2) {
            s_j = cum / (1.0 + 2.0 * lam * static_cast<double>(j + 1));
        } else {
            s_j = detail::shrink_scale_root(lam, m, j + 1, cum);
        }
        const double threshold = lam * static_cast<double>(m) * std::pow(s_j, m - 1);
        if (mags[j] - threshold >= 0.0) {
            theta = j + 1;
            s_theta = s_j;
        }
    }

    const double threshold = lam * static_cast<double>(m) * std::pow(s_theta, m - 1);
    for (double& v : result.values) v = soft_threshold(v, threshold);
    detail::snap_zeros(result.values);
    result.theta = theta;
    result.s_theta = s_theta;
    return result;
}

// Squared-l1 prox via sorting, O(d log d).
inline ProxResult prox_sq_l1_sort(std::span<const double> p, double lam) {
    return prox_pow_l1(p, lam, 2);
}

// Squared-l1 prox without sorting: randomized pivoting over the candidate
// set, O(d) expected. Output contract identical to prox_sq_l1_sort.
inline ProxResult prox_sq_l1_rand(std::span<const double> p, double lam, Rng& rng) {
    if (lam < 0.0) throw std::invalid_argument("prox_sq_l1_rand: negative lambda");

    ProxResult result;
    result.values.assign(p.begin(), p.end());

    // Zero entries never enter the support.
    std::vector<std::size_t> candidates;
    candidates.reserve(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] != 0.0) candidates.push_back(i);
    }

    if (lam == 0.0) {
        detail::snap_zeros(result.values);
        result.theta = candidates.size();
        double sum = 0.0;
        for (double v : p) sum += std::abs(v);
        result.s_theta = sum;
        return result;
    }

    double accumulated = 0.0;   // sum of |p_j| over accepted elements
    std::size_t theta = 0;
    std::vector<std::size_t> ge, lt;
    while (!candidates.empty()) {
        const std::size_t pivot = candidates[rng.next_below(candidates.size())];
        const double pivot_mag = std::abs(p[pivot]);
        ge.clear();
        lt.clear();
        double ge_sum = 0.0;
        for (std::size_t idx : candidates) {
            if (std::abs(p[idx]) >= pivot_mag) {
                ge.push_back(idx);
                ge_sum += std::abs(p[idx]);
            } else {
                lt.push_back(idx);
            }
        }
        const double s_candidate = (accumulated + ge_sum) /
            (1.0 + 2.0 * lam * static_cast<double>(theta + ge.size()));
        if (pivot_mag - 2.0 * lam * s_candidate >= 0.0) {
            accumulated += ge_sum;
            theta += ge.size();
            candidates = lt;
        } else {
            // Keep strictly-larger magnitudes only.
            std::erase_if(ge, [&](std::size_t idx) { return std::abs(p[idx]) == pivot_mag; });
            candidates = ge;
        }
    }

    const double s_theta = accumulated / (1.0 + 2.0 * lam * static_cast<double>(theta));
    for (double& v : result.values) v = soft_threshold(v, 2.0 * lam * s_theta);
    detail::snap_zeros(result.values);
    result.theta = theta;
    result.s_theta = s_theta;
    return result;
}

// Row-wise prox of lam * ||Q||_{2,1}^m: shrink the vector of row norms with
// the scalar power prox, then rescale each row.
inline DenseMatrix prox_pow_l21(const DenseMatrix& p, double lam, int m) {
    if (lam < 0.0) throw std::invalid_argument("prox_pow_l21: negative lambda");
    if (m < 2) throw std::invalid_argument("prox_pow_l21: order must be >= 2");

    const std::size_t d = p.rows();
    std::vector<double> norms(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        double sq = 0.0;
        for (double v : p.row(j)) sq += v * v;
        norms[j] = std::sqrt(sq);
    }
    const ProxResult shrunk = prox_pow_l1(norms, lam, m);

    DenseMatrix q(d, p.cols(), 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        if (norms[j] == 0.0 || shrunk.values[j] == 0.0) continue;
        const double scale = shrunk.values[j] / norms[j];
        auto src = p.row(j);
        auto dst = q.row(j);
        for (std::size_t s = 0; s < src.size(); ++s) {
            dst[s] = scale * src[s];
            if (std::abs(dst[s]) < kZeroSnap) dst[s] = 0.0;
        }
    }
    return q;
}

inline DenseMatrix prox_sq_l21(const DenseMatrix& p, double lam) {
    return prox_pow_l21(p, lam, 2);
}

}  // namespace sfm
