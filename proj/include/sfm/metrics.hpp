#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sfm/dense.hpp"

namespace sfm {

struct SupportReport {
    double estimation_error = 0.0;
    double f1 = 0.0;
    bool exact_recovery = false;
    std::size_t n_pred_interactions = 0;
    std::size_t n_pred_features = 0;
};

namespace detail {

inline double row_dot(const DenseMatrix& P, std::size_t j1, std::size_t j2) {
    auto r1 = P.row(j1);
    auto r2 = P.row(j2);
    double dot = 0.0;
    for (std::size_t s = 0; s < r1.size(); ++s) dot += r1[s] * r2[s];
    return dot;
}

}  // namespace detail

inline double estimation_error(const DenseMatrix& W_true, const DenseMatrix& P_hat) {
    if (W_true.rows() != W_true.cols() || W_true.rows() != P_hat.rows())
        throw std::invalid_argument("estimation_error: shape mismatch");
    const std::size_t d = W_true.rows();
    double num = 0.0, den = 0.0;
    for (std::size_t j1 = 0; j1 < d; ++j1) {
        for (std::size_t j2 = j1 + 1; j2 < d; ++j2) {
            const double diff = W_true(j1, j2) - detail::row_dot(P_hat, j1, j2);
            num += diff * diff;
            den += W_true(j1, j2) * W_true(j1, j2);
        }
    }
    if (den == 0.0) throw std::invalid_argument("estimation_error: zero true interaction matrix");
    return std::sqrt(num / den);
}

inline double support_f1(const DenseMatrix& W_true, const DenseMatrix& P_hat) {
    if (W_true.rows() != W_true.cols() || W_true.rows() != P_hat.rows())
        throw std::invalid_argument("support_f1: shape mismatch");
    const std::size_t d = W_true.rows();
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t j1 = 0; j1 < d; ++j1) {
        for (std::size_t j2 = j1 + 1; j2 < d; ++j2) {
            const bool truth = W_true(j1, j2) != 0.0;
            const bool pred = detail::row_dot(P_hat, j1, j2) != 0.0;
            if (truth && pred) ++tp;
            else if (!truth && pred) ++fp;
            else if (truth && !pred) ++fn;
        }
    }
    const double denom = static_cast<double>(2 * tp + fp + fn);
    return denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
}

inline bool exact_support_recovery(const DenseMatrix& W_true, const DenseMatrix& P_hat) {
    if (W_true.rows() != W_true.cols() || W_true.rows() != P_hat.rows())
        throw std::invalid_argument("exact_support_recovery: shape mismatch");
    const std::size_t d = W_true.rows();
    for (std::size_t j1 = 0; j1 < d; ++j1)
        for (std::size_t j2 = j1 + 1; j2 < d; ++j2)
            if ((W_true(j1, j2) != 0.0) != (detail::row_dot(P_hat, j1, j2) != 0.0)) return false;
    return true;
}

inline std::pair<std::size_t, std::size_t> count_used(const DenseMatrix& P_hat) {
    const std::size_t d = P_hat.rows();
    std::size_t interactions = 0;
    for (std::size_t j1 = 0; j1 < d; ++j1)
        for (std::size_t j2 = j1 + 1; j2 < d; ++j2)
            if (detail::row_dot(P_hat, j1, j2) != 0.0) ++interactions;
    std::size_t features = 0;
    for (std::size_t j = 0; j < d; ++j) {
        const auto r = P_hat.row(j);
        if (std::any_of(r.begin(), r.end(), [](double v) { return v != 0.0; })) ++features;
    }
    return {interactions, features};
}

inline SupportReport support_report(const DenseMatrix& W_true, const DenseMatrix& P_hat) {
    SupportReport rep;
    rep.estimation_error = estimation_error(W_true, P_hat);
    rep.f1 = support_f1(W_true, P_hat);
    rep.exact_recovery = exact_support_recovery(W_true, P_hat);
    const auto [ni, nf] = count_used(P_hat);
    rep.n_pred_interactions = ni;
    rep.n_pred_features = nf;
    return rep;
}

inline double rmse(std::span<const double> y_true, std::span<const double> y_pred) {
    if (y_true.size() != y_pred.size()) throw std::invalid_argument("rmse: length mismatch");
    if (y_true.empty()) return 0.0;
    double sq = 0.0;
    for (std::size_t i = 0; i < y_true.size(); ++i) {
        const double r = y_true[i] - y_pred[i];
        sq += r * r;
    }
    return std::sqrt(sq / static_cast<double>(y_true.size()));
}

// Rank-statistic AUC with midrank tie correction.
inline double roc_auc(std::span<const double> y_true, std::span<const double> scores) {
    if (y_true.size() != scores.size()) throw std::invalid_argument("roc_auc: length mismatch");
    const std::size_t n = y_true.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    double pos_rank_sum = 0.0;
    std::size_t n_pos = 0, n_neg = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + j + 1);   // 1-based
        for (std::size_t t = i; t < j; ++t) {
            if (y_true[order[t]] > 0.0) {
                pos_rank_sum += midrank;
                ++n_pos;
            } else {
                ++n_neg;
            }
        }
        i = j;
    }
    if (n_pos == 0 || n_neg == 0) throw std::invalid_argument("roc_auc: need both classes");
    return (pos_rank_sum - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1))
        / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

}  // namespace sfm
