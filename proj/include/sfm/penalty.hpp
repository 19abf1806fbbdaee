#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "sfm/dense.hpp"
#include "sfm/kernels.hpp"
#include "sfm/sparse.hpp"

namespace sfm {

enum class RegKind { L2SQ, L1, L21, TI, CS, TI_M, CS_M, TI_ALL, CS_ALL };

struct RegularizerSpec {
    RegKind kind = RegKind::L2SQ;
    double lambda_w = 0.0;
    double lambda_p = 0.0;
    double lambda_tilde = 0.0;
};

enum class LossKind { Squared, Logistic };

inline double loss_value(LossKind loss, double f, double y) {
    switch (loss) {
        case LossKind::Squared: {
            const double r = f - y;
            return 0.5 * r * r;
        }
        case LossKind::Logistic: {
            const double z = -y * f;
            // log(1+e^z) computed stably for large |z|.
            return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        }
    }
    throw std::invalid_argument("loss_value: unknown loss");
}

inline double loss_deriv(LossKind loss, double f, double y) {
    switch (loss) {
        case LossKind::Squared:
            return f - y;
        case LossKind::Logistic:
            return -y / (1.0 + std::exp(y * f));
    }
    throw std::invalid_argument("loss_deriv: unknown loss");
}

// Smoothness constant of the loss in its first argument.
inline double loss_mu(LossKind loss) {
    return loss == LossKind::Squared ? 1.0 : 0.25;
}

inline double squared_fro(const DenseMatrix& P) {
    double out = 0.0;
    for (std::size_t j = 0; j < P.rows(); ++j)
        for (double v : P.row(j)) out += v * v;
    return out;
}

inline double entrywise_l1(const DenseMatrix& P) {
    double out = 0.0;
    for (std::size_t j = 0; j < P.rows(); ++j)
        for (double v : P.row(j)) out += std::abs(v);
    return out;
}

inline double l21_norm(const DenseMatrix& P) {
    double out = 0.0;
    for (std::size_t j = 0; j < P.rows(); ++j) {
        double sq = 0.0;
        for (double v : P.row(j)) sq += v * v;
        out += std::sqrt(sq);
    }
    return out;
}

// Sum over row pairs of |<p_{j1}, p_{j2}>|. O(d^2 k); diagnostics only.
inline double omega_star(const DenseMatrix& P) {
    double out = 0.0;
    for (std::size_t j1 = 0; j1 < P.rows(); ++j1) {
        auto r1 = P.row(j1);
        for (std::size_t j2 = j1 + 1; j2 < P.rows(); ++j2) {
            auto r2 = P.row(j2);
            double dot = 0.0;
            for (std::size_t s = 0; s < r1.size(); ++s) dot += r1[s] * r2[s];
            out += std::abs(dot);
        }
    }
    return out;
}

inline double omega_ti(const DenseMatrix& P) {
    double sq_col_l1 = 0.0;
    for (std::size_t s = 0; s < P.cols(); ++s) {
        double col = 0.0;
        for (std::size_t j = 0; j < P.rows(); ++j) col += std::abs(P(j, s));
        sq_col_l1 += col * col;
    }
    return 0.5 * (sq_col_l1 - squared_fro(P));
}

inline double omega_cs(const DenseMatrix& P) {
    const double l21 = l21_norm(P);
    return 0.5 * (l21 * l21 - squared_fro(P));
}

inline double omega_ti_m(const DenseMatrix& P, int m) {
    if (m < 1 || static_cast<std::size_t>(m) > P.rows())
        throw std::invalid_argument("omega_ti_m: order out of range");
    const std::size_t d = P.rows();
    std::vector<double> absp(d), ones(d, 1.0);
    double out = 0.0;
    for (std::size_t s = 0; s < P.cols(); ++s) {
        for (std::size_t j = 0; j < d; ++j) absp[j] = std::abs(P(j, s));
        out += anova_kernel(absp, ones, m);
    }
    return out;
}

inline double omega_cs_m(const DenseMatrix& P, int m) {
    if (m < 1 || static_cast<std::size_t>(m) > P.rows())
        throw std::invalid_argument("omega_cs_m: order out of range");
    const std::size_t d = P.rows();
    std::vector<double> norms(d), ones(d, 1.0);
    for (std::size_t j = 0; j < d; ++j) {
        double sq = 0.0;
        for (double v : P.row(j)) sq += v * v;
        norms[j] = std::sqrt(sq);
    }
    return anova_kernel(norms, ones, m);
}

// Raw all-subsets kernel sums; includes the degree-0 and degree-1 terms of
// the kernel product (an additive constant of k for TI_ALL, 1 for CS_ALL).
inline double omega_all(const DenseMatrix& P, RegKind kind) {
    const std::size_t d = P.rows();
    std::vector<double> ones(d, 1.0);
    if (kind == RegKind::TI_ALL) {
        std::vector<double> absp(d);
        double out = 0.0;
        for (std::size_t s = 0; s < P.cols(); ++s) {
            for (std::size_t j = 0; j < d; ++j) absp[j] = std::abs(P(j, s));
            out += all_subsets_kernel(absp, ones);
        }
        return out;
    }
    if (kind == RegKind::CS_ALL) {
        std::vector<double> norms(d);
        for (std::size_t j = 0; j < d; ++j) {
            double sq = 0.0;
            for (double v : P.row(j)) sq += v * v;
            norms[j] = std::sqrt(sq);
        }
        return all_subsets_kernel(norms, ones);
    }
    throw std::invalid_argument("omega_all: kind must be TI_ALL or CS_ALL");
}

inline double sparsity_penalty(const DenseMatrix& P, RegKind kind, int order = 2) {
    switch (kind) {
        case RegKind::L2SQ: return 0.0;
        case RegKind::L1: return entrywise_l1(P);
        case RegKind::L21: return l21_norm(P);
        case RegKind::TI: return omega_ti(P);
        case RegKind::CS: return omega_cs(P);
        case RegKind::TI_M: return omega_ti_m(P, order);
        case RegKind::CS_M: return omega_cs_m(P, order);
        case RegKind::TI_ALL:
        case RegKind::CS_ALL: return omega_all(P, kind);
    }
    throw std::invalid_argument("sparsity_penalty: unknown kind");
}

inline double squared_l2(std::span<const double> v) {
    double out = 0.0;
    for (double x : v) out += x * x;
    return out;
}

inline double mean_loss(const FmModel& model, const SparseDesignMatrix& data,
                        std::span<const double> y, LossKind loss) {
    if (data.n_rows() != y.size()) throw std::invalid_argument("mean_loss: label count mismatch");
    if (data.n_rows() == 0) return 0.0;
    double total = 0.0;
    for (std::size_t n = 0; n < data.n_rows(); ++n)
        total += loss_value(loss, fm_predict(model, data.row(n)), y[n]);
    return total / static_cast<double>(data.n_rows());
}

inline double objective_value(const FmModel& model, const SparseDesignMatrix& data,
                              std::span<const double> y, LossKind loss,
                              const RegularizerSpec& spec) {
    return mean_loss(model, data, y, loss)
        + spec.lambda_w * squared_l2(model.w)
        + spec.lambda_p * squared_fro(model.P)
        + spec.lambda_tilde * sparsity_penalty(model.P, spec.kind);
}

inline double objective_value(const HofmModel& model, const SparseDesignMatrix& data,
                              std::span<const double> y, LossKind loss,
                              const RegularizerSpec& spec) {
    if (data.n_rows() != y.size()) throw std::invalid_argument("objective_value: label count mismatch");
    double total = 0.0;
    for (std::size_t n = 0; n < data.n_rows(); ++n)
        total += loss_value(loss, hofm_predict(model, data.row(n)), y[n]);
    double obj = (data.n_rows() ? total / static_cast<double>(data.n_rows()) : 0.0)
        + spec.lambda_w * squared_l2(model.w);
    for (std::size_t mi = 0; mi < model.P_by_order.size(); ++mi) {
        const int m = static_cast<int>(mi) + 2;
        const DenseMatrix& P = model.P_by_order[mi];
        obj += spec.lambda_p * squared_fro(P);
        if (spec.kind == RegKind::TI_M) obj += spec.lambda_tilde * omega_ti_m(P, m);
        else if (spec.kind == RegKind::CS_M) obj += spec.lambda_tilde * omega_cs_m(P, m);
        else if (spec.kind != RegKind::L2SQ)
            obj += spec.lambda_tilde * sparsity_penalty(P, spec.kind);
    }
    return obj;
}

inline double objective_value(const AllSubsetsModel& model, const SparseDesignMatrix& data,
                              std::span<const double> y, LossKind loss,
                              const RegularizerSpec& spec) {
    if (data.n_rows() != y.size()) throw std::invalid_argument("objective_value: label count mismatch");
    double total = 0.0;
    for (std::size_t n = 0; n < data.n_rows(); ++n)
        total += loss_value(loss, all_subsets_predict(model, data.row(n)), y[n]);
    return (data.n_rows() ? total / static_cast<double>(data.n_rows()) : 0.0)
        + spec.lambda_p * squared_fro(model.P)
        + spec.lambda_tilde * sparsity_penalty(model.P, spec.kind);
}

// Loss + lam_w ||w||^2 + lam_tilde (2*Omega_* + ||P||^2); the common yardstick
// for comparing regularizers through the induced penalty on W = P P^T.
inline double l1_interaction_objective(const FmModel& model, const SparseDesignMatrix& data,
                                       std::span<const double> y, LossKind loss,
                                       double lam_w, double lam_tilde) {
    return mean_loss(model, data, y, loss)
        + lam_w * squared_l2(model.w)
        + lam_tilde * (2.0 * omega_star(model.P) + squared_fro(model.P));
}

// Exact factorization of a strictly-upper interaction matrix: one column per
// pair (i, t), i < t, carrying sign(w_it)*sqrt(|w_it|) at row i and
// sqrt(|w_it|) at row t; all-zero pair columns are dropped. The result
// satisfies strict-upper(P P^T) = W, omega_ti(P) = ||W||_1, ||P||_F^2 = 2||W||_1.
inline DenseMatrix exact_interaction_factor(const DenseMatrix& W) {
    if (W.rows() != W.cols()) throw std::invalid_argument("exact_interaction_factor: W must be square");
    const std::size_t d = W.rows();
    DenseMatrix P(d, d * (d - 1) / 2, 0.0);   // one column per strict-upper pair
    std::size_t s = 0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t t = i + 1; t < d; ++t, ++s) {
            const double v = W(i, t);
            if (v == 0.0) continue;
            const double root = std::sqrt(std::abs(v));
            P(i, s) = (v < 0.0 ? -root : root);
            P(t, s) = root;
        }
    return P;
}

}  // namespace sfm
