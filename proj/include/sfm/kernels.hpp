#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "sfm/dense.hpp"
#include "sfm/sparse.hpp"

namespace sfm {

struct FmModel {
    double bias = 0.0;
    std::vector<double> w;   // length d
    DenseMatrix P;           // d x k
    bool use_linear = true;

    std::size_t n_features() const { return P.rows(); }
    std::size_t rank() const { return P.cols(); }
};

struct HofmModel {
    double bias = 0.0;
    std::vector<double> w;
    std::vector<DenseMatrix> P_by_order;   // orders m = 2 .. M
    bool use_linear = true;

    std::size_t n_features() const { return w.size(); }
    std::size_t max_order() const { return P_by_order.size() + 1; }
};

struct AllSubsetsModel {
    DenseMatrix P;   // d x k

    std::size_t n_features() const { return P.rows(); }
    std::size_t rank() const { return P.cols(); }
};

inline FmModel fm_model_zero(std::size_t d, std::size_t k) {
    FmModel m;
    m.w.assign(d, 0.0);
    m.P = DenseMatrix(d, k, 0.0);
    return m;
}

inline double fm_predict(const FmModel& model, const SparseSlice& x) {
    const std::size_t d = model.n_features();
    const std::size_t k = model.rank();
    double out = model.bias;
    for (std::size_t t = 0; t < x.size(); ++t) {
        if (x.indices[t] >= d) throw std::invalid_argument("fm_predict: feature index out of range");
        if (model.use_linear) out += model.w[x.indices[t]] * x.values[t];
    }
    for (std::size_t s = 0; s < k; ++s) {
        double lin = 0.0, quad = 0.0;
        for (std::size_t t = 0; t < x.size(); ++t) {
            const double v = x.values[t] * model.P(x.indices[t], s);
            lin += v;
            quad += v * v;
        }
        out += 0.5 * (lin * lin - quad);
    }
    return out;
}

// m-order ANOVA kernel via the O(d*m) recurrence over a rolling table.
inline double anova_kernel(std::span<const double> p, std::span<const double> x, int m) {
    if (p.size() != x.size()) throw std::invalid_argument("anova_kernel: length mismatch");
    if (m < 1) throw std::invalid_argument("anova_kernel: order must be >= 1");
    const std::size_t d = p.size();
    if (static_cast<std::size_t>(m) > d) return 0.0;

    std::vector<double> a(static_cast<std::size_t>(m) + 1, 0.0);
    a[0] = 1.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double z = x[i] * p[i];
        const int top = static_cast<int>(std::min<std::size_t>(m, i + 1));
        for (int t = top; t >= 1; --t) a[t] += z * a[t - 1];
    }
    return a[m];
}

// Gradient of the m-order ANOVA kernel w.r.t. p: entry j equals
// x_j * K_A^{m-1}(x_{-j}, p_{-j}), via forward and backward DP tables.
inline std::vector<double> anova_grad(std::span<const double> p, std::span<const double> x, int m) {
    if (p.size() != x.size()) throw std::invalid_argument("anova_grad: length mismatch");
    if (m < 1) throw std::invalid_argument("anova_grad: order must be >= 1");
    const std::size_t d = p.size();
    std::vector<double> grad(d, 0.0);
    if (static_cast<std::size_t>(m) > d) return grad;
    if (m == 1) {
        grad.assign(x.begin(), x.end());
        return grad;
    }

    // fwd[i][t] = degree-t ANOVA of elements [0, i); bwd[i][t] of [i, d).
    const std::size_t w = static_cast<std::size_t>(m);
    std::vector<double> fwd((d + 1) * w, 0.0), bwd((d + 1) * w, 0.0);
    auto F = [&](std::size_t i, std::size_t t) -> double& { return fwd[i * w + t]; };
    auto B = [&](std::size_t i, std::size_t t) -> double& { return bwd[i * w + t]; };
    for (std::size_t i = 0; i <= d; ++i) {
        F(i, 0) = 1.0;
        B(i, 0) = 1.0;
    }
    for (std::size_t i = 1; i <= d; ++i) {
        const double z = x[i - 1] * p[i - 1];
        for (std::size_t t = 1; t < w; ++t) F(i, t) = F(i - 1, t) + z * F(i - 1, t - 1);
    }
    for (std::size_t i = d; i-- > 0;) {
        const double z = x[i] * p[i];
        for (std::size_t t = 1; t < w; ++t) B(i, t) = B(i + 1, t) + z * B(i + 1, t - 1);
    }
    for (std::size_t j = 0; j < d; ++j) {
        double dk = 0.0;   // K_A^{m-1} of all elements except j
        for (std::size_t t = 0; t < w; ++t) dk += F(j, t) * B(j + 1, w - 1 - t);
        grad[j] = x[j] * dk;
    }
    return grad;
}

inline double all_subsets_kernel(std::span<const double> p, std::span<const double> x) {
    if (p.size() != x.size()) throw std::invalid_argument("all_subsets_kernel: length mismatch");
    double out = 1.0;
    for (std::size_t i = 0; i < p.size(); ++i) out *= 1.0 + x[i] * p[i];
    return out;
}

namespace detail {

// Densify a sparse row restricted to its support, alongside the matching
// column entries of P, so ANOVA kernels run in O(nnz * m).
inline void gather_column(const DenseMatrix& P, std::size_t s, const SparseSlice& x,
                          std::vector<double>& px, std::vector<double>& xv) {
    px.resize(x.size());
    xv.resize(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) {
        px[t] = P(x.indices[t], s);
        xv[t] = x.values[t];
    }
}

}  // namespace detail

inline double hofm_predict(const HofmModel& model, const SparseSlice& x) {
    const std::size_t d = model.n_features();
    double out = model.bias;
    for (std::size_t t = 0; t < x.size(); ++t) {
        if (x.indices[t] >= d) throw std::invalid_argument("hofm_predict: feature index out of range");
        if (model.use_linear) out += model.w[x.indices[t]] * x.values[t];
    }
    std::vector<double> px, xv;
    for (std::size_t mi = 0; mi < model.P_by_order.size(); ++mi) {
        const int m = static_cast<int>(mi) + 2;
        const DenseMatrix& P = model.P_by_order[mi];
        for (std::size_t s = 0; s < P.cols(); ++s) {
            detail::gather_column(P, s, x, px, xv);
            out += anova_kernel(px, xv, m);
        }
    }
    return out;
}

inline double all_subsets_predict(const AllSubsetsModel& model, const SparseSlice& x) {
    const std::size_t d = model.n_features();
    double out = 0.0;
    std::vector<double> px, xv;
    for (std::size_t s = 0; s < model.P.cols(); ++s) {
        for (std::size_t t = 0; t < x.size(); ++t) {
            if (x.indices[t] >= d) throw std::invalid_argument("all_subsets_predict: feature index out of range");
        }
        detail::gather_column(model.P, s, x, px, xv);
        out += all_subsets_kernel(px, xv);
    }
    return out;
}

}  // namespace sfm
