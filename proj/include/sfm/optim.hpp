#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "sfm/dense.hpp"
#include "sfm/kernels.hpp"
#include "sfm/penalty.hpp"
#include "sfm/prox.hpp"
#include "sfm/rng.hpp"
#include "sfm/sparse.hpp"

namespace sfm {

enum class ModelKind { FM, HOFM, ALLSUBSETS };

struct TrainConfig {
    LossKind loss = LossKind::Squared;
    RegularizerSpec spec;
    std::size_t rank = 30;
    int order = 2;                  // highest interaction order for HOFM
    std::size_t max_epochs = 100;
    double tol = 1e-3;              // max absolute parameter change
    std::uint64_t seed = 0;
    bool fit_linear = true;
    bool fit_bias = true;
    double init_std = 0.01;
    double time_budget = std::numeric_limits<double>::infinity();   // seconds
};

struct HistoryEntry {
    std::size_t epoch = 0;
    double objective = 0.0;
    double seconds = 0.0;
};

struct TrainState {
    FmModel model;
    std::vector<double> f_cache;    // predictions f_n
    DenseMatrix a_cache;            // N x k inner products <x_n, p_{:,s}>
    std::vector<double> c_cols;     // per-column l1 sums (TI)
    double c_rows = 0.0;            // sum of row l2 norms (CS)
    std::size_t epoch = 0;
    std::vector<HistoryEntry> history;
};

namespace detail {

inline void refresh_fm_caches(TrainState& st, const SparseDesignMatrix& data) {
    const std::size_t N = data.n_rows();
    const std::size_t k = st.model.rank();
    st.a_cache = DenseMatrix(N, k, 0.0);
    st.f_cache.assign(N, 0.0);
    for (std::size_t n = 0; n < N; ++n) {
        const auto x = data.row(n);
        for (std::size_t s = 0; s < k; ++s) {
            double a = 0.0;
            for (std::size_t t = 0; t < x.size(); ++t) a += x.values[t] * st.model.P(x.indices[t], s);
            st.a_cache(n, s) = a;
        }
        st.f_cache[n] = fm_predict(st.model, x);
    }
    st.c_cols.assign(k, 0.0);
    st.c_rows = 0.0;
    for (std::size_t j = 0; j < st.model.n_features(); ++j) {
        double rowsq = 0.0;
        for (std::size_t s = 0; s < k; ++s) {
            st.c_cols[s] += std::abs(st.model.P(j, s));
            rowsq += st.model.P(j, s) * st.model.P(j, s);
        }
        st.c_rows += std::sqrt(rowsq);
    }
}

inline void check_finite(double v, std::size_t epoch, const char* where) {
    if (!std::isfinite(v))
        throw std::runtime_error(std::string(where) + ": non-finite update at epoch "
                                 + std::to_string(epoch));
}

// Bias (exact step for squared loss, Lipschitz step for logistic) and linear
// sweep shared by every CD-family epoch over a prediction cache.
template <typename Model>
inline double linear_updates(Model& model, std::vector<double>& f_cache,
                             const SparseDesignMatrix& data, std::span<const double> y,
                             const TrainConfig& cfg, std::size_t epoch) {
    const double N = static_cast<double>(data.n_rows());
    const double mu = loss_mu(cfg.loss);
    double max_change = 0.0;
    if (cfg.fit_bias && data.n_rows() > 0) {
        double g = 0.0;
        for (std::size_t n = 0; n < data.n_rows(); ++n)
            g += loss_deriv(cfg.loss, f_cache[n], y[n]);
        const double delta = -g / (N * mu);
        check_finite(delta, epoch, "bias update");
        model.bias += delta;
        for (double& f : f_cache) f += delta;
    }
    if (cfg.fit_linear) {
        for (std::size_t j = 0; j < model.w.size(); ++j) {
            const auto col = data.col(j);
            double g = 0.0, lip = 0.0;
            for (std::size_t t = 0; t < col.size(); ++t) {
                const double x = col.values[t];
                g += loss_deriv(cfg.loss, f_cache[col.indices[t]], y[col.indices[t]]) * x;
                lip += x * x;
            }
            g = g / N + 2.0 * cfg.spec.lambda_w * model.w[j];
            lip = mu * lip / N + 2.0 * cfg.spec.lambda_w;
            if (lip == 0.0) continue;
            const double delta = -g / lip;
            check_finite(delta, epoch, "linear update");
            model.w[j] += delta;
            max_change = std::max(max_change, std::abs(delta));
            for (std::size_t t = 0; t < col.size(); ++t)
                f_cache[col.indices[t]] += col.values[t] * delta;
        }
    }
    return max_change;
}

enum class CoordPenalty { None, L1, TI };
enum class BlockPenalty { None, L21, CS };

inline double fm_coord_epoch(TrainState& st, const SparseDesignMatrix& data,
                             std::span<const double> y, const TrainConfig& cfg,
                             CoordPenalty pen) {
    const double N = static_cast<double>(data.n_rows());
    const double mu = loss_mu(cfg.loss);
    const double lam_p = cfg.spec.lambda_p;
    const double lam_t = cfg.spec.lambda_tilde;
    FmModel& model = st.model;

    double max_change = linear_updates(model, st.f_cache, data, y, cfg, st.epoch);

    for (std::size_t s = 0; s < model.rank(); ++s) {
        for (std::size_t j = 0; j < model.n_features(); ++j) {
            const auto col = data.col(j);
            const double p_old = model.P(j, s);
            double g = 2.0 * lam_p * p_old;
            double lip = 2.0 * lam_p;
            double gdata = 0.0, ldata = 0.0;
            for (std::size_t t = 0; t < col.size(); ++t) {
                const std::size_t n = col.indices[t];
                const double x = col.values[t];
                const double fp = x * (st.a_cache(n, s) - x * p_old);
                gdata += loss_deriv(cfg.loss, st.f_cache[n], y[n]) * fp;
                ldata += fp * fp;
            }
            g += gdata / N;
            lip += mu * ldata / N;
            if (lip == 0.0) continue;
            const double eta = 1.0 / lip;
            double p_new = p_old - eta * g;
            if (pen == CoordPenalty::L1 || pen == CoordPenalty::TI) {
                double thresh = eta * lam_t;
                // The cached column sum can drift a hair below |p_old|.
                if (pen == CoordPenalty::TI) thresh *= std::max(0.0, st.c_cols[s] - std::abs(p_old));
                p_new = soft_threshold(p_new, thresh);
                if (thresh > 0.0 && std::abs(p_new) < kZeroSnap) p_new = 0.0;
            }
            check_finite(p_new, st.epoch, "factor update");
            const double delta = p_new - p_old;
            if (delta != 0.0) {
                for (std::size_t t = 0; t < col.size(); ++t) {
                    const std::size_t n = col.indices[t];
                    const double x = col.values[t];
                    st.f_cache[n] += x * (st.a_cache(n, s) - x * p_old) * delta;
                    st.a_cache(n, s) += x * delta;
                }
                model.P(j, s) = p_new;
                max_change = std::max(max_change, std::abs(delta));
            }
            if (pen == CoordPenalty::TI)
                st.c_cols[s] += std::abs(p_new) - std::abs(p_old);
        }
    }
    ++st.epoch;
    return max_change;
}

inline double fm_block_epoch(TrainState& st, const SparseDesignMatrix& data,
                             std::span<const double> y, const TrainConfig& cfg,
                             BlockPenalty pen) {
    const double N = static_cast<double>(data.n_rows());
    const double mu = loss_mu(cfg.loss);
    const double lam_p = cfg.spec.lambda_p;
    const double lam_t = cfg.spec.lambda_tilde;
    FmModel& model = st.model;
    const std::size_t k = model.rank();

    double max_change = linear_updates(model, st.f_cache, data, y, cfg, st.epoch);

    std::vector<double> grad(k), p_old(k), p_grad(k);
    for (std::size_t j = 0; j < model.n_features(); ++j) {
        const auto col = data.col(j);
        for (std::size_t s = 0; s < k; ++s) {
            p_old[s] = model.P(j, s);
            grad[s] = 2.0 * lam_p * p_old[s];
        }
        double lip = 2.0 * lam_p;
        double ldata = 0.0;
        for (std::size_t t = 0; t < col.size(); ++t) {
            const std::size_t n = col.indices[t];
            const double x = col.values[t];
            const double ld = loss_deriv(cfg.loss, st.f_cache[n], y[n]);
            for (std::size_t s = 0; s < k; ++s) {
                const double fp = x * (st.a_cache(n, s) - x * p_old[s]);
                grad[s] += ld * fp / N;
                ldata += fp * fp;
            }
        }
        lip += mu * ldata / N;
        if (lip == 0.0) continue;
        const double eta = 1.0 / lip;
        for (std::size_t s = 0; s < k; ++s) p_grad[s] = p_old[s] - eta * grad[s];

        double old_norm = 0.0;
        for (std::size_t s = 0; s < k; ++s) old_norm += p_old[s] * p_old[s];
        old_norm = std::sqrt(old_norm);

        double thresh = 0.0;
        if (pen == BlockPenalty::L21) thresh = eta * lam_t;
        else if (pen == BlockPenalty::CS) thresh = eta * lam_t * std::max(0.0, st.c_rows - old_norm);

        std::vector<double> p_new = prox_group_l2(p_grad, thresh);
        double new_norm = 0.0;
        for (std::size_t s = 0; s < k; ++s) {
            if (thresh > 0.0 && std::abs(p_new[s]) < kZeroSnap) p_new[s] = 0.0;
            check_finite(p_new[s], st.epoch, "row update");
            new_norm += p_new[s] * p_new[s];
        }
        new_norm = std::sqrt(new_norm);

        for (std::size_t t = 0; t < col.size(); ++t) {
            const std::size_t n = col.indices[t];
            const double x = col.values[t];
            for (std::size_t s = 0; s < k; ++s) {
                const double delta = p_new[s] - p_old[s];
                if (delta == 0.0) continue;
                st.f_cache[n] += x * (st.a_cache(n, s) - x * p_old[s]) * delta;
                st.a_cache(n, s) += x * delta;
            }
        }
        for (std::size_t s = 0; s < k; ++s) {
            max_change = std::max(max_change, std::abs(p_new[s] - p_old[s]));
            model.P(j, s) = p_new[s];
        }
        if (pen == BlockPenalty::CS) st.c_rows += new_norm - old_norm;
    }
    ++st.epoch;
    return max_change;
}

}  // namespace detail

inline TrainState make_train_state(FmModel model, const SparseDesignMatrix& data) {
    TrainState st;
    st.model = std::move(model);
    detail::refresh_fm_caches(st, data);
    return st;
}

inline double cd_epoch_fm(TrainState& st, const SparseDesignMatrix& data,
                          std::span<const double> y, const TrainConfig& cfg) {
    return detail::fm_coord_epoch(st, data, y, cfg, detail::CoordPenalty::None);
}

inline double pcd_epoch_ti(TrainState& st, const SparseDesignMatrix& data,
                           std::span<const double> y, const TrainConfig& cfg) {
    return detail::fm_coord_epoch(st, data, y, cfg, detail::CoordPenalty::TI);
}

inline double pcd_epoch_l1(TrainState& st, const SparseDesignMatrix& data,
                           std::span<const double> y, const TrainConfig& cfg) {
    return detail::fm_coord_epoch(st, data, y, cfg, detail::CoordPenalty::L1);
}

inline double pbcd_epoch_cs(TrainState& st, const SparseDesignMatrix& data,
                            std::span<const double> y, const TrainConfig& cfg) {
    return detail::fm_block_epoch(st, data, y, cfg, detail::BlockPenalty::CS);
}

inline double pbcd_epoch_l21(TrainState& st, const SparseDesignMatrix& data,
                             std::span<const double> y, const TrainConfig& cfg) {
    return detail::fm_block_epoch(st, data, y, cfg, detail::BlockPenalty::L21);
}

// ---------------------------------------------------------------------------
// SGD with multiplicative lazy l2 shrinkage.

struct StepSchedule {
    double eta0 = 0.01;
    double decay = 0.0;   // eta_t = eta0 / (1 + eta0 * decay * t)

    double eta(std::uint64_t t) const {
        return eta0 / (1.0 + eta0 * decay * static_cast<double>(t));
    }
};

struct SgdState {
    FmModel model;
    double alpha_w = 1.0;
    double alpha_p = 1.0;
    std::vector<double> alpha_w_last;   // alpha_w at each feature's last touch
    std::vector<double> alpha_p_last;
    std::uint64_t step = 0;
    Rng rng;

    SgdState(FmModel m, std::uint64_t seed)
        : model(std::move(m)),
          alpha_w_last(model.n_features(), 1.0),
          alpha_p_last(model.n_features(), 1.0),
          rng(seed) {}
};

namespace detail {

inline void sgd_flush_w(SgdState& st) {
    for (std::size_t j = 0; j < st.model.n_features(); ++j) {
        if (st.alpha_w_last[j] != st.alpha_w)
            st.model.w[j] *= st.alpha_w / st.alpha_w_last[j];
        st.alpha_w_last[j] = 1.0;
    }
    st.alpha_w = 1.0;
}

inline void sgd_flush_p(SgdState& st) {
    for (std::size_t j = 0; j < st.model.n_features(); ++j) {
        if (st.alpha_p_last[j] != st.alpha_p) {
            const double r = st.alpha_p / st.alpha_p_last[j];
            for (double& v : st.model.P.row(j)) v *= r;
        }
        st.alpha_p_last[j] = 1.0;
    }
    st.alpha_p = 1.0;
}

}  // namespace detail

// Folds all pending lazy scale factors into the parameters.
inline void sgd_finalize(SgdState& st) {
    detail::sgd_flush_w(st);
    detail::sgd_flush_p(st);
}

inline void sgd_epoch_fm(SgdState& st, const SparseDesignMatrix& data,
                         std::span<const double> y, const TrainConfig& cfg,
                         const StepSchedule& schedule) {
    const std::size_t N = data.n_rows();
    const std::size_t k = st.model.rank();
    std::vector<double> a(k);
    for (std::size_t it = 0; it < N; ++it) {
        const std::size_t n = st.rng.next_below(N);
        const auto x = data.row(n);

        // Bring touched coordinates current before evaluating the model.
        for (std::size_t t = 0; t < x.size(); ++t) {
            const std::size_t j = x.indices[t];
            if (st.alpha_w_last[j] != st.alpha_w) {
                st.model.w[j] *= st.alpha_w / st.alpha_w_last[j];
                st.alpha_w_last[j] = st.alpha_w;
            }
            if (st.alpha_p_last[j] != st.alpha_p) {
                const double r = st.alpha_p / st.alpha_p_last[j];
                for (double& v : st.model.P.row(j)) v *= r;
                st.alpha_p_last[j] = st.alpha_p;
            }
        }

        const double f = fm_predict(st.model, x);
        const double ld = loss_deriv(cfg.loss, f, y[n]);
        const double eta = schedule.eta(st.step);
        const double factor_w = 1.0 - 2.0 * eta * cfg.spec.lambda_w;
        const double factor_p = 1.0 - 2.0 * eta * cfg.spec.lambda_p;
        if (factor_w <= 0.0 || factor_p <= 0.0)
            throw std::runtime_error("sgd_epoch_fm: step schedule makes shrink factor nonpositive");

        if (cfg.fit_bias) st.model.bias -= eta * ld;

        for (std::size_t s = 0; s < k; ++s) {
            double as = 0.0;
            for (std::size_t t = 0; t < x.size(); ++t)
                as += x.values[t] * st.model.P(x.indices[t], s);
            a[s] = as;
        }
        for (std::size_t t = 0; t < x.size(); ++t) {
            const std::size_t j = x.indices[t];
            const double xv = x.values[t];
            if (cfg.fit_linear) st.model.w[j] = factor_w * st.model.w[j] - eta * ld * xv;
            auto pr = st.model.P.row(j);
            for (std::size_t s = 0; s < k; ++s)
                pr[s] = factor_p * pr[s] - eta * ld * xv * (a[s] - xv * pr[s]);
        }
        st.alpha_w *= factor_w;
        st.alpha_p *= factor_p;
        for (std::size_t t = 0; t < x.size(); ++t) {
            st.alpha_w_last[x.indices[t]] = st.alpha_w;
            st.alpha_p_last[x.indices[t]] = st.alpha_p;
        }
        if (st.alpha_w < 1e-9) detail::sgd_flush_w(st);
        if (st.alpha_p < 1e-9) detail::sgd_flush_p(st);
        ++st.step;
    }
}

// ---------------------------------------------------------------------------
// Proximal SGD: minibatch gradient step on the whole parameter set, then the
// full proximal map of the sparsity penalty.

struct PsgdState {
    FmModel model;
    std::uint64_t step = 0;
    Rng rng;

    PsgdState(FmModel m, std::uint64_t seed) : model(std::move(m)), rng(seed) {}
};

inline void psgd_epoch(PsgdState& st, const SparseDesignMatrix& data,
                       std::span<const double> y, const TrainConfig& cfg,
                       const StepSchedule& schedule, std::size_t batch_size = 0) {
    const std::size_t N = data.n_rows();
    if (N == 0) return;
    const std::size_t d = st.model.n_features();
    const std::size_t k = st.model.rank();
    std::size_t B = batch_size;
    if (B == 0) {
        const std::size_t nnz = std::max<std::size_t>(data.nnz(), 1);
        B = (N * d + nnz - 1) / nnz;
        B = std::max<std::size_t>(B, 1);
    }
    B = std::min(B, N);
    const std::size_t n_batches = (N + B - 1) / B;

    std::vector<double> a(k);
    std::vector<std::size_t> batch(B);
    for (std::size_t bi = 0; bi < n_batches; ++bi) {
        if (B == N) {
            for (std::size_t i = 0; i < N; ++i) batch[i] = i;
        } else {
            for (std::size_t i = 0; i < B; ++i) batch[i] = st.rng.next_below(N);
        }

        double g_bias = 0.0;
        std::vector<double> g_w(d, 0.0);
        DenseMatrix g_P(d, k, 0.0);
        for (std::size_t n : batch) {
            const auto x = data.row(n);
            const double ld = loss_deriv(cfg.loss, fm_predict(st.model, x), y[n]);
            g_bias += ld;
            for (std::size_t s = 0; s < k; ++s) {
                double as = 0.0;
                for (std::size_t t = 0; t < x.size(); ++t)
                    as += x.values[t] * st.model.P(x.indices[t], s);
                a[s] = as;
            }
            for (std::size_t t = 0; t < x.size(); ++t) {
                const std::size_t j = x.indices[t];
                const double xv = x.values[t];
                if (cfg.fit_linear) g_w[j] += ld * xv;
                for (std::size_t s = 0; s < k; ++s)
                    g_P(j, s) += ld * xv * (a[s] - xv * st.model.P(j, s));
            }
        }
        const double inv_b = 1.0 / static_cast<double>(B);
        const double eta = schedule.eta(st.step);
        if (eta <= 0.0)
            throw std::runtime_error("psgd_epoch: nonpositive step size");
        if (cfg.fit_bias) st.model.bias -= eta * g_bias * inv_b;
        if (cfg.fit_linear)
            for (std::size_t j = 0; j < d; ++j)
                st.model.w[j] -= eta * (g_w[j] * inv_b + 2.0 * cfg.spec.lambda_w * st.model.w[j]);
        for (std::size_t j = 0; j < d; ++j)
            for (std::size_t s = 0; s < k; ++s)
                st.model.P(j, s) -= eta * (g_P(j, s) * inv_b + 2.0 * cfg.spec.lambda_p * st.model.P(j, s));

        const double t = eta * cfg.spec.lambda_tilde;
        switch (cfg.spec.kind) {
            case RegKind::TI: {
                std::vector<double> col(d);
                for (std::size_t s = 0; s < k; ++s) {
                    for (std::size_t j = 0; j < d; ++j) col[j] = st.model.P(j, s);
                    const auto res = prox_sq_l1_sort(col, t);
                    for (std::size_t j = 0; j < d; ++j) st.model.P(j, s) = res.values[j];
                }
                break;
            }
            case RegKind::CS:
                st.model.P = prox_sq_l21(st.model.P, t);
                break;
            case RegKind::L1:
                for (std::size_t j = 0; j < d; ++j)
                    for (double& v : st.model.P.row(j)) v = soft_threshold(v, t);
                break;
            case RegKind::L21:
                for (std::size_t j = 0; j < d; ++j) {
                    const auto row = st.model.P.row(j);
                    std::vector<double> q = prox_group_l2(std::span<const double>(row.data(), row.size()), t);
                    for (std::size_t s = 0; s < k; ++s) st.model.P(j, s) = q[s];
                }
                break;
            case RegKind::L2SQ:
                break;
            default:
                throw std::invalid_argument("psgd_epoch: unsupported penalty kind");
        }
        ++st.step;
    }
}

// ---------------------------------------------------------------------------
// Higher-order FMs: proximal CD per order with ANOVA-kernel thresholds.

struct HofmTrainState {
    HofmModel model;
    std::vector<double> f_cache;
    std::size_t epoch = 0;
    std::vector<HistoryEntry> history;
};

inline HofmTrainState make_hofm_train_state(HofmModel model, const SparseDesignMatrix& data) {
    HofmTrainState st;
    st.model = std::move(model);
    st.f_cache.resize(data.n_rows());
    for (std::size_t n = 0; n < data.n_rows(); ++n)
        st.f_cache[n] = hofm_predict(st.model, data.row(n));
    return st;
}

namespace detail {

// K_A^{m}(x_{-j}, p_{-j}) over the support of a sparse row.
inline double anova_without(const DenseMatrix& P, std::size_t s, const SparseSlice& x,
                            std::size_t skip, int m,
                            std::vector<double>& px, std::vector<double>& xv) {
    px.clear();
    xv.clear();
    for (std::size_t t = 0; t < x.size(); ++t) {
        if (x.indices[t] == skip) continue;
        px.push_back(P(x.indices[t], s));
        xv.push_back(x.values[t]);
    }
    if (px.size() < static_cast<std::size_t>(m)) return m == 0 ? 1.0 : 0.0;
    if (m == 0) return 1.0;
    return anova_kernel(px, xv, m);
}

enum class HofmPenalty { None, TI_M, CS_M };

inline double hofm_epoch(HofmTrainState& st, const SparseDesignMatrix& data,
                         std::span<const double> y, const TrainConfig& cfg,
                         HofmPenalty pen) {
    const double N = static_cast<double>(data.n_rows());
    const double mu = loss_mu(cfg.loss);
    const double lam_p = cfg.spec.lambda_p;
    const double lam_t = cfg.spec.lambda_tilde;
    HofmModel& model = st.model;
    const std::size_t d = model.n_features();

    double max_change = linear_updates(model, st.f_cache, data, y, cfg, st.epoch);

    std::vector<double> px, xv, ones(d > 0 ? d - 1 : 0, 1.0), absp(d > 0 ? d - 1 : 0);
    std::vector<double> fps;
    for (std::size_t mi = 0; mi < model.P_by_order.size(); ++mi) {
        const int m = static_cast<int>(mi) + 2;
        DenseMatrix& P = model.P_by_order[mi];
        const std::size_t k = P.cols();
        if (pen == HofmPenalty::CS_M) {
            // Row-wise PBCD with the CS^m data-adaptive group threshold.
            std::vector<double> norms(d, 0.0);
            for (std::size_t j = 0; j < d; ++j) {
                double sq = 0.0;
                for (double v : P.row(j)) sq += v * v;
                norms[j] = std::sqrt(sq);
            }
            std::vector<double> grad(k), p_old(k), p_grad(k);
            DenseMatrix fp_scratch(1, 1, 0.0);
            for (std::size_t j = 0; j < d; ++j) {
                const auto col = data.col(j);
                for (std::size_t s = 0; s < k; ++s) {
                    p_old[s] = P(j, s);
                    grad[s] = 2.0 * lam_p * p_old[s];
                }
                double lip = 2.0 * lam_p;
                fp_scratch = DenseMatrix(col.size(), k, 0.0);
                for (std::size_t t = 0; t < col.size(); ++t) {
                    const std::size_t n = col.indices[t];
                    const auto x = data.row(n);
                    const double ld = loss_deriv(cfg.loss, st.f_cache[n], y[n]);
                    const double xj = col.values[t];
                    for (std::size_t s = 0; s < k; ++s) {
                        const double fp = xj * anova_without(P, s, x, j, m - 1, px, xv);
                        fp_scratch(t, s) = fp;
                        grad[s] += ld * fp / N;
                        lip += mu * fp * fp / N;
                    }
                }
                if (lip == 0.0) continue;
                const double eta = 1.0 / lip;
                for (std::size_t s = 0; s < k; ++s) p_grad[s] = p_old[s] - eta * grad[s];

                double thresh = 0.0;
                if (lam_t > 0.0) {
                    std::vector<double> other;
                    other.reserve(d - 1);
                    for (std::size_t i = 0; i < d; ++i)
                        if (i != j) other.push_back(norms[i]);
                    std::vector<double> one(other.size(), 1.0);
                    const double c = static_cast<std::size_t>(m - 1) <= other.size()
                        ? anova_kernel(other, one, m - 1) : 0.0;
                    thresh = eta * lam_t * c;
                }
                std::vector<double> p_new = prox_group_l2(p_grad, thresh);
                double new_norm = 0.0;
                for (std::size_t s = 0; s < k; ++s) {
                    if (thresh > 0.0 && std::abs(p_new[s]) < kZeroSnap) p_new[s] = 0.0;
                    check_finite(p_new[s], st.epoch, "hofm row update");
                    new_norm += p_new[s] * p_new[s];
                }
                for (std::size_t t = 0; t < col.size(); ++t) {
                    const std::size_t n = col.indices[t];
                    for (std::size_t s = 0; s < k; ++s)
                        st.f_cache[n] += fp_scratch(t, s) * (p_new[s] - p_old[s]);
                }
                for (std::size_t s = 0; s < k; ++s) {
                    max_change = std::max(max_change, std::abs(p_new[s] - p_old[s]));
                    P(j, s) = p_new[s];
                }
                norms[j] = std::sqrt(new_norm);
            }
            continue;
        }
        for (std::size_t s = 0; s < k; ++s) {
            for (std::size_t j = 0; j < d; ++j) {
                const auto col = data.col(j);
                const double p_old = P(j, s);
                double g = 2.0 * lam_p * p_old;
                double lip = 2.0 * lam_p;
                fps.assign(col.size(), 0.0);
                for (std::size_t t = 0; t < col.size(); ++t) {
                    const std::size_t n = col.indices[t];
                    const auto x = data.row(n);
                    const double fp = col.values[t] * anova_without(P, s, x, j, m - 1, px, xv);
                    fps[t] = fp;
                    g += loss_deriv(cfg.loss, st.f_cache[n], y[n]) * fp / N;
                    lip += mu * fp * fp / N;
                }
                if (lip == 0.0) continue;
                const double eta = 1.0 / lip;
                double p_new = p_old - eta * g;
                if (pen == HofmPenalty::TI_M && lam_t > 0.0) {
                    absp.clear();
                    for (std::size_t i = 0; i < d; ++i)
                        if (i != j) absp.push_back(std::abs(P(i, s)));
                    std::vector<double> one(absp.size(), 1.0);
                    const double c = static_cast<std::size_t>(m - 1) <= absp.size()
                        ? anova_kernel(absp, one, m - 1) : 0.0;
                    const double thresh = eta * lam_t * c;
                    p_new = soft_threshold(p_new, thresh);
                    if (thresh > 0.0 && std::abs(p_new) < kZeroSnap) p_new = 0.0;
                }
                check_finite(p_new, st.epoch, "hofm update");
                const double delta = p_new - p_old;
                if (delta != 0.0) {
                    for (std::size_t t = 0; t < col.size(); ++t)
                        st.f_cache[col.indices[t]] += fps[t] * delta;
                    P(j, s) = p_new;
                    max_change = std::max(max_change, std::abs(delta));
                }
            }
        }
    }
    ++st.epoch;
    return max_change;
}

}  // namespace detail

inline double cd_epoch_hofm(HofmTrainState& st, const SparseDesignMatrix& data,
                            std::span<const double> y, const TrainConfig& cfg) {
    return detail::hofm_epoch(st, data, y, cfg, detail::HofmPenalty::None);
}

inline double pcd_epoch_hofm_ti(HofmTrainState& st, const SparseDesignMatrix& data,
                                std::span<const double> y, const TrainConfig& cfg) {
    return detail::hofm_epoch(st, data, y, cfg, detail::HofmPenalty::TI_M);
}

inline double pbcd_epoch_hofm_cs(HofmTrainState& st, const SparseDesignMatrix& data,
                                 std::span<const double> y, const TrainConfig& cfg) {
    return detail::hofm_epoch(st, data, y, cfg, detail::HofmPenalty::CS_M);
}

// ---------------------------------------------------------------------------
// All-subsets model: multilinear coordinate / row updates with
// multiplicatively maintained kernel caches.

struct AllSubsetsTrainState {
    AllSubsetsModel model;
    std::vector<double> f_cache;
    DenseMatrix k_cache;           // N x k per-column kernel values
    std::vector<double> t_cols;    // prod_j (1 + |p_{j,s}|) per column
    double r_rows = 1.0;           // prod_j (1 + ||p_j||)
    std::size_t epoch = 0;
    std::vector<HistoryEntry> history;
};

namespace detail {

inline constexpr double kDenomGuard = 1e-12;

inline double as_kernel_without(const DenseMatrix& P, std::size_t s, const SparseSlice& x,
                                std::size_t skip) {
    double out = 1.0;
    for (std::size_t t = 0; t < x.size(); ++t) {
        if (x.indices[t] == skip) continue;
        out *= 1.0 + x.values[t] * P(x.indices[t], s);
    }
    return out;
}

}  // namespace detail

inline AllSubsetsTrainState make_allsubsets_train_state(AllSubsetsModel model,
                                                        const SparseDesignMatrix& data) {
    AllSubsetsTrainState st;
    st.model = std::move(model);
    const std::size_t N = data.n_rows();
    const std::size_t k = st.model.rank();
    st.k_cache = DenseMatrix(N, k, 0.0);
    st.f_cache.assign(N, 0.0);
    std::vector<double> px, xv;
    for (std::size_t n = 0; n < N; ++n) {
        const auto x = data.row(n);
        double f = 0.0;
        for (std::size_t s = 0; s < k; ++s) {
            detail::gather_column(st.model.P, s, x, px, xv);
            st.k_cache(n, s) = all_subsets_kernel(px, xv);
            f += st.k_cache(n, s);
        }
        st.f_cache[n] = f;
    }
    st.t_cols.assign(k, 1.0);
    st.r_rows = 1.0;
    for (std::size_t j = 0; j < st.model.n_features(); ++j) {
        double sq = 0.0;
        for (std::size_t s = 0; s < k; ++s) {
            st.t_cols[s] *= 1.0 + std::abs(st.model.P(j, s));
            sq += st.model.P(j, s) * st.model.P(j, s);
        }
        st.r_rows *= 1.0 + std::sqrt(sq);
    }
    return st;
}

inline double pcd_epoch_allsubsets(AllSubsetsTrainState& st, const SparseDesignMatrix& data,
                                   std::span<const double> y, const TrainConfig& cfg,
                                   RegKind kind) {
    if (kind != RegKind::TI_ALL && kind != RegKind::CS_ALL)
        throw std::invalid_argument("pcd_epoch_allsubsets: kind must be TI_ALL or CS_ALL");
    const double N = static_cast<double>(data.n_rows());
    const double mu = loss_mu(cfg.loss);
    const double lam_p = cfg.spec.lambda_p;
    const double lam_t = cfg.spec.lambda_tilde;
    AllSubsetsModel& model = st.model;
    const std::size_t d = model.n_features();
    const std::size_t k = model.rank();
    double max_change = 0.0;

    if (kind == RegKind::TI_ALL) {
        std::vector<double> rests;
        for (std::size_t s = 0; s < k; ++s) {
            for (std::size_t j = 0; j < d; ++j) {
                const auto col = data.col(j);
                const double p_old = model.P(j, s);
                double g = 2.0 * lam_p * p_old;
                double lip = 2.0 * lam_p;
                rests.assign(col.size(), 0.0);
                for (std::size_t t = 0; t < col.size(); ++t) {
                    const std::size_t n = col.indices[t];
                    const double x = col.values[t];
                    const double denom = 1.0 + x * p_old;
                    const double rest = std::abs(denom) < detail::kDenomGuard
                        ? detail::as_kernel_without(model.P, s, data.row(n), j)
                        : st.k_cache(n, s) / denom;
                    rests[t] = rest;
                    const double fp = x * rest;
                    g += loss_deriv(cfg.loss, st.f_cache[n], y[n]) * fp / N;
                    lip += mu * fp * fp / N;
                }
                if (lip == 0.0) continue;
                const double eta = 1.0 / lip;
                double p_new = p_old - eta * g;
                if (lam_t > 0.0) {
                    const double denom_t = 1.0 + std::abs(p_old);
                    double rest_t = st.t_cols[s] / denom_t;
                    if (!std::isfinite(rest_t)) {
                        rest_t = 1.0;
                        for (std::size_t i = 0; i < d; ++i)
                            if (i != j) rest_t *= 1.0 + std::abs(model.P(i, s));
                    }
                    const double thresh = eta * lam_t * rest_t;
                    p_new = soft_threshold(p_new, thresh);
                    if (thresh > 0.0 && std::abs(p_new) < kZeroSnap) p_new = 0.0;
                    st.t_cols[s] = rest_t * (1.0 + std::abs(p_new));
                } else {
                    st.t_cols[s] *= (1.0 + std::abs(p_new)) / (1.0 + std::abs(p_old));
                }
                detail::check_finite(p_new, st.epoch, "all-subsets update");
                const double delta = p_new - p_old;
                if (delta != 0.0) {
                    for (std::size_t t = 0; t < col.size(); ++t) {
                        const std::size_t n = col.indices[t];
                        const double x = col.values[t];
                        st.f_cache[n] += x * rests[t] * delta;
                        st.k_cache(n, s) = rests[t] * (1.0 + x * p_new);
                    }
                    model.P(j, s) = p_new;
                    max_change = std::max(max_change, std::abs(delta));
                }
            }
        }
    } else {
        std::vector<double> grad(k), p_old(k), p_grad(k);
        for (std::size_t j = 0; j < d; ++j) {
            const auto col = data.col(j);
            for (std::size_t s = 0; s < k; ++s) {
                p_old[s] = model.P(j, s);
                grad[s] = 2.0 * lam_p * p_old[s];
            }
            double lip = 2.0 * lam_p;
            DenseMatrix rests(col.size(), k, 0.0);
            for (std::size_t t = 0; t < col.size(); ++t) {
                const std::size_t n = col.indices[t];
                const double x = col.values[t];
                const double ld = loss_deriv(cfg.loss, st.f_cache[n], y[n]);
                for (std::size_t s = 0; s < k; ++s) {
                    const double denom = 1.0 + x * p_old[s];
                    const double rest = std::abs(denom) < detail::kDenomGuard
                        ? detail::as_kernel_without(model.P, s, data.row(n), j)
                        : st.k_cache(n, s) / denom;
                    rests(t, s) = rest;
                    const double fp = x * rest;
                    grad[s] += ld * fp / N;
                    lip += mu * fp * fp / N;
                }
            }
            if (lip == 0.0) continue;
            const double eta = 1.0 / lip;
            for (std::size_t s = 0; s < k; ++s) p_grad[s] = p_old[s] - eta * grad[s];

            double old_norm = 0.0;
            for (std::size_t s = 0; s < k; ++s) old_norm += p_old[s] * p_old[s];
            old_norm = std::sqrt(old_norm);

            double thresh = 0.0;
            double rest_r = st.r_rows / (1.0 + old_norm);
            if (!std::isfinite(rest_r)) {
                rest_r = 1.0;
                for (std::size_t i = 0; i < d; ++i) {
                    if (i == j) continue;
                    double sq = 0.0;
                    for (double v : model.P.row(i)) sq += v * v;
                    rest_r *= 1.0 + std::sqrt(sq);
                }
            }
            if (lam_t > 0.0) thresh = eta * lam_t * rest_r;

            std::vector<double> p_new = prox_group_l2(p_grad, thresh);
            double new_norm = 0.0;
            for (std::size_t s = 0; s < k; ++s) {
                if (thresh > 0.0 && std::abs(p_new[s]) < kZeroSnap) p_new[s] = 0.0;
                detail::check_finite(p_new[s], st.epoch, "all-subsets row update");
                new_norm += p_new[s] * p_new[s];
            }
            new_norm = std::sqrt(new_norm);

            for (std::size_t t = 0; t < col.size(); ++t) {
                const std::size_t n = col.indices[t];
                const double x = col.values[t];
                for (std::size_t s = 0; s < k; ++s) {
                    const double delta = p_new[s] - p_old[s];
                    if (delta == 0.0) continue;
                    st.f_cache[n] += x * rests(t, s) * delta;
                    st.k_cache(n, s) = rests(t, s) * (1.0 + x * p_new[s]);
                }
            }
            for (std::size_t s = 0; s < k; ++s) {
                max_change = std::max(max_change, std::abs(p_new[s] - p_old[s]));
                model.P(j, s) = p_new[s];
                st.t_cols[s] *= (1.0 + std::abs(p_new[s])) / (1.0 + std::abs(p_old[s]));
            }
            st.r_rows = rest_r * (1.0 + new_norm);
        }
    }
    ++st.epoch;
    return max_change;
}

// ---------------------------------------------------------------------------
// Epoch driver.

using TrainedModel = std::variant<FmModel, HofmModel, AllSubsetsModel>;

struct TrainResult {
    TrainedModel model;
    std::vector<HistoryEntry> history;
    std::size_t epochs_run = 0;
    bool converged = false;
};

namespace detail {

inline double mean_loss_from_cache(std::span<const double> f_cache, std::span<const double> y,
                                   LossKind loss) {
    if (f_cache.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t n = 0; n < f_cache.size(); ++n)
        total += loss_value(loss, f_cache[n], y[n]);
    return total / static_cast<double>(f_cache.size());
}

}  // namespace detail

inline TrainResult train(ModelKind kind, const SparseDesignMatrix& data,
                         std::span<const double> y, const TrainConfig& cfg) {
    if (data.n_rows() != y.size()) throw std::invalid_argument("train: label count mismatch");
    if (!(cfg.tol > 0.0)) throw std::invalid_argument("train: tol must be positive");
    const std::size_t d = data.n_cols();
    Rng rng(cfg.seed);
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };

    TrainResult result;
    if (kind == ModelKind::FM) {
        FmModel model = fm_model_zero(d, cfg.rank);
        model.use_linear = cfg.fit_linear;
        model.P = gaussian_fill(rng, d, cfg.rank, 0.0, cfg.init_std);
        TrainState st = make_train_state(std::move(model), data);
        double (*epoch_fn)(TrainState&, const SparseDesignMatrix&, std::span<const double>,
                           const TrainConfig&) = nullptr;
        switch (cfg.spec.kind) {
            case RegKind::L2SQ: epoch_fn = cd_epoch_fm; break;
            case RegKind::L1: epoch_fn = pcd_epoch_l1; break;
            case RegKind::TI: epoch_fn = pcd_epoch_ti; break;
            case RegKind::L21: epoch_fn = pbcd_epoch_l21; break;
            case RegKind::CS: epoch_fn = pbcd_epoch_cs; break;
            default: throw std::invalid_argument("train: regularizer not supported for FM");
        }
        auto record = [&] {
            const double obj = detail::mean_loss_from_cache(st.f_cache, y, cfg.loss)
                + cfg.spec.lambda_w * squared_l2(st.model.w)
                + cfg.spec.lambda_p * squared_fro(st.model.P)
                + cfg.spec.lambda_tilde * sparsity_penalty(st.model.P, cfg.spec.kind);
            st.history.push_back({st.epoch, obj, elapsed()});
        };
        record();
        for (std::size_t e = 0; e < cfg.max_epochs; ++e) {
            const double change = epoch_fn(st, data, y, cfg);
            record();
            ++result.epochs_run;
            if (change < cfg.tol) {
                result.converged = true;
                break;
            }
            if (elapsed() > cfg.time_budget) break;
        }
        result.history = std::move(st.history);
        result.model = std::move(st.model);
        return result;
    }
    if (kind == ModelKind::HOFM) {
        if (cfg.order < 2) throw std::invalid_argument("train: HOFM order must be >= 2");
        HofmModel model;
        model.w.assign(d, 0.0);
        model.use_linear = cfg.fit_linear;
        for (int m = 2; m <= cfg.order; ++m)
            model.P_by_order.push_back(gaussian_fill(rng, d, cfg.rank, 0.0, cfg.init_std));
        HofmTrainState st = make_hofm_train_state(std::move(model), data);
        double (*epoch_fn)(HofmTrainState&, const SparseDesignMatrix&, std::span<const double>,
                           const TrainConfig&) = nullptr;
        switch (cfg.spec.kind) {
            case RegKind::L2SQ: epoch_fn = cd_epoch_hofm; break;
            case RegKind::TI_M: epoch_fn = pcd_epoch_hofm_ti; break;
            case RegKind::CS_M: epoch_fn = pbcd_epoch_hofm_cs; break;
            default: throw std::invalid_argument("train: regularizer not supported for HOFM");
        }
        auto record = [&] {
            double obj = detail::mean_loss_from_cache(st.f_cache, y, cfg.loss)
                + cfg.spec.lambda_w * squared_l2(st.model.w);
            for (std::size_t mi = 0; mi < st.model.P_by_order.size(); ++mi) {
                obj += cfg.spec.lambda_p * squared_fro(st.model.P_by_order[mi]);
                if (cfg.spec.kind == RegKind::TI_M)
                    obj += cfg.spec.lambda_tilde * omega_ti_m(st.model.P_by_order[mi], static_cast<int>(mi) + 2);
                else if (cfg.spec.kind == RegKind::CS_M)
                    obj += cfg.spec.lambda_tilde * omega_cs_m(st.model.P_by_order[mi], static_cast<int>(mi) + 2);
            }
            st.history.push_back({st.epoch, obj, elapsed()});
        };
        record();
        for (std::size_t e = 0; e < cfg.max_epochs; ++e) {
            const double change = epoch_fn(st, data, y, cfg);
            record();
            ++result.epochs_run;
            if (change < cfg.tol) {
                result.converged = true;
                break;
            }
            if (elapsed() > cfg.time_budget) break;
        }
        result.history = std::move(st.history);
        result.model = std::move(st.model);
        return result;
    }

    // All-subsets model.
    if (cfg.spec.kind != RegKind::TI_ALL && cfg.spec.kind != RegKind::CS_ALL
        && cfg.spec.kind != RegKind::L2SQ)
        throw std::invalid_argument("train: regularizer not supported for all-subsets model");
    const RegKind eff = cfg.spec.kind == RegKind::L2SQ ? RegKind::TI_ALL : cfg.spec.kind;
    AllSubsetsModel model;
    model.P = gaussian_fill(rng, d, cfg.rank, 0.0, cfg.init_std);
    AllSubsetsTrainState st = make_allsubsets_train_state(std::move(model), data);
    auto record = [&] {
        double obj = detail::mean_loss_from_cache(st.f_cache, y, cfg.loss)
            + cfg.spec.lambda_p * squared_fro(st.model.P);
        if (cfg.spec.kind != RegKind::L2SQ)
            obj += cfg.spec.lambda_tilde * omega_all(st.model.P, cfg.spec.kind);
        st.history.push_back({st.epoch, obj, elapsed()});
    };
    record();
    for (std::size_t e = 0; e < cfg.max_epochs; ++e) {
        const double change = pcd_epoch_allsubsets(st, data, y, cfg, eff);
        record();
        ++result.epochs_run;
        if (change < cfg.tol) {
            result.converged = true;
            break;
        }
        if (elapsed() > cfg.time_budget) break;
    }
    result.history = std::move(st.history);
    result.model = std::move(st.model);
    return result;
}

}  // namespace sfm
