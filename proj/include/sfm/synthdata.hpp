#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sfm/dense.hpp"
#include "sfm/rng.hpp"
#include "sfm/sparse.hpp"

namespace sfm {

struct SyntheticSpec {
    std::size_t d_true = 80;
    std::size_t n_blocks = 8;
    std::size_t d_noise = 20;
    std::size_t n_samples = 200;
    double feature_corr = 0.2;
    double target_noise_std = 0.1;
    std::uint64_t seed = 0;
};

struct SyntheticTask {
    DenseMatrix W_true;        // d x d, strictly upper triangle used
    SparseDesignMatrix X;      // N x d, dense-valued
    std::vector<double> y;
};

// One draw from N(0, Sigma) with unit diagonal and constant off-diagonal
// correlation, via the shared-factor decomposition x = sqrt(c) z0 + sqrt(1-c) z.
inline std::vector<double> sample_correlated_block(Rng& rng, std::size_t size, double corr) {
    if (corr < 0.0 || !(1.0 - corr > 0.0))
        throw std::invalid_argument("sample_correlated_block: correlation must be in [0, 1)");
    std::vector<double> out(size);
    const double shared = std::sqrt(corr) * rng.next_gaussian();
    const double own = std::sqrt(1.0 - corr);
    for (auto& v : out) v = shared + own * rng.next_gaussian();
    return out;
}

inline SyntheticTask generate(const SyntheticSpec& spec) {
    if (spec.n_blocks == 0 || spec.d_true % spec.n_blocks != 0)
        throw std::invalid_argument("generate: d_true must be divisible by n_blocks");
    if (!(spec.feature_corr >= 0.0 && spec.feature_corr < 1.0))
        throw std::invalid_argument("generate: feature_corr out of range");

    const std::size_t block = spec.d_true / spec.n_blocks;
    if (!(1.0 + (static_cast<double>(block) - 1.0) * spec.feature_corr > 0.0))
        throw std::invalid_argument("generate: block covariance not positive definite");
    const std::size_t d = spec.d_true + spec.d_noise;

    SyntheticTask task;
    task.W_true = DenseMatrix(d, d, 0.0);
    for (std::size_t b = 0; b < spec.n_blocks; ++b) {
        const std::size_t lo = b * block, hi = lo + block;
        for (std::size_t j1 = lo; j1 < hi; ++j1)
            for (std::size_t j2 = j1 + 1; j2 < hi; ++j2) task.W_true(j1, j2) = 1.0;
    }

    Rng rng(spec.seed);
    std::vector<Triplet> entries;
    entries.reserve(spec.n_samples * d);
    task.y.resize(spec.n_samples);
    std::vector<double> row(d);
    for (std::size_t n = 0; n < spec.n_samples; ++n) {
        for (std::size_t b = 0; b < spec.n_blocks; ++b) {
            const auto draw = sample_correlated_block(rng, block, spec.feature_corr);
            for (std::size_t t = 0; t < block; ++t) row[b * block + t] = draw[t];
        }
        for (std::size_t j = spec.d_true; j < d; ++j) row[j] = rng.next_gaussian();

        double target = 0.0;
        for (std::size_t b = 0; b < spec.n_blocks; ++b) {
            const std::size_t lo = b * block, hi = lo + block;
            for (std::size_t j1 = lo; j1 < hi; ++j1)
                for (std::size_t j2 = j1 + 1; j2 < hi; ++j2) target += row[j1] * row[j2];
        }
        task.y[n] = target + spec.target_noise_std * rng.next_gaussian();

        for (std::size_t j = 0; j < d; ++j)
            if (row[j] != 0.0) entries.push_back({n, j, row[j]});
    }
    task.X = SparseDesignMatrix::from_triplets(spec.n_samples, d, entries);
    return task;
}

}  // namespace sfm
