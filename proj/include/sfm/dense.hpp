#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "sfm/rng.hpp"

namespace sfm {

// Row-major dense matrix of doubles.
class DenseMatrix {
public:
    DenseMatrix() = default;

    DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
    std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    bool operator==(const DenseMatrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

inline DenseMatrix dense_new(std::size_t rows, std::size_t cols, double fill) {
    return DenseMatrix(rows, cols, fill);
}

// I.i.d. normal entries; bit-identical for a given seed state.
inline DenseMatrix gaussian_fill(Rng& rng, std::size_t rows, std::size_t cols,
                                 double mean, double std) {
    if (std < 0.0) throw std::invalid_argument("gaussian_fill: std must be >= 0");
    DenseMatrix m(rows, cols);
    for (double& v : m.data()) v = rng.next_gaussian(mean, std);
    return m;
}

}  // namespace sfm
