#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace sfm {

struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
};

// Iteration view over the nonzeros of one row or column.
struct SparseSlice {
    std::span<const std::size_t> indices;
    std::span<const double> values;

    std::size_t size() const { return indices.size(); }
};

// Design matrix X stored in both CSR and CSC form. Column access drives the
// coordinate-descent loops, row access drives prediction and SGD. Immutable
// after construction.
class SparseDesignMatrix {
public:
    SparseDesignMatrix() = default;

    static SparseDesignMatrix from_triplets(std::size_t n_rows, std::size_t n_cols,
                                            std::vector<Triplet> entries) {
        for (const auto& t : entries) {
            if (t.row >= n_rows || t.col >= n_cols)
                throw std::invalid_argument("sparse_from_triplets: index out of range");
        }
        std::erase_if(entries, [](const Triplet& t) { return t.value == 0.0; });
        std::sort(entries.begin(), entries.end(), [](const Triplet& a, const Triplet& b) {
            return std::tie(a.row, a.col) < std::tie(b.row, b.col);
        });
        for (std::size_t i = 1; i < entries.size(); ++i) {
            if (entries[i].row == entries[i - 1].row && entries[i].col == entries[i - 1].col)
                throw std::invalid_argument("sparse_from_triplets: duplicate coordinate");
        }

        SparseDesignMatrix m;
        m.n_rows_ = n_rows;
        m.n_cols_ = n_cols;
        const std::size_t nnz = entries.size();

        m.row_ptr_.assign(n_rows + 1, 0);
        m.row_idx_.resize(nnz);
        m.row_val_.resize(nnz);
        for (std::size_t i = 0; i < nnz; ++i) {
            m.row_ptr_[entries[i].row + 1]++;
            m.row_idx_[i] = entries[i].col;
            m.row_val_[i] = entries[i].value;
        }
        for (std::size_t r = 0; r < n_rows; ++r) m.row_ptr_[r + 1] += m.row_ptr_[r];

        m.col_ptr_.assign(n_cols + 1, 0);
        m.col_idx_.resize(nnz);
        m.col_val_.resize(nnz);
        for (const auto& t : entries) m.col_ptr_[t.col + 1]++;
        for (std::size_t c = 0; c < n_cols; ++c) m.col_ptr_[c + 1] += m.col_ptr_[c];
        std::vector<std::size_t> cursor(m.col_ptr_.begin(), m.col_ptr_.end() - 1);
        for (const auto& t : entries) {
            const std::size_t pos = cursor[t.col]++;
            m.col_idx_[pos] = t.row;
            m.col_val_[pos] = t.value;
        }
        return m;
    }

    std::size_t n_rows() const { return n_rows_; }
    std::size_t n_cols() const { return n_cols_; }
    std::size_t nnz() const { return row_idx_.size(); }

    SparseSlice row(std::size_t i) const {
        return {{row_idx_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]},
                {row_val_.data() + row_ptr_[i], row_ptr_[i + 1] - row_ptr_[i]}};
    }

    SparseSlice col(std::size_t j) const {
        return {{col_idx_.data() + col_ptr_[j], col_ptr_[j + 1] - col_ptr_[j]},
                {col_val_.data() + col_ptr_[j], col_ptr_[j + 1] - col_ptr_[j]}};
    }

    std::vector<Triplet> to_triplets() const {
        std::vector<Triplet> out;
        out.reserve(nnz());
        for (std::size_t r = 0; r < n_rows_; ++r) {
            const auto slice = row(r);
            for (std::size_t i = 0; i < slice.size(); ++i)
                out.push_back({r, slice.indices[i], slice.values[i]});
        }
        return out;
    }

private:
    std::size_t n_rows_ = 0;
    std::size_t n_cols_ = 0;
    std::vector<std::size_t> row_ptr_, row_idx_;
    std::vector<double> row_val_;
    std::vector<std::size_t> col_ptr_, col_idx_;
    std::vector<double> col_val_;
};

inline SparseDesignMatrix sparse_from_triplets(std::size_t n_rows, std::size_t n_cols,
                                               std::vector<Triplet> entries) {
    return SparseDesignMatrix::from_triplets(n_rows, n_cols, std::move(entries));
}

}  // namespace sfm
