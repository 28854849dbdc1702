#pragma once

// Compressed-column sparse matrices, dense helpers, and the handful of
// kernels (matvec, transpose matvec, diagonal scaling) the solver needs.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "tws/error.hpp"

namespace tws {

using Vector = std::vector<double>;

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;

  friend bool operator==(const Triplet&, const Triplet&) = default;
};

/// Row-major dense matrix. Only used on oracle and test paths.
class DenseMatrix {
 public:
  DenseMatrix() = default;
  DenseMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }
  const std::vector<double>& data() const noexcept { return data_; }

  Vector row_sums() const {
    Vector out(rows_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) out[i] += (*this)(i, j);
    return out;
  }

  Vector col_sums() const {
    Vector out(cols_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) out[j] += (*this)(i, j);
    return out;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/**
 * Compressed sparse column matrix in canonical form.
 *
 * Invariants after any public constructor: column_starts is non-decreasing
 * and ends at nnz, row indices are strictly increasing inside each column,
 * and no stored value is exactly zero.
 */
class SparseMatrix {
 public:
  SparseMatrix() : column_starts_(1, 0) {}

  /// Empty (all-zero) matrix of the given shape.
  SparseMatrix(std::size_t n_rows, std::size_t n_cols)
      : n_rows_(n_rows), n_cols_(n_cols), column_starts_(n_cols + 1, 0) {}

  /// Builds from unordered triplets. Out-of-range indices and duplicate
  /// (row, col) pairs are rejected; exact zeros are dropped.
  static SparseMatrix from_triplets(std::span<const Triplet> entries, std::size_t n_rows,
                                    std::size_t n_cols) {
    SparseMatrix out(n_rows, n_cols);
    for (const auto& t : entries) {
      if (t.row >= n_rows || t.col >= n_cols) {
        throw ConstructionError("triplet (" + std::to_string(t.row) + ", " +
                                std::to_string(t.col) + ") outside " +
                                std::to_string(n_rows) + "x" + std::to_string(n_cols));
      }
      ++out.column_starts_[t.col + 1];
    }
    for (std::size_t j = 0; j < n_cols; ++j) out.column_starts_[j + 1] += out.column_starts_[j];

    std::vector<std::size_t> next(out.column_starts_.begin(), out.column_starts_.end() - 1);
    out.row_indices_.resize(entries.size());
    out.values_.resize(entries.size());
    for (const auto& t : entries) {
      const std::size_t p = next[t.col]++;
      out.row_indices_[p] = t.row;
      out.values_[p] = t.value;
    }

    // Sort each column by row and reject duplicates.
    std::vector<std::pair<std::size_t, double>> scratch;
    for (std::size_t j = 0; j < n_cols; ++j) {
      const std::size_t lo = out.column_starts_[j], hi = out.column_starts_[j + 1];
      scratch.clear();
      for (std::size_t p = lo; p < hi; ++p) scratch.emplace_back(out.row_indices_[p], out.values_[p]);
      std::sort(scratch.begin(), scratch.end(),
                [](const auto& a, const auto& b) { return a.first < b.first; });
      for (std::size_t q = 0; q < scratch.size(); ++q) {
        if (q > 0 && scratch[q].first == scratch[q - 1].first) {
          throw ConstructionError("duplicate entry (" + std::to_string(scratch[q].first) + ", " +
                                  std::to_string(j) + ")");
        }
        out.row_indices_[lo + q] = scratch[q].first;
        out.values_[lo + q] = scratch[q].second;
      }
    }
    out.compress();
    return out;
  }

  /// Adopts raw compressed-column arrays after validating them.
  static SparseMatrix from_compressed(std::size_t n_rows, std::size_t n_cols,
                                      std::vector<std::size_t> column_starts,
                                      std::vector<std::size_t> row_indices,
                                      std::vector<double> values) {
    if (column_starts.size() != n_cols + 1 || column_starts.front() != 0 ||
        column_starts.back() != row_indices.size() || row_indices.size() != values.size()) {
      throw ConstructionError("inconsistent compressed-column arrays");
    }
    for (std::size_t j = 0; j < n_cols; ++j) {
      if (column_starts[j] > column_starts[j + 1])
        throw ConstructionError("column_starts must be non-decreasing");
      for (std::size_t p = column_starts[j]; p < column_starts[j + 1]; ++p) {
        if (row_indices[p] >= n_rows) throw ConstructionError("row index out of range");
        if (p > column_starts[j] && row_indices[p] <= row_indices[p - 1])
          throw ConstructionError("row indices must be strictly increasing within a column");
      }
    }
    SparseMatrix out;
    out.n_rows_ = n_rows;
    out.n_cols_ = n_cols;
    out.column_starts_ = std::move(column_starts);
    out.row_indices_ = std::move(row_indices);
    out.values_ = std::move(values);
    out.compress();
    return out;
  }

  static SparseMatrix identity(std::size_t n) {
    std::vector<std::size_t> starts(n + 1), rows(n);
    std::iota(starts.begin(), starts.end(), std::size_t{0});
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return from_compressed(n, n, std::move(starts), std::move(rows), Vector(n, 1.0));
  }

  std::size_t n_rows() const noexcept { return n_rows_; }
  std::size_t n_cols() const noexcept { return n_cols_; }
  std::size_t nnz() const noexcept { return values_.size(); }

  std::span<const std::size_t> column_starts() const noexcept { return column_starts_; }
  std::span<const std::size_t> row_indices() const noexcept { return row_indices_; }
  std::span<const double> values() const noexcept { return values_; }

  std::size_t column_nnz(std::size_t j) const { return column_starts_[j + 1] - column_starts_[j]; }

  /// Entry lookup by binary search within the column; implicit zeros read 0.
  double at(std::size_t i, std::size_t j) const {
    if (i >= n_rows_ || j >= n_cols_) throw DimensionError("index outside matrix");
    const auto first = row_indices_.begin() + static_cast<std::ptrdiff_t>(column_starts_[j]);
    const auto last = row_indices_.begin() + static_cast<std::ptrdiff_t>(column_starts_[j + 1]);
    const auto it = std::lower_bound(first, last, i);
    if (it == last || *it != i) return 0.0;
    return values_[static_cast<std::size_t>(it - row_indices_.begin())];
  }

  std::vector<Triplet> to_triplets() const {
    std::vector<Triplet> out;
    out.reserve(nnz());
    for (std::size_t j = 0; j < n_cols_; ++j)
      for (std::size_t p = column_starts_[j]; p < column_starts_[j + 1]; ++p)
        out.push_back({row_indices_[p], j, values_[p]});
    return out;
  }

  SparseMatrix transpose() const {
    SparseMatrix out(n_cols_, n_rows_);
    for (std::size_t r : row_indices_) ++out.column_starts_[r + 1];
    for (std::size_t i = 0; i < n_rows_; ++i) out.column_starts_[i + 1] += out.column_starts_[i];
    out.row_indices_.resize(nnz());
    out.values_.resize(nnz());
    std::vector<std::size_t> next(out.column_starts_.begin(), out.column_starts_.end() - 1);
    for (std::size_t j = 0; j < n_cols_; ++j) {
      for (std::size_t p = column_starts_[j]; p < column_starts_[j + 1]; ++p) {
        const std::size_t q = next[row_indices_[p]]++;
        out.row_indices_[q] = j;
        out.values_[q] = values_[p];
      }
    }
    return out;
  }

  DenseMatrix to_dense() const {
    DenseMatrix out(n_rows_, n_cols_);
    for (std::size_t j = 0; j < n_cols_; ++j)
      for (std::size_t p = column_starts_[j]; p < column_starts_[j + 1]; ++p)
        out(row_indices_[p], j) = values_[p];
    return out;
  }

  /// Largest absolute stored value (0 for an empty matrix).
  double max_abs() const {
    double m = 0.0;
    for (double v : values_) m = std::max(m, std::abs(v));
    return m;
  }

  /// True if the stored pattern and values are bit-identical to the transpose.
  bool is_symmetric() const {
    if (n_rows_ != n_cols_) return false;
    const SparseMatrix t = transpose();
    return t.column_starts_ == column_starts_ && t.row_indices_ == row_indices_ &&
           t.values_ == values_;
  }

  bool has_symmetric_pattern() const {
    if (n_rows_ != n_cols_) return false;
    const SparseMatrix t = transpose();
    return t.column_starts_ == column_starts_ && t.row_indices_ == row_indices_;
  }

  friend bool operator==(const SparseMatrix&, const SparseMatrix&) = default;

 private:
  // Drops exactly-zero values in place.
  void compress() {
    std::size_t out = 0;
    std::size_t start = 0;
    for (std::size_t j = 0; j < n_cols_; ++j) {
      const std::size_t end = column_starts_[j + 1];
      for (std::size_t p = start; p < end; ++p) {
        if (values_[p] != 0.0) {
          row_indices_[out] = row_indices_[p];
          values_[out] = values_[p];
          ++out;
        }
      }
      start = end;
      column_starts_[j + 1] = out;
    }
    row_indices_.resize(out);
    values_.resize(out);
  }

  std::size_t n_rows_ = 0;
  std::size_t n_cols_ = 0;
  std::vector<std::size_t> column_starts_;
  std::vector<std::size_t> row_indices_;
  std::vector<double> values_;
};

/// y = A x. Cost O(nnz(A) + n_rows).
inline Vector matvec(const SparseMatrix& a, std::span<const double> x) {
  if (x.size() != a.n_cols()) throw DimensionError("matvec: x has wrong length");
  Vector y(a.n_rows(), 0.0);
  const auto starts = a.column_starts();
  const auto rows = a.row_indices();
  const auto vals = a.values();
  for (std::size_t j = 0; j < a.n_cols(); ++j) {
    const double xj = x[j];
    for (std::size_t p = starts[j]; p < starts[j + 1]; ++p) y[rows[p]] += vals[p] * xj;
  }
  return y;
}

/// y = A^T x, iterating the same column storage.
inline Vector matvec_transpose(const SparseMatrix& a, std::span<const double> x) {
  if (x.size() != a.n_rows()) throw DimensionError("matvec_transpose: x has wrong length");
  Vector y(a.n_cols(), 0.0);
  const auto starts = a.column_starts();
  const auto rows = a.row_indices();
  const auto vals = a.values();
  for (std::size_t j = 0; j < a.n_cols(); ++j) {
    double acc = 0.0;
    for (std::size_t p = starts[j]; p < starts[j + 1]; ++p) acc += vals[p] * x[rows[p]];
    y[j] = acc;
  }
  return y;
}

/// diag(d_left) * A * diag(d_right) on the same pattern (entries that
/// underflow to zero are dropped).
inline SparseMatrix diag_scale(const SparseMatrix& a, std::span<const double> d_left,
                               std::span<const double> d_right) {
  if (d_left.size() != a.n_rows() || d_right.size() != a.n_cols())
    throw DimensionError("diag_scale: scaling vectors do not match the matrix shape");
  std::vector<std::size_t> starts(a.column_starts().begin(), a.column_starts().end());
  std::vector<std::size_t> rows(a.row_indices().begin(), a.row_indices().end());
  Vector vals(a.values().begin(), a.values().end());
  for (std::size_t j = 0; j < a.n_cols(); ++j)
    for (std::size_t p = starts[j]; p < starts[j + 1]; ++p) vals[p] *= d_left[rows[p]] * d_right[j];
  return SparseMatrix::from_compressed(a.n_rows(), a.n_cols(), std::move(starts), std::move(rows),
                                       std::move(vals));
}

// Small vector helpers shared by the solver modules.

inline double sum(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0);
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double l1_distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("l1_distance: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s;
}

inline double l1_norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += std::abs(x);
  return s;
}

/// max(x) - min(x); 0 for empty input.
inline double value_range(std::span<const double> x) {
  if (x.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
  return *hi - *lo;
}

inline bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

}  // namespace tws
