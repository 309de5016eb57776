#pragma once

// Dense and compressed-sparse containers plus the handful of BLAS-1 style
// helpers the rest of the library needs. Everything is double precision.

#include <cstddef>
#include <span>
#include <vector>

namespace simsrc {

using Vector = std::vector<double>;

double dot(std::span<const double> x, std::span<const double> y);
double norm2(std::span<const double> x);
double norm_inf(std::span<const double> x);
/// y += a*x
void axpy(double a, std::span<const double> x, std::span<double> y);
void scale(double a, std::span<double> x);
Vector hadamard(std::span<const double> x, std::span<const double> y);
bool all_finite(std::span<const double> x);

/// Row-major dense matrix.
class DenseMat {
public:
  DenseMat() = default;
  DenseMat(std::size_t rows, std::size_t cols, double fill = 0.0);
  DenseMat(std::size_t rows, std::size_t cols, std::vector<double> values);

  static DenseMat identity(std::size_t n);
  static DenseMat from_columns(const std::vector<Vector>& columns);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return values_.size(); }

  double& operator()(std::size_t i, std::size_t j) { return values_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

  std::span<double> data() noexcept { return values_; }
  std::span<const double> data() const noexcept { return values_; }

  Vector col(std::size_t j) const;
  void set_col(std::size_t j, std::span<const double> v);
  std::span<const double> row(std::size_t i) const { return {values_.data() + i * cols_, cols_}; }

  DenseMat transpose() const;
  Vector multiply(std::span<const double> x) const;
  Vector multiply_transpose(std::span<const double> y) const;
  DenseMat multiply(const DenseMat& other) const;

  double frobenius_norm() const;

  friend bool operator==(const DenseMat&, const DenseMat&) = default;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

DenseMat hadamard(const DenseMat& a, const DenseMat& b);
DenseMat operator-(const DenseMat& a, const DenseMat& b);
DenseMat operator+(const DenseMat& a, const DenseMat& b);
DenseMat operator*(double s, const DenseMat& a);

struct Triplet {
  std::size_t row;
  std::size_t col;
  double value;
};

/// Compressed sparse row matrix. Built from triplets; duplicate (row, col)
/// entries are summed after sorting, so the result does not depend on the
/// order the triplets were emitted in.
class SparseMat {
public:
  SparseMat() = default;
  SparseMat(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t nonzeros() const noexcept { return values_.size(); }

  std::span<const std::size_t> row_ptr() const noexcept { return row_ptr_; }
  std::span<const std::size_t> col_index() const noexcept { return col_idx_; }
  std::span<const double> values() const noexcept { return values_; }

  /// Entry lookup by binary search within the row; zero when absent.
  double at(std::size_t i, std::size_t j) const;

  Vector multiply(std::span<const double> x) const;
  void multiply(std::span<const double> x, std::span<double> y) const;
  Vector multiply_transpose(std::span<const double> y) const;

  Vector diagonal() const;
  SparseMat transpose() const;
  DenseMat to_dense() const;
  std::vector<Triplet> triplets() const;

  /// True when the sparsity pattern and values are exactly symmetric.
  bool is_symmetric() const;

private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::size_t> row_ptr_;
  std::vector<std::size_t> col_idx_;
  std::vector<double> values_;
};

/// Bᵀ·diag(d)·B for a sparse B, the common assembly pattern for A(u) and LᵀL.
SparseMat weighted_gram(const SparseMat& b, std::span<const double> d);

}  // namespace simsrc
