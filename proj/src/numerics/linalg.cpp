#include "simsrc/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "simsrc/errors.hpp"

namespace simsrc {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw ContractError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " +
                        std::to_string(b) + ")");
  }
}

void require_same_shape(const DenseMat& a, const DenseMat& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ContractError(std::string(what) + ": shape mismatch");
  }
}

}  // namespace

double dot(std::span<const double> x, std::span<const double> y) {
  require_same_length(x.size(), y.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

double norm2(std::span<const double> x) { return std::sqrt(dot(x, x)); }

double norm_inf(std::span<const double> x) {
  double m = 0.0;
  for (double v : x) m = std::max(m, std::abs(v));
  return m;
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  require_same_length(x.size(), y.size(), "axpy");
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

void scale(double a, std::span<double> x) {
  for (double& v : x) v *= a;
}

Vector hadamard(std::span<const double> x, std::span<const double> y) {
  require_same_length(x.size(), y.size(), "hadamard");
  Vector z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) z[i] = x[i] * y[i];
  return z;
}

bool all_finite(std::span<const double> x) {
  return std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------------------
// DenseMat

DenseMat::DenseMat(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), values_(rows * cols, fill) {}

DenseMat::DenseMat(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw ContractError("DenseMat: value count does not match rows*cols");
  }
}

DenseMat DenseMat::identity(std::size_t n) {
  DenseMat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

DenseMat DenseMat::from_columns(const std::vector<Vector>& columns) {
  if (columns.empty()) return {};
  DenseMat m(columns.front().size(), columns.size());
  for (std::size_t j = 0; j < columns.size(); ++j) m.set_col(j, columns[j]);
  return m;
}

Vector DenseMat::col(std::size_t j) const {
  Vector c(rows_);
  for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
  return c;
}

void DenseMat::set_col(std::size_t j, std::span<const double> v) {
  require_same_length(v.size(), rows_, "DenseMat::set_col");
  for (std::size_t i = 0; i < rows_; ++i) (*this)(i, j) = v[i];
}

DenseMat DenseMat::transpose() const {
  DenseMat t(cols_, rows_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
  return t;
}

Vector DenseMat::multiply(std::span<const double> x) const {
  require_same_length(x.size(), cols_, "DenseMat::multiply");
  Vector y(rows_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) s += (*this)(i, j) * x[j];
    y[i] = s;
  }
  return y;
}

Vector DenseMat::multiply_transpose(std::span<const double> y) const {
  require_same_length(y.size(), rows_, "DenseMat::multiply_transpose");
  Vector x(cols_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t j = 0; j < cols_; ++j) x[j] += (*this)(i, j) * y[i];
  return x;
}

DenseMat DenseMat::multiply(const DenseMat& other) const {
  if (cols_ != other.rows_) throw ContractError("DenseMat::multiply: inner dimension mismatch");
  DenseMat c(rows_, other.cols_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t k = 0; k < cols_; ++k) {
      const double a = (*this)(i, k);
      if (a == 0.0) continue;
      for (std::size_t j = 0; j < other.cols_; ++j) c(i, j) += a * other(k, j);
    }
  return c;
}

double DenseMat::frobenius_norm() const { return norm2(values_); }

DenseMat hadamard(const DenseMat& a, const DenseMat& b) {
  require_same_shape(a, b, "hadamard");
  DenseMat c(a.rows(), a.cols());
  for (std::size_t k = 0; k < a.size(); ++k) c.data()[k] = a.data()[k] * b.data()[k];
  return c;
}

DenseMat operator-(const DenseMat& a, const DenseMat& b) {
  require_same_shape(a, b, "operator-");
  DenseMat c = a;
  for (std::size_t k = 0; k < a.size(); ++k) c.data()[k] -= b.data()[k];
  return c;
}

DenseMat operator+(const DenseMat& a, const DenseMat& b) {
  require_same_shape(a, b, "operator+");
  DenseMat c = a;
  for (std::size_t k = 0; k < a.size(); ++k) c.data()[k] += b.data()[k];
  return c;
}

DenseMat operator*(double s, const DenseMat& a) {
  DenseMat c = a;
  scale(s, c.data());
  return c;
}

// ---------------------------------------------------------------------------
// SparseMat

SparseMat::SparseMat(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets)
    : rows_(rows), cols_(cols), row_ptr_(rows + 1, 0) {
  for (const auto& t : triplets) {
    if (t.row >= rows || t.col >= cols) {
      throw ContractError("SparseMat: triplet index (" + std::to_string(t.row) + ", " +
                          std::to_string(t.col) + ") out of bounds");
    }
    if (!std::isfinite(t.value)) throw ContractError("SparseMat: non-finite triplet value");
  }
  // Sorting on (row, col, value) fixes the summation order of duplicates.
  std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
    if (a.row != b.row) return a.row < b.row;
    if (a.col != b.col) return a.col < b.col;
    return a.value < b.value;
  });
  for (std::size_t k = 0; k < triplets.size();) {
    std::size_t e = k;
    double sum = 0.0;
    while (e < triplets.size() && triplets[e].row == triplets[k].row &&
           triplets[e].col == triplets[k].col) {
      sum += triplets[e].value;
      ++e;
    }
    col_idx_.push_back(triplets[k].col);
    values_.push_back(sum);
    ++row_ptr_[triplets[k].row + 1];
    k = e;
  }
  for (std::size_t i = 0; i < rows; ++i) row_ptr_[i + 1] += row_ptr_[i];
}

double SparseMat::at(std::size_t i, std::size_t j) const {
  const auto first = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i]);
  const auto last = col_idx_.begin() + static_cast<std::ptrdiff_t>(row_ptr_[i + 1]);
  const auto it = std::lower_bound(first, last, j);
  if (it == last || *it != j) return 0.0;
  return values_[static_cast<std::size_t>(it - col_idx_.begin())];
}

Vector SparseMat::multiply(std::span<const double> x) const {
  Vector y(rows_);
  multiply(x, y);
  return y;
}

void SparseMat::multiply(std::span<const double> x, std::span<double> y) const {
  require_same_length(x.size(), cols_, "SparseMat::multiply");
  require_same_length(y.size(), rows_, "SparseMat::multiply (output)");
  for (std::size_t i = 0; i < rows_; ++i) {
    double s = 0.0;
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) s += values_[k] * x[col_idx_[k]];
    y[i] = s;
  }
}

Vector SparseMat::multiply_transpose(std::span<const double> y) const {
  require_same_length(y.size(), rows_, "SparseMat::multiply_transpose");
  Vector x(cols_, 0.0);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) x[col_idx_[k]] += values_[k] * y[i];
  return x;
}

Vector SparseMat::diagonal() const {
  Vector d(std::min(rows_, cols_), 0.0);
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = at(i, i);
  return d;
}

std::vector<Triplet> SparseMat::triplets() const {
  std::vector<Triplet> t;
  t.reserve(values_.size());
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) t.push_back({i, col_idx_[k], values_[k]});
  return t;
}

SparseMat SparseMat::transpose() const {
  auto t = triplets();
  for (auto& e : t) std::swap(e.row, e.col);
  return SparseMat(cols_, rows_, std::move(t));
}

DenseMat SparseMat::to_dense() const {
  DenseMat d(rows_, cols_);
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) d(i, col_idx_[k]) = values_[k];
  return d;
}

bool SparseMat::is_symmetric() const {
  if (rows_ != cols_) return false;
  for (std::size_t i = 0; i < rows_; ++i)
    for (std::size_t k = row_ptr_[i]; k < row_ptr_[i + 1]; ++k) {
      const std::size_t j = col_idx_[k];
      if (at(j, i) != values_[k]) return false;
    }
  return true;
}

SparseMat weighted_gram(const SparseMat& b, std::span<const double> d) {
  require_same_length(d.size(), b.rows(), "weighted_gram");
  // Row r of B contributes d_r * b_ri * b_rj to (i, j).
  std::vector<Triplet> t;
  const auto ptr = b.row_ptr();
  const auto idx = b.col_index();
  const auto val = b.values();
  for (std::size_t r = 0; r < b.rows(); ++r) {
    for (std::size_t p = ptr[r]; p < ptr[r + 1]; ++p)
      for (std::size_t q = ptr[r]; q < ptr[r + 1]; ++q)
        t.push_back({idx[p], idx[q], d[r] * (val[p] * val[q])});
  }
  return SparseMat(b.cols(), b.cols(), std::move(t));
}

}  // namespace simsrc
