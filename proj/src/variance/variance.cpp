#include "simsrc/variance.hpp"

#include <cmath>
#include <string>

#include "simsrc/errors.hpp"
#include "simsrc/solvers.hpp"

namespace simsrc {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

void require_nonnegative(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw ContractError(std::string(what) + ": entries must be finite and non-negative");
  }
}

void require_shape(const DenseMat& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw ContractError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                        std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
  }
}

}  // namespace

VarianceMatrix::VarianceMatrix(Representation rep) : rep_(std::move(rep)) {
  std::visit(overloaded{
                 [](const UniformVariance& u) { require_nonnegative(u.sigma_inv, "UniformVariance"); },
                 [](const DenseVariance& d) {
                   for (double v : d.c.data()) require_nonnegative(v, "DenseVariance");
                 },
                 [](const MaskedVariance& m) {
                   require_nonnegative(m.sigma_inv, "MaskedVariance");
                   for (double v : m.mask.data())
                     if (v != 0.0 && v != 1.0) throw ContractError("MaskedVariance: mask must be 0/1");
                 },
                 [](const LowRankVariance& l) {
                   if (l.x.cols() != l.z.cols() || l.x.cols() == 0) {
                     throw ContractError("LowRankVariance: X and Z need the same positive column count");
                   }
                 },
             },
             rep_);
}

std::string VarianceMatrix::kind_name() const {
  return std::visit(overloaded{
                        [](const UniformVariance&) { return std::string("uniform"); },
                        [](const DenseVariance&) { return std::string("dense"); },
                        [](const MaskedVariance&) { return std::string("masked"); },
                        [](const LowRankVariance&) { return std::string("low-rank"); },
                    },
                    rep_);
}

DenseMat VarianceMatrix::materialize(std::size_t n_r, std::size_t n_s) const {
  return std::visit(overloaded{
                        [&](const UniformVariance& u) { return DenseMat(n_r, n_s, u.sigma_inv); },
                        [&](const DenseVariance& d) {
                          require_shape(d.c, n_r, n_s, "VarianceMatrix::materialize");
                          return d.c;
                        },
                        [&](const MaskedVariance& m) {
                          require_shape(m.mask, n_r, n_s, "VarianceMatrix::materialize");
                          return m.sigma_inv * m.mask;
                        },
                        [&](const LowRankVariance& l) {
                          if (l.x.rows() != n_r || l.z.rows() != n_s) {
                            throw ContractError("VarianceMatrix::materialize: low-rank factor shape mismatch");
                          }
                          return l.x.multiply(l.z.transpose());
                        },
                    },
                    rep_);
}

VarianceMatrix VarianceMatrix::scaled(double s) const {
  require_nonnegative(s, "VarianceMatrix::scaled");
  return std::visit(overloaded{
                        [&](const UniformVariance& u) { return uniform(s * u.sigma_inv); },
                        [&](const DenseVariance& d) { return dense(s * d.c); },
                        [&](const MaskedVariance& m) { return masked(s * m.sigma_inv, m.mask); },
                        [&](const LowRankVariance& l) { return low_rank(s * l.x, l.z); },
                    },
                    rep_);
}

DenseMat apply_variance(const VarianceMatrix& c, const DenseMat& r) {
  return hadamard(c.materialize(r.rows(), r.cols()), r);
}

Vector hadamard_lowrank_apply(const DenseMat& x, const DenseMat& z, const DenseMat& r,
                              std::span<const double> w) {
  const std::size_t k = x.cols();
  if (z.cols() != k) throw ContractError("hadamard_lowrank_apply: X and Z rank differ");
  if (x.rows() != r.rows() || z.rows() != r.cols() || w.size() != r.cols()) {
    throw ContractError("hadamard_lowrank_apply: shape mismatch");
  }
  Vector out(r.rows(), 0.0);
  Vector zw(w.size());
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t i = 0; i < w.size(); ++i) zw[i] = z(i, j) * w[i];
    const Vector rzw = r.multiply(zw);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += x(i, j) * rzw[i];
  }
  return out;
}

VarianceMatrix lowrank_approximate(const VarianceMatrix& c, std::size_t k, std::size_t n_r,
                                   std::size_t n_s) {
  if (c.is_low_rank()) throw ContractError("lowrank_approximate: input is already low-rank");
  if (k < 1 || k > std::min(n_r, n_s)) {
    throw ContractError("lowrank_approximate: rank " + std::to_string(k) + " outside [1, " +
                        std::to_string(std::min(n_r, n_s)) + "]");
  }
  const Svd svd = truncated_svd(c.materialize(n_r, n_s), k);
  DenseMat x = svd.u;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < k; ++j) x(i, j) *= svd.s[j];
  return VarianceMatrix::low_rank(std::move(x), svd.v);
}

DenseMat mask_from_fraction(Rng& rng, std::size_t n_r, std::size_t n_s, double keep_fraction) {
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0) {
    throw ContractError("mask_from_fraction: keep fraction must lie in (0, 1]");
  }
  const std::size_t total = n_r * n_s;
  const auto keep = static_cast<std::size_t>(std::llround(keep_fraction * static_cast<double>(total)));
  DenseMat mask(n_r, n_s, 0.0);
  for (std::size_t idx : sample_without_replacement(rng, total, keep)) mask.data()[idx] = 1.0;
  return mask;
}

}  // namespace simsrc
