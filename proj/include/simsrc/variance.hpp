#pragma once

// The variance matrix C (entrywise inverse standard deviations) in its four
// representations, and the Hadamard low-rank identity
//
//   (C ⊙ R) w = Σ_j X_j ⊙ R (Z_j ⊙ w)     for C = X Zᵀ.

#include <cstddef>
#include <string>
#include <variant>

#include "simsrc/linalg.hpp"
#include "simsrc/random.hpp"

namespace simsrc {

struct UniformVariance {
  double sigma_inv = 1.0;
};

struct DenseVariance {
  DenseMat c;  ///< σ_ij⁻¹ ≥ 0
};

/// Case (c): σ⁻¹ where the datum was recorded, 0 where it is missing.
struct MaskedVariance {
  double sigma_inv = 1.0;
  DenseMat mask;  ///< 1.0 = observed, 0.0 = missing
};

/// C ≈ X Zᵀ. Singular values are folded into X.
struct LowRankVariance {
  DenseMat x;  ///< n_r × k
  DenseMat z;  ///< n_s × k

  std::size_t rank() const noexcept { return x.cols(); }
};

class VarianceMatrix {
public:
  using Representation = std::variant<UniformVariance, DenseVariance, MaskedVariance, LowRankVariance>;

  /// Validates non-negativity and the 0/1 mask.
  VarianceMatrix(Representation rep);

  static VarianceMatrix uniform(double sigma_inv) { return VarianceMatrix(UniformVariance{sigma_inv}); }
  static VarianceMatrix dense(DenseMat c) { return VarianceMatrix(DenseVariance{std::move(c)}); }
  static VarianceMatrix masked(double sigma_inv, DenseMat mask) {
    return VarianceMatrix(MaskedVariance{sigma_inv, std::move(mask)});
  }
  static VarianceMatrix low_rank(DenseMat x, DenseMat z) {
    return VarianceMatrix(LowRankVariance{std::move(x), std::move(z)});
  }

  const Representation& representation() const noexcept { return rep_; }
  bool is_uniform() const noexcept { return std::holds_alternative<UniformVariance>(rep_); }
  bool is_masked() const noexcept { return std::holds_alternative<MaskedVariance>(rep_); }
  bool is_low_rank() const noexcept { return std::holds_alternative<LowRankVariance>(rep_); }
  std::string kind_name() const;

  /// The explicit n_r × n_s matrix. Throws ContractError if a stored shape
  /// disagrees with the requested one.
  DenseMat materialize(std::size_t n_r, std::size_t n_s) const;

  /// Every entry multiplied by s (s ≥ 0).
  VarianceMatrix scaled(double s) const;

private:
  Representation rep_;
};

/// C ⊙ R.
DenseMat apply_variance(const VarianceMatrix& c, const DenseMat& r);

/// Σ_j X_j ⊙ (R (Z_j ⊙ w)): k matrix-vector products with R, never forming C ⊙ R.
Vector hadamard_lowrank_apply(const DenseMat& x, const DenseMat& z, const DenseMat& r,
                              std::span<const double> w);

/// Best rank-k Frobenius approximation of a Dense or Masked C (computed on
/// the materialized matrix). Uniform input is accepted as well; it is
/// materialized at the given shape.
VarianceMatrix lowrank_approximate(const VarianceMatrix& c, std::size_t k, std::size_t n_r,
                                   std::size_t n_s);

/// 0/1 mask with exactly round(keep_fraction·n_r·n_s) ones, uniformly placed.
DenseMat mask_from_fraction(Rng& rng, std::size_t n_r, std::size_t n_s, double keep_fraction);

}  // namespace simsrc
