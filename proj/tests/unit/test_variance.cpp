#include <doctest.h>

#include <cmath>

#include "simsrc/errors.hpp"
#include "simsrc/solvers.hpp"
#include "simsrc/variance.hpp"

using namespace simsrc;

namespace {

DenseMat normal_matrix(Rng& rng, std::size_t r, std::size_t c) {
  DenseMat m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

}  // namespace

TEST_CASE("materialize each representation") {
  CHECK(VarianceMatrix::uniform(2.0).materialize(2, 3) == DenseMat(2, 3, 2.0));
  const DenseMat mask(2, 2, {1.0, 0.0, 0.0, 1.0});
  CHECK(VarianceMatrix::masked(3.0, mask).materialize(2, 2) == DenseMat(2, 2, {3.0, 0.0, 0.0, 3.0}));
  const DenseMat x(2, 1, {1.0, 2.0}), z(3, 1, {1.0, 0.5, 2.0});
  CHECK(VarianceMatrix::low_rank(x, z).materialize(2, 3) == DenseMat(2, 3, {1.0, 0.5, 2.0, 2.0, 1.0, 4.0}));
  CHECK_THROWS_AS(VarianceMatrix::low_rank(x, z).materialize(3, 3), ContractError);
}

TEST_CASE("invalid variance entries are rejected") {
  CHECK_THROWS_AS(VarianceMatrix::uniform(-1.0), ContractError);
  CHECK_THROWS_AS(VarianceMatrix::dense(DenseMat(1, 2, {1.0, -0.5})), ContractError);
  CHECK_THROWS_AS(VarianceMatrix::masked(1.0, DenseMat(1, 2, {1.0, 0.5})), ContractError);
}

TEST_CASE("hadamard low-rank apply equals the dense product") {
  Rng rng(17);
  for (int t = 0; t < 20; ++t) {
    const std::size_t nr = 1 + rng.below(9), ns = 1 + rng.below(9), k = 1 + rng.below(4);
    const DenseMat x = normal_matrix(rng, nr, k), z = normal_matrix(rng, ns, k), r = normal_matrix(rng, nr, ns);
    const Vector w = normal_matrix(rng, ns, 1).col(0);
    const Vector want = hadamard(x.multiply(z.transpose()), r).multiply(w);
    const Vector got = hadamard_lowrank_apply(x, z, r, w);
    Vector diff = got;
    axpy(-1.0, want, diff);
    CHECK(norm2(diff) <= 1e-12 * std::max(norm2(want), 1e-300));
  }
}

TEST_CASE("low-rank approximation") {
  Rng rng(5);
  SUBCASE("uniform C is exact at rank one") {
    const auto lr = lowrank_approximate(VarianceMatrix::uniform(4.0), 1, 5, 3);
    CHECK((lr.materialize(5, 3) - DenseMat(5, 3, 4.0)).frobenius_norm() <= 1e-13);
  }
  SUBCASE("a rank-two matrix is recovered at k = 2") {
    const DenseMat x(6, 2, {1, 2, 2, 1, 3, 1, 1, 1, 0.5, 2, 2, 2}), z(4, 2, {1, 0.5, 2, 1, 1, 3, 0.25, 1});
    const DenseMat c = x.multiply(z.transpose());
    const auto lr = lowrank_approximate(VarianceMatrix::dense(c), 2, 6, 4);
    CHECK((lr.materialize(6, 4) - c).frobenius_norm() <= 1e-10 * c.frobenius_norm());
  }
  SUBCASE("error equals the discarded singular values") {
    DenseMat c(5, 4);
    for (double& v : c.data()) v = rng.uniform();
    const auto s = jacobi_svd(c).s;
    const auto lr = lowrank_approximate(VarianceMatrix::dense(c), 2, 5, 4);
    const double err = (lr.materialize(5, 4) - c).frobenius_norm();
    CHECK(err == doctest::Approx(std::sqrt(s[2] * s[2] + s[3] * s[3])).epsilon(1e-10));
  }
  CHECK_THROWS_AS(lowrank_approximate(VarianceMatrix::uniform(1.0), 4, 3, 5), ContractError);
}

TEST_CASE("mask keeps the rounded fraction and prefixes nest") {
  Rng a(3), b(3);
  const DenseMat m70 = mask_from_fraction(a, 12, 8, 0.7);
  const DenseMat m40 = mask_from_fraction(b, 12, 8, 0.4);
  double kept70 = 0, kept40 = 0;
  for (std::size_t i = 0; i < m70.size(); ++i) {
    kept70 += m70.data()[i];
    kept40 += m40.data()[i];
    if (m40.data()[i] == 1.0) CHECK(m70.data()[i] == 1.0);
  }
  CHECK(kept70 == std::round(0.7 * 96));
  CHECK(kept40 == std::round(0.4 * 96));
  CHECK_THROWS_AS(mask_from_fraction(a, 2, 2, 0.0), ContractError);
}
