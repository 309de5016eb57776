#include "simsrc/solvers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "simsrc/errors.hpp"

namespace simsrc {

namespace {

// Shared PCG loop. `apply(x, out)` writes A·x, `precondition(r, z)` writes
// M⁻¹·r; neither allocates.
template <typename Apply, typename Precondition>
CgResult pcg(Apply&& apply, Precondition&& precondition, std::span<const double> b, double tol,
             std::size_t max_iter, CgTrace* trace) {
  if (!all_finite(b)) throw NumericalBreakdown("conjugate_gradient: non-finite right-hand side");
  const std::size_t n = b.size();
  CgResult res;
  res.x.assign(n, 0.0);
  const double bnorm = norm2(b);
  if (trace) {
    trace->energy.assign(1, 0.0);
    trace->relres.assign(1, bnorm == 0.0 ? 0.0 : 1.0);
  }
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }

  Vector r(b.begin(), b.end());
  Vector z(n), ap(n);
  precondition(r, z);
  Vector p = z;
  double rz = dot(r, z);
  res.relres = 1.0;

  while (res.iters < max_iter) {
    apply(p, ap);
    const double pap = dot(p, ap);
    if (!std::isfinite(pap) || pap < 0.0) {
      throw NumericalBreakdown("conjugate_gradient: operator not positive definite (pᵀAp = " +
                               std::to_string(pap) + ")");
    }
    if (pap == 0.0) break;

    const double alpha = rz / pap;
    double rr = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      res.x[i] += alpha * p[i];
      r[i] -= alpha * ap[i];
      rr += r[i] * r[i];
    }
    ++res.iters;
    res.relres = std::sqrt(rr) / bnorm;
    if (!std::isfinite(res.relres)) throw NumericalBreakdown("conjugate_gradient: non-finite residual");

    if (trace) {
      double e = 0.0;
      for (std::size_t i = 0; i < n; ++i) e -= 0.5 * res.x[i] * (b[i] + r[i]);
      trace->energy.push_back(e);
      trace->relres.push_back(res.relres);
    }
    if (res.relres <= tol) {
      res.converged = true;
      break;
    }

    precondition(r, z);
    const double rz_next = dot(r, z);
    const double beta = rz_next / rz;
    rz = rz_next;
    for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
  }
  return res;
}

}  // namespace

CgResult conjugate_gradient(const LinearOperator& apply, std::span<const double> b, double tol,
                            std::size_t max_iter, std::span<const double> precond_diag,
                            CgTrace* trace) {
  if (!precond_diag.empty() && precond_diag.size() != b.size()) {
    throw ContractError("conjugate_gradient: preconditioner length mismatch");
  }
  const std::size_t n = b.size();
  auto op = [&](std::span<const double> x, std::span<double> out) {
    const Vector y = apply(x);
    if (y.size() != n) throw ContractError("conjugate_gradient: operator changed vector length");
    std::copy(y.begin(), y.end(), out.begin());
  };
  auto precondition = [&](std::span<const double> r, std::span<double> z) {
    for (std::size_t i = 0; i < n; ++i) z[i] = precond_diag.empty() ? r[i] : r[i] / precond_diag[i];
  };
  return pcg(op, precondition, b, tol, max_iter, trace);
}

CgResult conjugate_gradient(const LinearOperator& apply, std::span<const double> b, double tol,
                            std::size_t max_iter, const Preconditioner& precondition, CgTrace* trace) {
  const std::size_t n = b.size();
  auto op = [&](std::span<const double> x, std::span<double> out) {
    const Vector y = apply(x);
    if (y.size() != n) throw ContractError("conjugate_gradient: operator changed vector length");
    std::copy(y.begin(), y.end(), out.begin());
  };
  return pcg(op, precondition, b, tol, max_iter, trace);
}

bool IcPreconditioner::factor(const SparseMat& a) {
  const std::size_t n = a.rows();
  const auto ptr = a.row_ptr();
  const auto idx = a.col_index();
  const auto val = a.values();
  row_ptr_.assign(n + 1, 0);
  cols_.clear();
  vals_.clear();
  diag_.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t row_start = cols_.size();
    double d = 0.0;
    for (std::size_t q = ptr[i]; q < ptr[i + 1]; ++q) {
      const std::size_t k = idx[q];
      if (k > i) break;
      if (k == i) {
        d = val[q];
        break;
      }
      // L(i,k) = (A(i,k) − Σ_j L(i,j) L(k,j)) / L(k,k) over the shared pattern.
      double s = val[q];
      std::size_t pi = row_start, pk = row_ptr_[k];
      const std::size_t end_i = cols_.size(), end_k = row_ptr_[k + 1];
      while (pi < end_i && pk < end_k) {
        if (cols_[pi] == cols_[pk]) s -= vals_[pi++] * vals_[pk++];
        else if (cols_[pi] < cols_[pk]) ++pi;
        else ++pk;
      }
      cols_.push_back(k);
      vals_.push_back(s / diag_[k]);
    }
    for (std::size_t q = row_start; q < cols_.size(); ++q) d -= vals_[q] * vals_[q];
    if (!(d > 0.0) || !std::isfinite(d)) return false;
    diag_[i] = std::sqrt(d);
    row_ptr_[i + 1] = cols_.size();
  }
  return true;
}

void IcPreconditioner::solve(std::span<const double> r, std::span<double> z) const {
  const std::size_t n = diag_.size();
  for (std::size_t i = 0; i < n; ++i) {
    double s = r[i];
    for (std::size_t q = row_ptr_[i]; q < row_ptr_[i + 1]; ++q) s -= vals_[q] * z[cols_[q]];
    z[i] = s / diag_[i];
  }
  for (std::size_t i = n; i-- > 0;) {
    z[i] /= diag_[i];
    for (std::size_t q = row_ptr_[i]; q < row_ptr_[i + 1]; ++q) z[cols_[q]] -= vals_[q] * z[i];
  }
}

IcPreconditioner::IcPreconditioner(const SparseMat& a) { ok_ = factor(a); }

CgResult cg_solve(const SparseMat& a, std::span<const double> b, double tol, std::size_t max_iter,
                  CgTrace* trace) {
  if (a.rows() != a.cols() || a.rows() != b.size()) {
    throw ContractError("cg_solve: dimension mismatch (" + std::to_string(a.rows()) + "x" +
                        std::to_string(a.cols()) + " vs rhs " + std::to_string(b.size()) + ")");
  }
#ifndef NDEBUG
  if (!a.is_symmetric()) throw ContractError("cg_solve: matrix is not symmetric");
#endif
  const Vector diag = a.diagonal();
  for (double d : diag) {
    if (!(d > 0.0)) throw NumericalBreakdown("cg_solve: non-positive diagonal entry");
  }
  auto op = [&a](std::span<const double> x, std::span<double> out) { a.multiply(x, out); };
  const IcPreconditioner ic(a);
  if (ic.ok()) {
    return pcg(op, [&ic](std::span<const double> r, std::span<double> z) { ic.solve(r, z); }, b, tol, max_iter,
               trace);
  }
  return pcg(op, [&diag](std::span<const double> r, std::span<double> z) {
    for (std::size_t i = 0; i < r.size(); ++i) z[i] = r[i] / diag[i];
  }, b, tol, max_iter, trace);
}

DenseMat dense_solve(const DenseMat& a, const DenseMat& b) {
  const std::size_t n = a.rows();
  if (a.cols() != n) throw ContractError("dense_solve: matrix is not square");
  if (b.rows() != n) throw ContractError("dense_solve: right-hand side row count mismatch");

  DenseMat lu = a;
  DenseMat x = b;
  const std::size_t m = b.cols();
  const double amax = norm_inf(a.data());
  const double threshold = static_cast<double>(n) * std::numeric_limits<double>::epsilon() * amax;

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(lu(i, k)) > std::abs(lu(piv, k))) piv = i;
    if (!(std::abs(lu(piv, k)) > threshold)) {
      throw SingularMatrixError("dense_solve: matrix singular to working precision at pivot " +
                                    std::to_string(k) + " (|pivot| = " +
                                    std::to_string(std::abs(lu(piv, k))) + ", threshold " +
                                    std::to_string(threshold) + ")",
                                k, lu(piv, k));
    }
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(lu(k, j), lu(piv, j));
      for (std::size_t j = 0; j < m; ++j) std::swap(x(k, j), x(piv, j));
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = lu(i, k) / lu(k, k);
      lu(i, k) = f;
      for (std::size_t j = k + 1; j < n; ++j) lu(i, j) -= f * lu(k, j);
      for (std::size_t j = 0; j < m; ++j) x(i, j) -= f * x(k, j);
    }
  }
  for (std::size_t kk = n; kk-- > 0;) {
    for (std::size_t j = 0; j < m; ++j) {
      double s = x(kk, j);
      for (std::size_t c = kk + 1; c < n; ++c) s -= lu(kk, c) * x(c, j);
      x(kk, j) = s / lu(kk, kk);
    }
  }
  return x;
}

Vector dense_solve(const DenseMat& a, std::span<const double> b) {
  DenseMat rhs(b.size(), 1);
  rhs.set_col(0, b);
  return dense_solve(a, rhs).col(0);
}

namespace {

// Fills zero columns of `cols` with unit vectors orthogonal to the rest, so
// the basis stays orthonormal for rank-deficient input.
void complete_orthonormal(std::vector<Vector>& cols, const std::vector<bool>& is_zero) {
  if (cols.empty()) return;
  const std::size_t dim = cols.front().size();
  std::size_t candidate = 0;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    if (!is_zero[j]) continue;
    while (candidate < dim) {
      Vector e(dim, 0.0);
      e[candidate++] = 1.0;
      for (int pass = 0; pass < 2; ++pass)
        for (std::size_t i = 0; i < cols.size(); ++i) {
          if (i == j || (is_zero[i] && i > j)) continue;
          axpy(-dot(cols[i], e), cols[i], e);
        }
      const double nrm = norm2(e);
      if (nrm > 0.5) {
        scale(1.0 / nrm, e);
        cols[j] = std::move(e);
        break;
      }
    }
  }
}

}  // namespace

Svd jacobi_svd(const DenseMat& c) {
  const bool transposed = c.rows() < c.cols();
  const DenseMat a = transposed ? c.transpose() : c;
  const std::size_t m = a.rows();
  const std::size_t n = a.cols();

  std::vector<Vector> u(n), v(n, Vector(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    u[j] = a.col(j);
    v[j][j] = 1.0;
  }

  constexpr double eps = std::numeric_limits<double>::epsilon();
  for (int sweep = 0; sweep < 80; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = dot(u[p], u[p]);
        const double beta = dot(u[q], u[q]);
        const double gamma = dot(u[p], u[q]);
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= eps * std::sqrt(alpha * beta)) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double cs = 1.0 / std::sqrt(1.0 + t * t);
        const double sn = cs * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double up = u[p][i];
          const double uq = u[q][i];
          u[p][i] = cs * up - sn * uq;
          u[q][i] = sn * up + cs * uq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v[p][i];
          const double vq = v[q][i];
          v[p][i] = cs * vp - sn * vq;
          v[q][i] = sn * vp + cs * vq;
        }
      }
    }
    if (!rotated) break;
  }

  Vector s(n);
  for (std::size_t j = 0; j < n; ++j) s[j] = norm2(u[j]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return s[i] > s[j]; });

  const double smax = n > 0 ? s[order.front()] : 0.0;
  std::vector<Vector> us(n), vs(n);
  Vector ss(n);
  std::vector<bool> zero(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    ss[k] = s[j];
    vs[k] = v[j];
    us[k] = u[j];
    if (s[j] <= eps * smax * static_cast<double>(std::max(m, n)) || s[j] == 0.0) {
      zero[k] = true;
      std::fill(us[k].begin(), us[k].end(), 0.0);
    } else {
      scale(1.0 / s[j], us[k]);
    }
  }
  complete_orthonormal(us, zero);

  Svd out;
  if (transposed) {
    out.u = DenseMat::from_columns(vs);
    out.v = DenseMat::from_columns(us);
  } else {
    out.u = DenseMat::from_columns(us);
    out.v = DenseMat::from_columns(vs);
  }
  out.s = std::move(ss);
  return out;
}

Svd truncated_svd(const DenseMat& c, std::size_t k) {
  const std::size_t r = std::min(c.rows(), c.cols());
  if (k < 1 || k > r) {
    throw ContractError("truncated_svd: rank " + std::to_string(k) + " outside [1, " +
                        std::to_string(r) + "]");
  }
  const Svd full = jacobi_svd(c);
  Svd out;
  out.u = DenseMat(c.rows(), k);
  out.v = DenseMat(c.cols(), k);
  out.s.assign(full.s.begin(), full.s.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t j = 0; j < k; ++j) {
    out.u.set_col(j, full.u.col(j));
    out.v.set_col(j, full.v.col(j));
  }
  return out;
}

}  // namespace simsrc
