#pragma once

#include <wdist/types.hpp>

#include <Eigen/Eigenvalues>

namespace wdist {

template <class Derived>
auto symmetrized(const Eigen::MatrixBase<Derived>& a) {
  using T = typename Derived::Scalar;
  return matrix_type<T>(T(0.5) * (a + a.transpose()));
}

template <class Derived>
typename Derived::Scalar min_eigenvalue(const Eigen::MatrixBase<Derived>& a) {
  using T = typename Derived::Scalar;
  if (a.rows() == 0) return T(0);
  Eigen::SelfAdjointEigenSolver<matrix_type<T>> es(symmetrized(a), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

template <class Derived>
bool is_positive_definite(const Eigen::MatrixBase<Derived>& a,
                          typename Derived::Scalar tol = typename Derived::Scalar(1e-10)) {
  if (a.rows() != a.cols() || a.rows() == 0 || !a.allFinite()) return false;
  return min_eigenvalue(a) > tol;
}

/// Ridge used when a Hessian-like matrix is singular: eps * I with
/// eps = 1e-8 * |trace| / p.
template <class Derived>
typename Derived::Scalar ridge_size(const Eigen::MatrixBase<Derived>& a) {
  using T = typename Derived::Scalar;
  const T tr = std::abs(a.trace());
  const T scale = tr > T(0) ? tr / T(a.rows()) : T(1);
  return T(1e-8) * scale;
}

template <class T>
struct InverseResult {
  matrix_type<T> inverse;
  bool ridge_used = false;
  bool ok = false;
};

/// Inverse of a square matrix that should be invertible (mean Hessians).
/// Falls back to a + eps*I when the LU factor is rank deficient.
template <class Derived>
InverseResult<typename Derived::Scalar> inverse_with_ridge(const Eigen::MatrixBase<Derived>& a) {
  using T = typename Derived::Scalar;
  InverseResult<T> out;
  const Index p = a.rows();
  if (p == 0) {
    out.ok = true;
    out.inverse.resize(0, 0);
    return out;
  }
  Eigen::FullPivLU<matrix_type<T>> lu(a);
  lu.setThreshold(std::numeric_limits<T>::epsilon() * T(16) * T(p));
  if (a.allFinite() && lu.isInvertible()) {
    out.inverse = lu.inverse();
    out.ok = out.inverse.allFinite();
    if (out.ok) return out;
  }
  matrix_type<T> shifted = a;
  shifted.diagonal().array() += ridge_size(a);
  Eigen::FullPivLU<matrix_type<T>> lu2(shifted);
  out.ridge_used = true;
  if (shifted.allFinite() && lu2.isInvertible()) {
    out.inverse = lu2.inverse();
    out.ok = out.inverse.allFinite();
  }
  return out;
}

/// Inverse of a symmetric positive definite matrix via Cholesky.
template <class Derived>
matrix_type<typename Derived::Scalar> spd_inverse(const Eigen::MatrixBase<Derived>& a) {
  using T = typename Derived::Scalar;
  Eigen::LLT<matrix_type<T>> llt(symmetrized(a));
  if (llt.info() != Eigen::Success) throw ContractViolation("spd_inverse: matrix is not positive definite");
  return symmetrized(llt.solve(matrix_type<T>::Identity(a.rows(), a.cols())));
}

/// u (x) u as a p^2 vector, index j*p + m holding u_j * u_m.
template <class Derived>
vector_type<typename Derived::Scalar> kron_self(const Eigen::MatrixBase<Derived>& u) {
  using T = typename Derived::Scalar;
  const Index p = u.size();
  vector_type<T> out(p * p);
  for (Index j = 0; j < p; ++j) out.segment(j * p, p) = u(j) * u;
  return out;
}

}  // namespace wdist
