#pragma once

#include <wdist/linalg.hpp>
#include <wdist/types.hpp>

#include <limits>
#include <string>
#include <type_traits>

namespace wdist {

/// Averages of M and its first two theta-derivatives over a set of rows.
template <class T>
struct BlockEvaluation {
  T objective = T(0);
  vector_type<T> gradient;
  matrix_type<T> hessian;

  bool finite() const {
    return std::isfinite(objective) && (gradient.size() == 0 || gradient.allFinite()) &&
           (hessian.size() == 0 || hessian.allFinite());
  }
};

/// M-function M(x; phi, lambda_k) with exact derivatives up to third order.
///
/// Third derivatives use the recursive Kronecker layout: a p x p^2 matrix
/// whose column block j (columns j*p .. j*p+p-1) is d(hessian)/d(theta_j).
/// Evaluations are const and keep no state, so one model instance may be
/// shared by any number of threads.
template <class T>
class BlockModel {
 public:
  using Vector = vector_type<T>;
  using Matrix = matrix_type<T>;
  using RowRef = cref_vector_type<T>;
  using ThetaRef = cref_vector_type<T>;

  BlockModel(Index common_dim, Index block_dim, Index row_arity)
      : common_dim_(common_dim), block_dim_(block_dim), row_arity_(row_arity) {
    require(common_dim >= 1, "BlockModel: p1 must be >= 1");
    require(block_dim >= 0, "BlockModel: p2 must be >= 0");
    require(row_arity >= 1, "BlockModel: row arity must be >= 1");
  }
  virtual ~BlockModel() = default;

  Index common_dim() const { return common_dim_; }
  Index block_dim() const { return block_dim_; }
  Index dim() const { return common_dim_ + block_dim_; }
  Index row_arity() const { return row_arity_; }

  virtual std::string name() const = 0;

  // Unchecked kernels. Out-parameters are pre-sized by the caller.
  virtual T eval_objective(RowRef row, ThetaRef theta) const = 0;
  virtual void eval_score(RowRef row, ThetaRef theta, Eigen::Ref<Vector> out) const = 0;
  virtual void eval_hessian(RowRef row, ThetaRef theta, Eigen::Ref<Matrix> out) const = 0;

  /// Central differences of the Hessian; models with a closed form override.
  virtual void eval_third(RowRef row, ThetaRef theta, Eigen::Ref<Matrix> out) const {
    const Index p = dim();
    Vector shifted = theta;
    Matrix plus(p, p), minus(p, p);
    for (Index j = 0; j < p; ++j) {
      const T h = T(1e-5) * (T(1) + std::abs(theta(j)));
      shifted(j) = theta(j) + h;
      eval_hessian(row, shifted, plus);
      shifted(j) = theta(j) - h;
      eval_hessian(row, shifted, minus);
      shifted(j) = theta(j);
      out.middleCols(j * p, p) = (plus - minus) / (T(2) * h);
    }
  }
  virtual bool has_analytic_third() const { return false; }

  /// Starting point for the local Newton solve.
  virtual Vector initial_point(const DataBlock<T>& block) const {
    (void)block;
    return Vector::Zero(dim());
  }

  /// Row averages of M, score and Hessian up to `order` (0, 1 or 2).
  /// Never throws on non-finite values; callers inspect finite().
  virtual BlockEvaluation<T> evaluate(const row_matrix_type<T>& rows, ThetaRef theta, int order) const {
    const Index p = dim();
    const Index n = rows.rows();
    BlockEvaluation<T> out;
    out.gradient = Vector::Zero(order >= 1 ? p : 0);
    out.hessian = Matrix::Zero(order >= 2 ? p : 0, order >= 2 ? p : 0);
    Vector g(p);
    Matrix h(p, p);
    for (Index i = 0; i < n; ++i) {
      auto row = rows.row(i).transpose();
      out.objective += eval_objective(row, theta);
      if (order >= 1) {
        eval_score(row, theta, g);
        out.gradient += g;
      }
      if (order >= 2) {
        eval_hessian(row, theta, h);
        out.hessian += h;
      }
    }
    const T inv_n = T(1) / T(n);
    out.objective *= inv_n;
    out.gradient *= inv_n;
    out.hessian *= inv_n;
    return out;
  }

  /// Per-row scores as an n x p matrix (row i = psi(X_i; theta)^T).
  virtual Matrix scores(const row_matrix_type<T>& rows, ThetaRef theta) const {
    Matrix out(rows.rows(), dim());
    Vector g(dim());
    for (Index i = 0; i < rows.rows(); ++i) {
      eval_score(rows.row(i).transpose(), theta, g);
      out.row(i) = g.transpose();
    }
    return out;
  }

  /// Row averages needed by the second-order bias formula, given the rows
  /// d_i^T of `d` and a p x p matrix `m` (vec(m) plays the role of an
  /// average of d (x) d):
  ///   hessian_times_d = n^-1 sum_i hessian_i d_i
  ///   third_times_m   = n^-1 sum_i third_i vec(m)
  virtual void curvature_terms(const row_matrix_type<T>& rows, ThetaRef theta, const Matrix& d, const Matrix& m,
                               Vector& hessian_times_d, Vector& third_times_m) const {
    const Index p = dim();
    const Index n = rows.rows();
    const Vector vec_m = Eigen::Map<const Vector>(m.data(), p * p);
    hessian_times_d = Vector::Zero(p);
    third_times_m = Vector::Zero(p);
    Matrix h(p, p), h3(p, p * p);
    for (Index i = 0; i < n; ++i) {
      auto row = rows.row(i).transpose();
      eval_hessian(row, theta, h);
      hessian_times_d.noalias() += h * d.row(i).transpose();
      eval_third(row, theta, h3);
      third_times_m.noalias() += h3 * vec_m;
    }
    hessian_times_d /= T(n);
    third_times_m /= T(n);
  }

 private:
  Index common_dim_;
  Index block_dim_;
  Index row_arity_;
};

namespace detail {

template <class T, class RowT, class ThetaT>
void check_call(const BlockModel<T>& model, const RowT& row, const ThetaT& theta) {
  if (row.size() != model.row_arity())
    throw ContractViolation(model.name() + ": row has " + std::to_string(row.size()) + " entries, expected " +
                            std::to_string(model.row_arity()));
  if (theta.size() != model.dim())
    throw ContractViolation(model.name() + ": theta has " + std::to_string(theta.size()) + " entries, expected " +
                            std::to_string(model.dim()));
}

template <class T, class Obj>
const Obj& check_finite(const BlockModel<T>& model, const Obj& value, const char* what) {
  bool ok;
  if constexpr (std::is_arithmetic_v<Obj>) {
    ok = std::isfinite(value);
  } else {
    ok = value.allFinite();
  }
  if (!ok) throw EvaluationError(model.name() + ": non-finite " + what);
  return value;
}

}  // namespace detail

template <class U>
using nd = std::type_identity_t<U>;

template <class T>
T objective(const BlockModel<T>& model, nd<cref_vector_type<T>> row, nd<cref_vector_type<T>> theta) {
  detail::check_call(model, row, theta);
  const T v = model.eval_objective(row, theta);
  return detail::check_finite(model, v, "objective");
}

template <class T>
vector_type<T> score(const BlockModel<T>& model, nd<cref_vector_type<T>> row, nd<cref_vector_type<T>> theta) {
  detail::check_call(model, row, theta);
  vector_type<T> out(model.dim());
  model.eval_score(row, theta, out);
  return detail::check_finite(model, out, "score");
}

template <class T>
matrix_type<T> hessian(const BlockModel<T>& model, nd<cref_vector_type<T>> row, nd<cref_vector_type<T>> theta) {
  detail::check_call(model, row, theta);
  matrix_type<T> out(model.dim(), model.dim());
  model.eval_hessian(row, theta, out);
  return detail::check_finite(model, out, "hessian");
}

template <class T>
matrix_type<T> third_derivative(const BlockModel<T>& model, nd<cref_vector_type<T>> row, nd<cref_vector_type<T>> theta) {
  detail::check_call(model, row, theta);
  const Index p = model.dim();
  matrix_type<T> out(p, p * p);
  model.eval_third(row, theta, out);
  return detail::check_finite(model, out, "third derivative");
}

template <class T>
T objective(const BlockModel<T>& model, nd<cref_vector_type<T>> row, const ParameterVector<T>& theta) {
  return objective(model, row, cref_vector_type<T>(theta.flat()));
}

template <class T>
vector_type<T> score(const BlockModel<T>& model, nd<cref_vector_type<T>> row, const ParameterVector<T>& theta) {
  return score(model, row, cref_vector_type<T>(theta.flat()));
}

template <class T>
matrix_type<T> hessian(const BlockModel<T>& model, nd<cref_vector_type<T>> row, const ParameterVector<T>& theta) {
  return hessian(model, row, cref_vector_type<T>(theta.flat()));
}

template <class T>
matrix_type<T> third_derivative(const BlockModel<T>& model, nd<cref_vector_type<T>> row,
                                const ParameterVector<T>& theta) {
  return third_derivative(model, row, cref_vector_type<T>(theta.flat()));
}

}  // namespace wdist
