#pragma once

#include <wdist/model.hpp>

#include <algorithm>
#include <cmath>

namespace wdist {

/// Heterogeneous logistic regression. A row is (x_1, ..., x_p, y) with
/// y in {0, 1}; theta multiplies x with the common coordinates first.
/// M = log(1 + exp(x'theta)) - y * x'theta.
template <class T>
class LogisticModel final : public BlockModel<T> {
 public:
  using Base = BlockModel<T>;
  using typename Base::Matrix;
  using typename Base::RowRef;
  using typename Base::ThetaRef;
  using typename Base::Vector;

  LogisticModel(Index common_dim, Index block_dim) : Base(common_dim, block_dim, common_dim + block_dim + 1) {}

  std::string name() const override { return "logistic"; }

  static T softplus(T z) { return std::max(z, T(0)) + std::log1p(std::exp(-std::abs(z))); }
  static T sigmoid(T z) {
    if (z >= T(0)) return T(1) / (T(1) + std::exp(-z));
    const T e = std::exp(z);
    return e / (T(1) + e);
  }

  T eval_objective(RowRef row, ThetaRef theta) const override {
    const Index p = this->dim();
    const T z = row.head(p).dot(theta);
    return softplus(z) - row(p) * z;
  }

  void eval_score(RowRef row, ThetaRef theta, Eigen::Ref<Vector> out) const override {
    const Index p = this->dim();
    const T z = row.head(p).dot(theta);
    out = (sigmoid(z) - row(p)) * row.head(p);
  }

  void eval_hessian(RowRef row, ThetaRef theta, Eigen::Ref<Matrix> out) const override {
    const Index p = this->dim();
    const T mu = sigmoid(row.head(p).dot(theta));
    out.noalias() = (mu * (T(1) - mu)) * row.head(p) * row.head(p).transpose();
  }

  void eval_third(RowRef row, ThetaRef theta, Eigen::Ref<Matrix> out) const override {
    const Index p = this->dim();
    const T mu = sigmoid(row.head(p).dot(theta));
    const T dw = mu * (T(1) - mu) * (T(1) - T(2) * mu);
    for (Index j = 0; j < p; ++j)
      out.middleCols(j * p, p).noalias() = (dw * row(j)) * row.head(p) * row.head(p).transpose();
  }
  bool has_analytic_third() const override { return true; }

  BlockEvaluation<T> evaluate(const row_matrix_type<T>& rows, ThetaRef theta, int order) const override {
    const Index p = this->dim();
    const Index n = rows.rows();
    const auto x = rows.leftCols(p);
    const auto y = rows.col(p).array();
    const Vector z = x * theta;
    BlockEvaluation<T> out;
    out.objective = (z.unaryExpr([](T v) { return softplus(v); }).array() - y * z.array()).sum() / T(n);
    if (order >= 1) {
      const Vector mu = z.unaryExpr([](T v) { return sigmoid(v); });
      out.gradient = x.transpose() * (mu.array() - y).matrix() / T(n);
      if (order >= 2) {
        const Vector w = mu.array() * (T(1) - mu.array());
        const Matrix xw = x.array().colwise() * w.array();
        out.hessian = x.transpose() * xw / T(n);
      }
    }
    return out;
  }

  Matrix scores(const row_matrix_type<T>& rows, ThetaRef theta) const override {
    const Index p = this->dim();
    const auto x = rows.leftCols(p);
    const Vector resid = (x * theta).unaryExpr([](T v) { return sigmoid(v); }) - rows.col(p);
    return x.array().colwise() * resid.array();
  }

  void curvature_terms(const row_matrix_type<T>& rows, ThetaRef theta, const Matrix& d, const Matrix& m,
                       Vector& hessian_times_d, Vector& third_times_m) const override {
    const Index p = this->dim();
    const Index n = rows.rows();
    const auto x = rows.leftCols(p);
    const Vector mu = (x * theta).unaryExpr([](T v) { return sigmoid(v); });
    const Vector w = mu.array() * (T(1) - mu.array());
    const Vector dw = w.array() * (T(1) - T(2) * mu.array());
    // hessian_i d_i = w_i x_i (x_i' d_i);  third_i vec(m) = w'_i x_i (x_i' m x_i)
    const Vector xd = (x.array() * d.array()).rowwise().sum();
    const Vector xmx = ((x * m).array() * x.array()).rowwise().sum();
    hessian_times_d = x.transpose() * (w.array() * xd.array()).matrix() / T(n);
    third_times_m = x.transpose() * (dw.array() * xmx.array()).matrix() / T(n);
  }
};

/// Errors-in-variables M-function for a row (X, Y), theta = (phi, lambda):
/// M = (lambda*X - (Y - phi))^2 / (2 sigma^2 (1 + lambda^2)).
/// sigma^2 is a known constant of the model.
template <class T>
class EivModel final : public BlockModel<T> {
 public:
  using Base = BlockModel<T>;
  using typename Base::Matrix;
  using typename Base::RowRef;
  using typename Base::ThetaRef;
  using typename Base::Vector;

  explicit EivModel(T noise_variance = T(1)) : Base(1, 1, 2), noise_variance_(noise_variance) {
    require(noise_variance > T(0), "EivModel: sigma^2 must be positive");
  }

  std::string name() const override { return "eiv"; }
  T noise_variance() const { return noise_variance_; }

  T eval_objective(RowRef row, ThetaRef theta) const override {
    const T lam = theta(1);
    const T r = lam * row(0) - row(1) + theta(0);
    return r * r / (T(2) * noise_variance_ * (T(1) + lam * lam));
  }

  void eval_score(RowRef row, ThetaRef theta, Eigen::Ref<Vector> out) const override {
    const Terms t(row, theta, noise_variance_);
    out(0) = t.c * t.r * t.f0;
    out(1) = t.c * t.r * t.x * t.f0 + T(0.5) * t.c * t.r * t.r * t.f1;
  }

  void eval_hessian(RowRef row, ThetaRef theta, Eigen::Ref<Matrix> out) const override {
    const Terms t(row, theta, noise_variance_);
    out(0, 0) = t.c * t.f0;
    out(0, 1) = out(1, 0) = t.c * t.x * t.f0 + t.c * t.r * t.f1;
    out(1, 1) = t.c * t.x * t.x * t.f0 + T(2) * t.c * t.r * t.x * t.f1 + T(0.5) * t.c * t.r * t.r * t.f2;
  }

  void eval_third(RowRef row, ThetaRef theta, Eigen::Ref<Matrix> out) const override {
    const Terms t(row, theta, noise_variance_);
    // Fully symmetric; the value depends only on how many lambda indices appear.
    const T by_count[4] = {
        T(0),
        t.c * t.f1,
        T(2) * t.c * t.x * t.f1 + t.c * t.r * t.f2,
        T(3) * t.c * t.x * t.x * t.f1 + T(3) * t.c * t.r * t.x * t.f2 + T(0.5) * t.c * t.r * t.r * t.f3,
    };
    for (int l = 0; l < 2; ++l)
      for (int j = 0; j < 2; ++j)
        for (int m = 0; m < 2; ++m) out(l, j * 2 + m) = by_count[l + j + m];
  }
  bool has_analytic_third() const override { return true; }

  /// Orthogonal-regression solution of the empirical estimating equations.
  Vector initial_point(const DataBlock<T>& block) const override {
    const auto xs = block.rows.col(0).array();
    const auto ys = block.rows.col(1).array();
    const T n = T(block.n());
    const T mx = xs.sum() / n;
    const T my = ys.sum() / n;
    const T sxx = (xs - mx).square().sum() / n;
    const T syy = (ys - my).square().sum() / n;
    const T sxy = ((xs - mx) * (ys - my)).sum() / n;
    T lam = T(0);
    if (std::abs(sxy) > std::numeric_limits<T>::epsilon() * (sxx + syy)) {
      const T d = syy - sxx;
      lam = (d + std::sqrt(d * d + T(4) * sxy * sxy)) / (T(2) * sxy);
    }
    Vector start(2);
    start << my - lam * mx, lam;
    return start;
  }

 private:
  struct Terms {
    T x, r, c, f0, f1, f2, f3;
    Terms(RowRef row, ThetaRef theta, T noise_variance) {
      const T lam = theta(1);
      const T s = T(1) + lam * lam;
      x = row(0);
      r = lam * row(0) - row(1) + theta(0);
      c = T(1) / noise_variance;
      // derivatives of 1 / (1 + lambda^2)
      f0 = T(1) / s;
      f1 = -T(2) * lam / (s * s);
      f2 = (T(6) * lam * lam - T(2)) / (s * s * s);
      f3 = T(24) * lam * (T(1) - lam * lam) / (s * s * s * s);
    }
  };

  T noise_variance_;
};

/// M = |theta - x|^2 / 2. Test model with constant Hessian.
template <class T>
class QuadraticModel final : public BlockModel<T> {
 public:
  using Base = BlockModel<T>;
  using typename Base::Matrix;
  using typename Base::RowRef;
  using typename Base::ThetaRef;
  using typename Base::Vector;

  QuadraticModel(Index common_dim, Index block_dim) : Base(common_dim, block_dim, common_dim + block_dim) {}

  std::string name() const override { return "quadratic"; }

  T eval_objective(RowRef row, ThetaRef theta) const override { return T(0.5) * (theta - row).squaredNorm(); }
  void eval_score(RowRef row, ThetaRef theta, Eigen::Ref<Vector> out) const override { out = theta - row; }
  void eval_hessian(RowRef, ThetaRef, Eigen::Ref<Matrix> out) const override { out.setIdentity(); }
  void eval_third(RowRef, ThetaRef, Eigen::Ref<Matrix> out) const override { out.setZero(); }
  bool has_analytic_third() const override { return true; }
};

/// Exponential-rate likelihood M = lambda*x - log(lambda), p = 1. Outside
/// lambda > 0 the objective is +infinity.
template <class T>
class ExponentialModel final : public BlockModel<T> {
 public:
  using Base = BlockModel<T>;
  using typename Base::Matrix;
  using typename Base::RowRef;
  using typename Base::ThetaRef;
  using typename Base::Vector;

  ExponentialModel() : Base(1, 0, 1) {}

  std::string name() const override { return "exponential"; }

  T eval_objective(RowRef row, ThetaRef theta) const override {
    const T lam = theta(0);
    if (!(lam > T(0))) return std::numeric_limits<T>::infinity();
    return lam * row(0) - std::log(lam);
  }
  void eval_score(RowRef row, ThetaRef theta, Eigen::Ref<Vector> out) const override {
    out(0) = row(0) - T(1) / theta(0);
  }
  void eval_hessian(RowRef, ThetaRef theta, Eigen::Ref<Matrix> out) const override {
    out(0, 0) = T(1) / (theta(0) * theta(0));
  }
  void eval_third(RowRef, ThetaRef theta, Eigen::Ref<Matrix> out) const override {
    out(0, 0) = -T(2) / (theta(0) * theta(0) * theta(0));
  }
  bool has_analytic_third() const override { return true; }

  Vector initial_point(const DataBlock<T>&) const override { return Vector::Ones(1); }
};

}  // namespace wdist
