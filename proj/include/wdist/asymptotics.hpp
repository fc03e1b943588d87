#pragma once

#include <wdist/linalg.hpp>
#include <wdist/model.hpp>
#include <wdist/types.hpp>

#include <functional>
#include <string>
#include <tuple>
#include <vector>

namespace wdist {

/// Population quantities of one block: J = J_{phi|lambda}(theta_k*),
/// Sigma = Var S_phi, and its weight gamma (a fraction or a sample size).
template <class T>
struct BlockAsymptotics {
  matrix_type<T> J;
  matrix_type<T> Sigma;
  T gamma = T(1);

  /// H = J^-1 Sigma J^-T.
  matrix_type<T> H() const {
    const matrix_type<T> j_inv = inverse_with_ridge(J).inverse;
    return symmetrized(j_inv * Sigma * j_inv.transpose());
  }
};

template <class T>
struct SacFullVariances {
  matrix_type<T> sac;
  matrix_type<T> full;
};

namespace detail {

template <class T>
Index check_asymptotics(const std::vector<BlockAsymptotics<T>>& blocks, const char* who) {
  require(!blocks.empty(), std::string(who) + ": no blocks");
  const Index p1 = blocks.front().J.rows();
  for (const auto& b : blocks) {
    require(b.J.rows() == p1 && b.J.cols() == p1 && b.Sigma.rows() == p1 && b.Sigma.cols() == p1,
            std::string(who) + ": inconsistent block dimensions");
    require(b.gamma > T(0), std::string(who) + ": weights must be positive");
  }
  return p1;
}

template <class T>
matrix_type<T> checked_inverse(const matrix_type<T>& a, const char* what) {
  Eigen::FullPivLU<matrix_type<T>> lu(a);
  if (!lu.isInvertible()) throw ContractViolation(std::string(what) + " is singular");
  return lu.inverse();
}

}  // namespace detail

/// sqrt(N)-scaled variances of phi_SaC and phi_full:
///   V_sac  = sum g_k J_k^-1 Sigma_k J_k^-T
///   V_full = (sum g_k J_k)^-1 (sum g_k Sigma_k) (sum g_k J_k)^-T
template <class T>
SacFullVariances<T> theorem1_variances(const std::vector<BlockAsymptotics<T>>& blocks) {
  const Index p1 = detail::check_asymptotics(blocks, "theorem1_variances");
  T total = T(0);
  for (const auto& b : blocks) {
    require(b.gamma <= T(1), "theorem1_variances: gamma must lie in (0, 1]");
    total += b.gamma;
  }
  require(std::abs(total - T(1)) <= T(1e-10), "theorem1_variances: gammas must sum to 1");
  SacFullVariances<T> out;
  out.sac = matrix_type<T>::Zero(p1, p1);
  matrix_type<T> sj = matrix_type<T>::Zero(p1, p1), ss = matrix_type<T>::Zero(p1, p1);
  for (const auto& b : blocks) {
    const matrix_type<T> j_inv = detail::checked_inverse(b.J, "theorem1_variances: J_k");
    out.sac += b.gamma * j_inv * b.Sigma * j_inv.transpose();
    sj += b.gamma * b.J;
    ss += b.gamma * b.Sigma;
  }
  const matrix_type<T> sj_inv = detail::checked_inverse(sj, "theorem1_variances: sum gamma_k J_k");
  out.sac = symmetrized(out.sac);
  out.full = symmetrized(sj_inv * ss * sj_inv.transpose());
  return out;
}

/// (sum n_k J_k' Sigma_k^-1 J_k)^-1: the asymptotic variance shared by the
/// weighted distributed and GMM estimators. With fractions as weights this
/// is the N-scaled variance.
template <class T>
matrix_type<T> wd_gmm_asy_var(const std::vector<BlockAsymptotics<T>>& blocks) {
  const Index p1 = detail::check_asymptotics(blocks, "wd_gmm_asy_var");
  matrix_type<T> info = matrix_type<T>::Zero(p1, p1);
  for (const auto& b : blocks)
    info += b.gamma * b.J.transpose() * detail::checked_inverse(b.Sigma, "wd_gmm_asy_var: Sigma_k") * b.J;
  return symmetrized(detail::checked_inverse(symmetrized(info), "wd_gmm_asy_var: information"));
}

/// X' H^-1 X + Y' K^-1 Y - (X + Y)' (H + K)^-1 (X + Y), positive semidefinite
/// whenever H and K are positive definite.
template <class T>
matrix_type<T> sandwich_inequality_residual(const matrix_type<T>& h, const matrix_type<T>& k, const matrix_type<T>& x,
                                            const matrix_type<T>& y) {
  require(h.rows() == h.cols() && k.rows() == k.cols() && h.rows() == k.rows(),
          "sandwich_inequality_residual: H and K must be square and of equal size");
  require(x.rows() == h.rows() && y.rows() == h.rows() && x.cols() == y.cols(),
          "sandwich_inequality_residual: X and Y must be p x m");
  const matrix_type<T> xy = x + y;
  return symmetrized(x.transpose() * spd_inverse(h) * x + y.transpose() * spd_inverse(k) * y -
                     xy.transpose() * spd_inverse(matrix_type<T>(h + k)) * xy);
}

/// Errors-in-variables design: X = Z + e, Y = phi + lambda_k Z + f with
/// Z ~ N(mu_z, var_z) and (e, f) ~ N(0, sigma2 I).
struct EivScenario {
  double phi = 1.0;
  std::vector<double> lambdas;
  double mu_z = 0.0;
  double var_z = 1.0;
  double sigma2 = 1.0;
  Index N = 100000;

  void validate() const {
    require(var_z > 0.0, "EivScenario: var_z must be positive");
    require(sigma2 > 0.0, "EivScenario: sigma2 must be positive");
    require(!lambdas.empty(), "EivScenario: needs at least one block");
    require(N >= Index(lambdas.size()), "EivScenario: N must be >= K");
    for (double l : lambdas) require(std::isfinite(l), "EivScenario: lambda must be finite");
  }
};

/// Population J and Sigma of the errors-in-variables M-function for one
/// block slope lambda. With s = 1 + lambda^2 and EZ2 = var_z + mu_z^2:
///   J     = var_z / (sigma2 s EZ2)
///   Sigma = (var_z / EZ2 + sigma2 mu_z^2 / (s EZ2^2)) / (sigma2 s)
inline BlockAsymptotics<double> eiv_block_asymptotics(const EivScenario& scn, double lambda, double gamma) {
  scn.validate();
  const double s = 1.0 + lambda * lambda;
  const double ez2 = scn.var_z + scn.mu_z * scn.mu_z;
  BlockAsymptotics<double> b;
  b.J = matrix_type<double>::Constant(1, 1, scn.var_z / (scn.sigma2 * s * ez2));
  b.Sigma = matrix_type<double>::Constant(
      1, 1, (scn.var_z / ez2 + scn.sigma2 * scn.mu_z * scn.mu_z / (s * ez2 * ez2)) / (scn.sigma2 * s));
  b.gamma = gamma;
  return b;
}

/// N-scaled asymptotic variances of the three EIV estimators with equal
/// block sizes, and ARE = NVar_sac / NVar_full.
struct EivVariances {
  double nvar_full = 0.0;
  double nvar_sac = 0.0;
  double nvar_wd = 0.0;
  double are = 0.0;
};

inline EivVariances eiv_asymptotic_variances(const EivScenario& scn) {
  scn.validate();
  const double k = double(scn.lambdas.size());
  const double ez2 = scn.var_z + scn.mu_z * scn.mu_z;
  const double first = scn.sigma2 * ez2 / scn.var_z;
  const double second = scn.sigma2 * scn.sigma2 * scn.mu_z * scn.mu_z / (scn.var_z * scn.var_z);
  double mean_s = 0.0, mean_inv_s = 0.0, mean_inv_s2 = 0.0;
  for (double l : scn.lambdas) {
    const double s = 1.0 + l * l;
    mean_s += s / k;
    mean_inv_s += 1.0 / (s * k);
    mean_inv_s2 += 1.0 / (s * s * k);
  }
  EivVariances out;
  // First terms: harmonic and arithmetic means of 1 + lambda_k^2.
  out.nvar_full = first / mean_inv_s + second * mean_inv_s2 / (mean_inv_s * mean_inv_s);
  out.nvar_sac = first * mean_s + second;
  std::vector<BlockAsymptotics<double>> blocks;
  for (double l : scn.lambdas) blocks.push_back(eiv_block_asymptotics(scn, l, 1.0 / k));
  out.nvar_wd = wd_gmm_asy_var(blocks)(0, 0);
  out.are = out.nvar_sac / out.nvar_full;
  return out;
}

/// The parameter rows of the errors-in-variables simulation study.
struct EivTableRow {
  int scenario = 0;
  EivScenario design;
};

inline EivScenario eiv_scenario(int scenario, double lambda1, double lambda2) {
  EivScenario s;
  s.phi = 1.0;
  s.sigma2 = 1.0;
  s.N = 100000;
  s.lambdas = {lambda1, lambda2};
  switch (scenario) {
    case 1: s.mu_z = 1.0, s.var_z = 0.1; break;
    case 2: s.mu_z = 3.0, s.var_z = 0.5; break;
    case 3: s.mu_z = 0.0, s.var_z = 0.5; break;
    case 4: s.mu_z = 4.0, s.var_z = 0.5; break;
    default: throw ContractViolation("eiv_scenario: scenario must be 1..4");
  }
  return s;
}

inline std::vector<EivTableRow> eiv_table_rows() {
  const std::vector<std::tuple<int, double, double>> rows = {
      {1, 0.25, 3.25}, {1, 0.5, 3.5},   {1, 0.75, 3.75}, {2, 0.25, 2.25}, {2, 0.75, 2.75}, {2, 1.25, 3.25},
      {3, 0.25, 2.25}, {3, 0.75, 2.75}, {3, 1.25, 3.25}, {4, 0.5, 0.5},   {4, 1.0, 1.0},   {4, 1.5, 1.5},
  };
  std::vector<EivTableRow> out;
  for (const auto& [sc, l1, l2] : rows) out.push_back({sc, eiv_scenario(sc, l1, l2)});
  return out;
}

template <class T>
struct BartlettProbe {
  T gamma_hat = T(0);
  T residual = T(0);
  matrix_type<T> outer;    // E grad M grad M'
  matrix_type<T> hessian;  // E hess M
};

/// Monte Carlo probe of E[grad M grad M'] = gamma E[hess M] at theta. The
/// sampler writes draw i of the data distribution into `row`.
template <class T>
BartlettProbe<T> bartlett_residual(const BlockModel<T>& model, const ParameterVector<T>& theta,
                                   const std::function<void(Index, Eigen::Ref<vector_type<T>>)>& sampler,
                                   Index n_mc) {
  require(n_mc >= 1, "bartlett_residual: n_mc must be >= 1");
  require(theta.size() == model.dim(), "bartlett_residual: theta has the wrong size");
  const Index p = model.dim();
  BartlettProbe<T> out;
  out.outer = matrix_type<T>::Zero(p, p);
  out.hessian = matrix_type<T>::Zero(p, p);
  vector_type<T> row(model.row_arity()), g(p);
  matrix_type<T> h(p, p);
  for (Index i = 0; i < n_mc; ++i) {
    sampler(i, row);
    model.eval_score(row, theta.flat(), g);
    model.eval_hessian(row, theta.flat(), h);
    out.outer.noalias() += g * g.transpose();
    out.hessian += h;
  }
  out.outer /= T(n_mc);
  out.hessian /= T(n_mc);
  out.gamma_hat = out.outer.trace() / out.hessian.trace();
  out.residual = (out.outer - out.gamma_hat * out.hessian).norm() / out.hessian.norm();
  return out;
}

}  // namespace wdist
