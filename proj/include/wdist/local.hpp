#pragma once

#include <wdist/linalg.hpp>
#include <wdist/model.hpp>
#include <wdist/random.hpp>
#include <wdist/types.hpp>

#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace wdist {

struct SolverOptions {
  double gradient_tolerance = 1e-10;  // on the 2-norm of the mean score
  int max_iterations = 100;
  double shrink = 0.5;
  double sufficient_decrease = 1e-4;
  int max_backtracks = 60;
  bool record_path = false;  // keep the objective at every iterate

  void validate() const {
    require(gradient_tolerance > 0.0, "SolverOptions: tolerance must be positive");
    require(max_iterations >= 1, "SolverOptions: max_iterations must be >= 1");
    require(shrink > 0.0 && shrink < 1.0, "SolverOptions: shrink must lie in (0, 1)");
    require(sufficient_decrease > 0.0 && sufficient_decrease < 0.5,
            "SolverOptions: sufficient decrease must lie in (0, 0.5)");
  }
};

enum class FitStatus {
  converged,
  max_iterations,
  stalled_at_boundary,  // stopped on a face of the box: a KKT point there, or no further progress
  singular_hessian,
  line_search_failed,
  non_finite,
};

inline const char* to_string(FitStatus s) {
  switch (s) {
    case FitStatus::converged: return "converged";
    case FitStatus::max_iterations: return "max_iterations";
    case FitStatus::stalled_at_boundary: return "stalled_at_boundary";
    case FitStatus::singular_hessian: return "singular_hessian";
    case FitStatus::line_search_failed: return "line_search_failed";
    case FitStatus::non_finite: return "non_finite";
  }
  return "unknown";
}

struct FitDiagnostics {
  int iterations = 0;
  double gradient_norm = 0.0;
  FitStatus status = FitStatus::max_iterations;
  bool newton_ridge = false;    // a ridge was added to a Newton system
  bool sandwich_ridge = false;  // ridge used when inverting the mean Hessian for the sandwich
  bool bias_ridge = false;      // ridge used when inverting the mean Hessian for the bias
  std::vector<double> objective_path;

  bool converged() const { return status == FitStatus::converged; }
  // A stall on the box boundary still yields the constrained minimizer.
  bool usable() const { return converged() || status == FitStatus::stalled_at_boundary; }
};

/// Everything a worker knows about its own block after local estimation.
template <class T>
struct LocalFit {
  ParameterVector<T> theta_hat;
  matrix_type<T> H_full;  // sandwich (grad Psi)^-1 S (grad Psi)^-T, un-scaled
  matrix_type<T> H;       // leading p1 x p1 block of H_full
  vector_type<T> bias_hat;
  bool bias_applied = false;
  ParameterVector<T> theta_bc;  // debiased estimate (equals theta_hat when not applied)
  Index n = 0;
  FitDiagnostics diagnostics;

  bool converged() const { return diagnostics.converged(); }
  bool usable() const { return diagnostics.usable(); }
  bool has_sandwich() const { return H_full.size() > 0; }
  bool has_bias() const { return bias_hat.size() > 0; }
};

namespace detail {

template <class T>
struct NewtonDirection {
  vector_type<T> step;
  bool ok = false;
  bool ridge = false;
};

template <class T>
NewtonDirection<T> newton_direction(const matrix_type<T>& hess, const vector_type<T>& grad) {
  NewtonDirection<T> out;
  if (hess.rows() == 0) {
    out.step.resize(0);
    out.ok = true;
    return out;
  }
  Eigen::LLT<matrix_type<T>> llt(hess);
  if (llt.info() == Eigen::Success) {
    out.step = -llt.solve(grad);
    out.ok = out.step.allFinite();
    if (out.ok) return out;
  }
  matrix_type<T> shifted = hess;
  shifted.diagonal().array() += ridge_size(hess);
  Eigen::LLT<matrix_type<T>> llt2(shifted);
  out.ridge = true;
  if (llt2.info() == Eigen::Success) {
    out.step = -llt2.solve(grad);
    out.ok = out.step.allFinite();
  }
  return out;
}

// Coordinates held at a bound by a gradient pointing out of the box.
template <class T>
std::vector<char> active_bounds(const vector_type<T>& theta, const vector_type<T>& grad, const ParameterBox<T>& box) {
  std::vector<char> active(std::size_t(theta.size()), 0);
  for (Index i = 0; i < theta.size(); ++i)
    active[std::size_t(i)] = (theta(i) <= box.lower(i) && grad(i) > T(0)) || (theta(i) >= box.upper(i) && grad(i) < T(0));
  return active;
}

// Newton step over the free coordinates; active ones stay put.
template <class T>
NewtonDirection<T> free_newton_direction(const matrix_type<T>& hess, const vector_type<T>& grad,
                                         const std::vector<char>& active) {
  std::vector<Index> free;
  for (Index i = 0; i < grad.size(); ++i)
    if (!active[std::size_t(i)]) free.push_back(i);
  if (Index(free.size()) == grad.size()) return newton_direction(hess, grad);
  const Index m = Index(free.size());
  matrix_type<T> hf(m, m);
  vector_type<T> gf(m);
  for (Index a = 0; a < m; ++a) {
    gf(a) = grad(free[std::size_t(a)]);
    for (Index b = 0; b < m; ++b) hf(a, b) = hess(free[std::size_t(a)], free[std::size_t(b)]);
  }
  auto sub = newton_direction(hf, gf);
  NewtonDirection<T> out;
  out.ok = sub.ok;
  out.ridge = sub.ridge;
  out.step = vector_type<T>::Zero(grad.size());
  if (sub.ok)
    for (Index a = 0; a < m; ++a) out.step(free[std::size_t(a)]) = sub.step(a);
  return out;
}

template <class T>
bool armijo_ok(T f_new, T f_old, T c, T directional, T slack) {
  return std::isfinite(f_new) && f_new <= f_old + c * directional + slack;
}

template <class T>
T rounding_slack(T f) {
  return T(10) * std::numeric_limits<T>::epsilon() * (T(1) + std::abs(f));
}

}  // namespace detail

/// Projected damped Newton solve of the local estimating equations
/// n_k^-1 sum_i psi(X_{k,i}; theta) = 0. Returns theta only; the sandwich
/// and bias are filled by sandwich_covariance / bias_estimate.
template <class T>
LocalFit<T> fit_local(const DataBlock<T>& block, const BlockModel<T>& model, const ParameterBox<T>& box,
                      const SolverOptions& opts = {}, std::optional<vector_type<T>> start = std::nullopt) {
  opts.validate();
  box.validate();
  const Index p = model.dim();
  require(block.arity() == model.row_arity(), "fit_local: row arity does not match the model");
  require(block.n() >= p, "fit_local: block has fewer rows than parameters");
  require(box.dim() == p && box.common_dim() == model.common_dim(), "fit_local: box dimension mismatch");

  LocalFit<T> fit;
  fit.n = block.n();
  vector_type<T> theta = box.clamp(start ? *start : model.initial_point(block));
  require(theta.size() == p, "fit_local: start point has the wrong size");

  auto& diag = fit.diagnostics;
  diag.status = FitStatus::max_iterations;
  const T c = T(opts.sufficient_decrease);
  for (int it = 0;; ++it) {
    const BlockEvaluation<T> ev = model.evaluate(block.rows, theta, 2);
    if (!ev.finite()) {
      diag.status = FitStatus::non_finite;
      diag.gradient_norm = std::numeric_limits<double>::infinity();
      break;
    }
    // Projected gradient: a KKT point on a face of the box counts as a solution.
    const auto active = detail::active_bounds(theta, ev.gradient, box);
    vector_type<T> pg = ev.gradient;
    bool on_face = false;
    for (Index i = 0; i < p; ++i)
      if (active[std::size_t(i)]) pg(i) = T(0), on_face = true;
    diag.gradient_norm = double(pg.norm());
    if (opts.record_path) diag.objective_path.push_back(double(ev.objective));
    if (diag.gradient_norm <= opts.gradient_tolerance) {
      diag.status = on_face ? FitStatus::stalled_at_boundary : FitStatus::converged;
      break;
    }
    if (it >= opts.max_iterations) break;

    const auto dir = detail::free_newton_direction(ev.hessian, ev.gradient, active);
    diag.newton_ridge = diag.newton_ridge || dir.ridge;
    if (!dir.ok) {
      diag.status = FitStatus::singular_hessian;
      break;
    }
    T t = T(1);
    bool accepted = false;
    bool moved = false;
    vector_type<T> cand;
    for (int b = 0; b < opts.max_backtracks; ++b, t *= T(opts.shrink)) {
      cand = box.clamp(theta + t * dir.step);
      if ((cand - theta).cwiseAbs().maxCoeff() == T(0)) break;
      moved = true;
      const T f_new = model.evaluate(block.rows, cand, 0).objective;
      if (detail::armijo_ok(f_new, ev.objective, c, T(ev.gradient.dot(cand - theta)),
                            detail::rounding_slack(ev.objective))) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      const bool clipped = !box.contains(theta + dir.step) || (theta.array() == box.lower.array()).any() ||
                           (theta.array() == box.upper.array()).any();
      diag.status = (!moved || clipped) ? FitStatus::stalled_at_boundary : FitStatus::line_search_failed;
      break;
    }
    theta = cand;
    diag.iterations = it + 1;
  }
  fit.theta_hat = ParameterVector<T>(theta, model.common_dim());
  fit.theta_bc = fit.theta_hat;
  return fit;
}

template <class T>
struct SandwichResult {
  matrix_type<T> H_full;
  matrix_type<T> H;
  bool ridge_used = false;
};

/// H_full = (grad Psi)^-1 (n^-1 sum psi psi^T) (grad Psi)^-T at theta_hat,
/// returned un-scaled (the covariance of theta_hat is H_full / n).
template <class T>
SandwichResult<T> sandwich_covariance(const DataBlock<T>& block, const BlockModel<T>& model,
                                      const ParameterVector<T>& theta_hat) {
  require(theta_hat.size() == model.dim(), "sandwich_covariance: theta has the wrong size");
  require(block.arity() == model.row_arity(), "sandwich_covariance: row arity does not match the model");
  const T n = T(block.n());
  const auto ev = model.evaluate(block.rows, theta_hat.flat(), 2);
  const matrix_type<T> psi = model.scores(block.rows, theta_hat.flat());
  const matrix_type<T> meat = psi.transpose() * psi / n;
  const auto inv = inverse_with_ridge(ev.hessian);
  if (!inv.ok || !meat.allFinite()) throw EvaluationError("sandwich_covariance: mean Hessian is not invertible");
  SandwichResult<T> out;
  out.ridge_used = inv.ridge_used;
  out.H_full = symmetrized(inv.inverse * meat * inv.inverse.transpose());
  out.H = out.H_full.topLeftCorner(model.common_dim(), model.common_dim());
  return out;
}

struct BiasOptions {
  // Subtract the mean Hessian from each row Hessian (the population form)
  // instead of using the raw row Hessians.
  bool center_hessian = false;
};

template <class T>
struct BiasResult {
  vector_type<T> bias;
  bool ridge_used = false;
};

/// Empirical second-order bias B_hat(theta_hat):
///   Q (n^-1 sum v_i d_i + 1/2 H3 n^-1 sum d_i (x) d_i),
/// Q = (-n^-1 sum grad psi_i)^-1, d_i = Q psi_i, v_i = grad psi_i.
template <class T>
BiasResult<T> bias_estimate_detailed(const DataBlock<T>& block, const BlockModel<T>& model,
                                     const ParameterVector<T>& theta_hat, const BiasOptions& opts = {}) {
  require(theta_hat.size() == model.dim(), "bias_estimate: theta has the wrong size");
  require(block.arity() == model.row_arity(), "bias_estimate: row arity does not match the model");
  const T n = T(block.n());
  const auto& theta = theta_hat.flat();
  const auto ev = model.evaluate(block.rows, theta, 2);
  const auto inv = inverse_with_ridge(ev.hessian);
  if (!inv.ok) throw EvaluationError("bias_estimate: mean Hessian is not invertible");
  const matrix_type<T> q = -inv.inverse;
  const matrix_type<T> d = model.scores(block.rows, theta) * q.transpose();  // rows d_i^T
  const matrix_type<T> dd = d.transpose() * d / n;
  vector_type<T> hd, h3m;
  model.curvature_terms(block.rows, theta, d, dd, hd, h3m);
  if (opts.center_hessian) hd -= ev.hessian * (d.colwise().sum().transpose() / n);
  BiasResult<T> out;
  out.bias = q * (hd + T(0.5) * h3m);
  out.ridge_used = inv.ridge_used;
  if (!out.bias.allFinite()) throw EvaluationError("bias_estimate: non-finite bias");
  return out;
}

template <class T>
vector_type<T> bias_estimate(const DataBlock<T>& block, const BlockModel<T>& model,
                             const ParameterVector<T>& theta_hat, const BiasOptions& opts = {}) {
  return bias_estimate_detailed(block, model, theta_hat, opts).bias;
}

/// theta_hat - bias/n when that point stays in the box; otherwise theta_hat
/// unchanged and applied = false.
template <class T>
std::pair<ParameterVector<T>, bool> debias_local(const ParameterVector<T>& theta_hat, const vector_type<T>& bias_hat,
                                                 Index n, const ParameterBox<T>& box) {
  require(bias_hat.size() == theta_hat.size(), "debias_local: bias has the wrong size");
  require(box.dim() == theta_hat.size(), "debias_local: box has the wrong size");
  require(n >= 1, "debias_local: n must be >= 1");
  vector_type<T> cand = theta_hat.flat() - bias_hat / T(n);
  if (cand.allFinite() && box.contains(cand)) return {ParameterVector<T>(std::move(cand), theta_hat.common_dim()), true};
  return {theta_hat, false};
}

template <class T>
struct SplitPair {
  DataBlock<T> first;   // ceil(n/2) rows
  DataBlock<T> second;  // floor(n/2) rows
  std::vector<std::int64_t> permutation;
};

/// Seeded split of a block into halves of sizes ceil(n/2) and floor(n/2).
/// Each half must be able to support a fit of `dim` parameters.
template <class T>
SplitPair<T> split_halves(const DataBlock<T>& block, std::uint64_t seed, Index dim) {
  const Index n = block.n();
  if (n < 2 * dim)
    throw ContractViolation("split_halves: block " + std::to_string(block.id) + " has " + std::to_string(n) +
                            " rows, need at least " + std::to_string(2 * dim));
  SplitPair<T> out;
  out.permutation = seeded_permutation(n, seed, static_cast<std::uint32_t>(block.id),
                                       static_cast<std::uint32_t>(std::uint64_t(block.id) >> 32));
  const Index n1 = (n + 1) / 2;
  out.first.id = block.id;
  out.second.id = block.id;
  out.first.rows.resize(n1, block.arity());
  out.second.rows.resize(n - n1, block.arity());
  for (Index i = 0; i < n; ++i) {
    const auto src = block.rows.row(out.permutation[static_cast<std::size_t>(i)]);
    if (i < n1)
      out.first.rows.row(i) = src;
    else
      out.second.rows.row(i - n1) = src;
  }
  return out;
}

/// Which optional products a worker computes after its Newton solve.
struct LocalWork {
  bool sandwich = true;
  bool bias = false;
  BiasOptions bias_options;
};

/// fit_local followed by the requested sandwich, bias and debias steps.
template <class T>
LocalFit<T> fit_block(const DataBlock<T>& block, const BlockModel<T>& model, const ParameterBox<T>& box,
                      const SolverOptions& opts, const LocalWork& work) {
  LocalFit<T> fit = fit_local(block, model, box, opts);
  if (!fit.usable()) return fit;
  if (work.sandwich) {
    auto sw = sandwich_covariance(block, model, fit.theta_hat);
    fit.H_full = std::move(sw.H_full);
    fit.H = std::move(sw.H);
    fit.diagnostics.sandwich_ridge = sw.ridge_used;
  }
  if (work.bias) {
    auto b = bias_estimate_detailed(block, model, fit.theta_hat, work.bias_options);
    fit.bias_hat = std::move(b.bias);
    fit.diagnostics.bias_ridge = b.ridge_used;
    auto [bc, applied] = debias_local(fit.theta_hat, fit.bias_hat, fit.n, box);
    fit.theta_bc = std::move(bc);
    fit.bias_applied = applied;
  }
  return fit;
}

/// Full-sample M-estimator over all blocks with a shared phi.
template <class T>
struct PooledFit {
  vector_type<T> phi;
  std::vector<vector_type<T>> lambdas;
  FitDiagnostics diagnostics;
  // Inverse of the sandwich covariance of phi_hat (already at the N scale),
  // built from the per-row influence S_phi = psi_phi - Psi_phl Psi_ll^-1 psi_lambda.
  matrix_type<T> precision;
  Index total_n = 0;

  bool converged() const { return diagnostics.converged(); }
};

namespace detail {

// Row-average derivative pieces of every block at the current joint point,
// weighted by n_k / N.
template <class T>
struct JointPieces {
  T objective = T(0);
  vector_type<T> grad_phi;
  std::vector<vector_type<T>> grad_lambda;
  matrix_type<T> a;                   // phi-phi
  std::vector<matrix_type<T>> b;      // phi-lambda_k
  std::vector<matrix_type<T>> d;      // lambda_k-lambda_k
  bool finite = true;

  T gradient_norm() const {
    T s = grad_phi.squaredNorm();
    for (const auto& g : grad_lambda) s += g.squaredNorm();
    return std::sqrt(s);
  }
};

template <class T>
vector_type<T> block_theta(const vector_type<T>& phi, const vector_type<T>& lambda) {
  vector_type<T> th(phi.size() + lambda.size());
  th << phi, lambda;
  return th;
}

template <class T>
JointPieces<T> joint_pieces(const std::vector<DataBlock<T>>& blocks, const BlockModel<T>& model,
                            const vector_type<T>& phi, const std::vector<vector_type<T>>& lambdas, int order,
                            T total) {
  const Index p1 = model.common_dim();
  const Index p2 = model.block_dim();
  JointPieces<T> out;
  out.grad_phi = vector_type<T>::Zero(p1);
  out.a = matrix_type<T>::Zero(p1, p1);
  for (std::size_t k = 0; k < blocks.size(); ++k) {
    const T w = T(blocks[k].n()) / total;
    const auto ev = model.evaluate(blocks[k].rows, block_theta(phi, lambdas[k]), order);
    out.finite = out.finite && ev.finite();
    out.objective += w * ev.objective;
    if (order >= 1) {
      out.grad_phi += w * ev.gradient.head(p1);
      out.grad_lambda.push_back(w * ev.gradient.tail(p2));
    }
    if (order >= 2) {
      out.a += w * ev.hessian.topLeftCorner(p1, p1);
      out.b.push_back(w * ev.hessian.topRightCorner(p1, p2));
      out.d.push_back(w * ev.hessian.bottomRightCorner(p2, p2));
    }
  }
  return out;
}

}  // namespace detail

/// Solves the full-sample estimating equations: sum over all blocks of
/// psi_phi = 0 and, per block, sum of psi_lambda = 0. The joint Hessian over
/// (phi, lambda_1..lambda_K) is arrowhead-shaped, so each Newton system is
/// reduced to the phi block by a Schur complement.
template <class T>
PooledFit<T> fit_pooled(const std::vector<DataBlock<T>>& blocks, const BlockModel<T>& model,
                        const ParameterBox<T>& box, const SolverOptions& opts = {}) {
  opts.validate();
  box.validate();
  require(!blocks.empty(), "fit_pooled: no blocks");
  const Index p1 = model.common_dim();
  const Index p2 = model.block_dim();
  require(box.dim() == model.dim() && box.common_dim() == p1, "fit_pooled: box dimension mismatch");

  PooledFit<T> out;
  T total = T(0);
  vector_type<T> phi = vector_type<T>::Zero(p1);
  std::vector<vector_type<T>> lambdas;
  for (const auto& blk : blocks) {
    require(blk.arity() == model.row_arity(), "fit_pooled: row arity does not match the model");
    const auto local = fit_local(blk, model, box, opts);
    if (!local.usable())
      throw EvaluationError("fit_pooled: start fit failed on block " + std::to_string(blk.id) + " (" +
                            to_string(local.diagnostics.status) + ")");
    phi += T(blk.n()) * local.theta_hat.common();
    lambdas.push_back(local.theta_hat.block());
    total += T(blk.n());
  }
  phi /= total;
  out.total_n = Index(total);

  const auto clamp_phi = [&](const vector_type<T>& v) {
    return vector_type<T>(v.cwiseMax(box.lower.head(p1)).cwiseMin(box.upper.head(p1)));
  };
  const auto clamp_lambda = [&](const vector_type<T>& v) {
    return vector_type<T>(v.cwiseMax(box.lower.tail(p2)).cwiseMin(box.upper.tail(p2)));
  };

  auto& diag = out.diagnostics;
  const T c = T(opts.sufficient_decrease);
  const std::size_t nb = blocks.size();
  std::vector<Eigen::LLT<matrix_type<T>>> d_fact(nb);
  for (int it = 0;; ++it) {
    auto pc = detail::joint_pieces(blocks, model, phi, lambdas, 2, total);
    if (!pc.finite) {
      diag.status = FitStatus::non_finite;
      break;
    }
    diag.gradient_norm = double(pc.gradient_norm());
    if (diag.gradient_norm <= opts.gradient_tolerance) {
      diag.status = FitStatus::converged;
      break;
    }
    if (it >= opts.max_iterations) {
      diag.status = FitStatus::max_iterations;
      break;
    }

    // Schur complement on the phi block.
    matrix_type<T> schur = pc.a;
    vector_type<T> rhs = -pc.grad_phi;
    std::vector<matrix_type<T>> d_inv_bt(nb);
    std::vector<vector_type<T>> d_inv_g(nb);
    bool ok = true;
    for (std::size_t k = 0; k < nb && p2 > 0; ++k) {
      auto dir = detail::newton_direction(pc.d[k], pc.grad_lambda[k]);  // -D^-1 g
      diag.newton_ridge = diag.newton_ridge || dir.ridge;
      if (!dir.ok) {
        ok = false;
        break;
      }
      matrix_type<T> dk = pc.d[k];
      if (dir.ridge) dk.diagonal().array() += ridge_size(pc.d[k]);
      d_fact[k].compute(dk);
      d_inv_bt[k] = d_fact[k].solve(pc.b[k].transpose());
      d_inv_g[k] = -dir.step;
      schur.noalias() -= pc.b[k] * d_inv_bt[k];
      rhs.noalias() += pc.b[k] * d_inv_g[k];
    }
    if (!ok) {
      diag.status = FitStatus::singular_hessian;
      break;
    }
    const auto phi_dir = detail::newton_direction(symmetrized(schur), vector_type<T>(-rhs));
    diag.newton_ridge = diag.newton_ridge || phi_dir.ridge;
    if (!phi_dir.ok) {
      diag.status = FitStatus::singular_hessian;
      break;
    }
    const vector_type<T>& dphi = phi_dir.step;
    std::vector<vector_type<T>> dlam(nb);
    for (std::size_t k = 0; k < nb; ++k)
      dlam[k] = p2 > 0 ? vector_type<T>(-(d_inv_g[k] + d_inv_bt[k] * dphi)) : vector_type<T>(0);

    T t = T(1);
    bool accepted = false;
    vector_type<T> cand_phi;
    std::vector<vector_type<T>> cand_lam(nb);
    for (int b = 0; b < opts.max_backtracks; ++b, t *= T(opts.shrink)) {
      cand_phi = clamp_phi(phi + t * dphi);
      T directional = pc.grad_phi.dot(cand_phi - phi);
      T moved = (cand_phi - phi).cwiseAbs().maxCoeff();
      for (std::size_t k = 0; k < nb; ++k) {
        cand_lam[k] = p2 > 0 ? clamp_lambda(lambdas[k] + t * dlam[k]) : lambdas[k];
        if (p2 > 0) {
          directional += pc.grad_lambda[k].dot(cand_lam[k] - lambdas[k]);
          moved = std::max(moved, (cand_lam[k] - lambdas[k]).cwiseAbs().maxCoeff());
        }
      }
      if (moved == T(0)) break;
      const T f_new = detail::joint_pieces(blocks, model, cand_phi, cand_lam, 0, total).objective;
      if (detail::armijo_ok(f_new, pc.objective, c, directional, detail::rounding_slack(pc.objective))) {
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      diag.status = FitStatus::line_search_failed;
      break;
    }
    phi = cand_phi;
    lambdas = cand_lam;
    diag.iterations = it + 1;
  }

  out.phi = phi;
  out.lambdas = lambdas;
  if (diag.converged()) {
    // Precision of phi_hat from per-row partial scores.
    auto pc = detail::joint_pieces(blocks, model, phi, lambdas, 2, total);
    matrix_type<T> schur = pc.a;
    matrix_type<T> meat = matrix_type<T>::Zero(p1, p1);
    for (std::size_t k = 0; k < nb; ++k) {
      const auto psi = model.scores(blocks[k].rows, detail::block_theta(phi, lambdas[k]));
      matrix_type<T> u = psi.leftCols(p1);
      if (p2 > 0) {
        const auto inv = inverse_with_ridge(pc.d[k]);
        const matrix_type<T> proj = pc.b[k] * inv.inverse;  // Psi_phl Psi_ll^-1
        schur.noalias() -= proj * pc.b[k].transpose();
        u.noalias() -= psi.rightCols(p2) * proj.transpose();
      }
      meat.noalias() += u.transpose() * u;
    }
    // Var(phi_hat) ~ N^-2 S^-1 meat S^-1 with S the mean-scale Schur complement.
    const auto meat_inv = inverse_with_ridge(meat);
    if (meat_inv.ok) out.precision = symmetrized(total * total * schur * meat_inv.inverse * schur);
  }
  return out;
}

}  // namespace wdist
