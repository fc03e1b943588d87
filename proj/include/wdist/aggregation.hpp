#pragma once

#include <wdist/linalg.hpp>
#include <wdist/local.hpp>
#include <wdist/special.hpp>
#include <wdist/types.hpp>

#include <algorithm>
#include <array>
#include <optional>
#include <string>
#include <vector>

namespace wdist {

enum class EstimatorKind { sac, wd, dsac, dwd, savgm, full };

inline const char* to_string(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::sac: return "sac";
    case EstimatorKind::wd: return "wd";
    case EstimatorKind::dsac: return "dsac";
    case EstimatorKind::dwd: return "dwd";
    case EstimatorKind::savgm: return "savgm";
    case EstimatorKind::full: return "full";
  }
  return "unknown";
}

inline EstimatorKind parse_estimator_kind(const std::string& s) {
  for (auto k : {EstimatorKind::sac, EstimatorKind::wd, EstimatorKind::dsac, EstimatorKind::dwd,
                 EstimatorKind::savgm, EstimatorKind::full})
    if (s == to_string(k)) return k;
  throw ContractViolation("unknown estimator '" + s + "'");
}

/// What one worker tells the coordinator about its block. Raw rows never
/// appear here.
template <class T>
struct BlockSummary {
  std::int64_t k = 0;
  Index n = 0;
  vector_type<T> phi;     // phi_hat_k, or phi_hat_k^bc when debiased
  bool debiased = false;
  matrix_type<T> H_inv;   // H_hat_k^-1 (WD family); empty when not sent
  matrix_type<T> H;       // H_hat_k (SaC-family regions); empty when not sent
  bool degraded = false;  // H_inv is not positive definite

  Index common_dim() const { return phi.size(); }
};

/// Builds a summary from a local fit; `send_inverse` and `send_sandwich`
/// select which p1 x p1 matrices go into the payload.
template <class T>
BlockSummary<T> summarize(std::int64_t k, const LocalFit<T>& fit, bool debiased, bool send_inverse,
                          bool send_sandwich) {
  BlockSummary<T> s;
  s.k = k;
  s.n = fit.n;
  s.debiased = debiased;
  s.phi = debiased ? vector_type<T>(fit.theta_bc.common()) : vector_type<T>(fit.theta_hat.common());
  if (send_inverse || send_sandwich) require(fit.has_sandwich(), "summarize: fit carries no sandwich");
  if (send_sandwich) s.H = fit.H;
  if (send_inverse) {
    const auto inv = inverse_with_ridge(fit.H);
    s.H_inv = inv.ok ? symmetrized(inv.inverse) : matrix_type<T>::Zero(fit.H.rows(), fit.H.cols());
    s.degraded = !is_positive_definite(s.H_inv);
  }
  return s;
}

/// Both halves of one block for the debiased weighted estimator.
template <class T>
struct SplitSummary {
  std::int64_t k = 0;
  std::array<BlockSummary<T>, 2> halves;

  Index n() const { return halves[0].n + halves[1].n; }
};

/// Per-block inputs of the subsampled average mixture.
template <class T>
struct SavgmSummary {
  std::int64_t k = 0;
  Index n = 0;
  Index n_sub = 0;
  vector_type<T> theta;      // theta_hat_k on the whole block
  vector_type<T> theta_sub;  // theta_hat_{k,r} on the subsample
};

template <class T>
struct AggregateEstimate {
  vector_type<T> phi;
  EstimatorKind kind = EstimatorKind::sac;
  // Matrix of the quadratic form in the chi-square statistic, i.e. the
  // estimated precision of phi. Empty when the inputs cannot support one.
  matrix_type<T> standardizer;
  bool fallback_used = false;
  Index total_n = 0;
  Index blocks_used = 0;
  Index blocks_excluded = 0;

  bool has_standardizer() const { return standardizer.size() > 0; }
};

template <class T>
struct ConfidenceRegion {
  vector_type<T> center;
  matrix_type<T> shape;
  double threshold = 0.0;
  double alpha = 0.05;

  template <class Derived>
  T statistic(const Eigen::MatrixBase<Derived>& phi) const {
    const vector_type<T> d = center - phi;
    return d.dot(shape * d);
  }

  template <class Derived>
  bool contains(const Eigen::MatrixBase<Derived>& phi) const {
    return statistic(phi) <= T(threshold);
  }

  /// Projection of the ellipsoid onto coordinate i: center_i +- half_width(i).
  /// For p1 = 1 this is exactly the confidence interval.
  T half_width(Index i) const {
    const matrix_type<T> cov = spd_inverse(shape);
    return std::sqrt(T(threshold) * cov(i, i));
  }
};

namespace detail {

template <class S>
std::vector<S> sorted_by_id(std::vector<S> v) {
  std::stable_sort(v.begin(), v.end(), [](const S& a, const S& b) { return a.k < b.k; });
  return v;
}

template <class T>
Index check_summaries(const std::vector<BlockSummary<T>>& summaries, const char* who) {
  require(!summaries.empty(), std::string(who) + ": no summaries");
  const Index p1 = summaries.front().common_dim();
  require(p1 >= 1, std::string(who) + ": empty phi");
  for (const auto& s : summaries) {
    require(s.common_dim() == p1, std::string(who) + ": inconsistent p1 across summaries");
    require(s.n >= 1, std::string(who) + ": block with n < 1");
    require(s.phi.allFinite(), std::string(who) + ": non-finite phi in block " + std::to_string(s.k));
  }
  return p1;
}

// N^2 (sum n_k H_k)^-1, or empty if some summary did not send H_k.
template <class T>
matrix_type<T> sac_standardizer(const std::vector<BlockSummary<T>>& summaries, T total) {
  const Index p1 = summaries.front().common_dim();
  matrix_type<T> sum = matrix_type<T>::Zero(p1, p1);
  for (const auto& s : summaries) {
    if (s.H.rows() != p1 || s.H.cols() != p1) return {};
    sum += T(s.n) * s.H;
  }
  if (!is_positive_definite(sum)) return {};
  return symmetrized(total * total * spd_inverse(sum));
}

template <class T>
AggregateEstimate<T> size_weighted(const std::vector<BlockSummary<T>>& in, EstimatorKind kind, const char* who) {
  const auto summaries = sorted_by_id(in);
  const Index p1 = check_summaries(summaries, who);
  AggregateEstimate<T> out;
  out.kind = kind;
  out.phi = vector_type<T>::Zero(p1);
  T total = T(0);
  for (const auto& s : summaries) {
    out.phi += T(s.n) * s.phi;
    total += T(s.n);
  }
  out.phi /= total;
  out.total_n = Index(total);
  out.blocks_used = Index(summaries.size());
  out.standardizer = sac_standardizer(summaries, total);
  return out;
}

// (sum n H^-1)^-1 sum n H^-1 phi over the non-degraded entries of `weights`,
// with phi taken from `values` (same order, same blocks).
template <class T>
std::optional<std::pair<vector_type<T>, matrix_type<T>>> weighted_fold(
    const std::vector<const BlockSummary<T>*>& weights, const std::vector<const BlockSummary<T>*>& values,
    Index p1) {
  matrix_type<T> s = matrix_type<T>::Zero(p1, p1);
  vector_type<T> rhs = vector_type<T>::Zero(p1);
  bool any = false;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const auto* w = weights[i];
    if (w->degraded || w->H_inv.rows() != p1) continue;
    const matrix_type<T> nw = T(w->n) * w->H_inv;
    s += nw;
    rhs += nw * values[i]->phi;
    any = true;
  }
  if (!any) return std::nullopt;
  s = symmetrized(s);
  Eigen::LLT<matrix_type<T>> llt(s);
  if (llt.info() != Eigen::Success) return std::nullopt;
  return std::make_pair(vector_type<T>(llt.solve(rhs)), s);
}

}  // namespace detail

/// Sample-size weighted average N^-1 sum n_k phi_hat_k.
template <class T>
AggregateEstimate<T> sac(const std::vector<BlockSummary<T>>& summaries) {
  return detail::size_weighted(summaries, EstimatorKind::sac, "sac");
}

/// Same fold as sac over bias-corrected local estimates.
template <class T>
AggregateEstimate<T> dsac(const std::vector<BlockSummary<T>>& summaries) {
  return detail::size_weighted(summaries, EstimatorKind::dsac, "dsac");
}

/// Matrix weights W_k = (sum n_j H_j^-1)^-1 n_k H_k^-1 over non-degraded
/// summaries (degraded ones get an empty matrix), in id order.
template <class T>
std::vector<matrix_type<T>> wd_weights(const std::vector<BlockSummary<T>>& in) {
  const auto summaries = detail::sorted_by_id(in);
  const Index p1 = detail::check_summaries(summaries, "wd_weights");
  matrix_type<T> s = matrix_type<T>::Zero(p1, p1);
  for (const auto& b : summaries)
    if (!b.degraded) s += T(b.n) * b.H_inv;
  const matrix_type<T> s_inv = spd_inverse(s);
  std::vector<matrix_type<T>> w;
  for (const auto& b : summaries) w.push_back(b.degraded ? matrix_type<T>() : matrix_type<T>(s_inv * T(b.n) * b.H_inv));
  return w;
}

/// Weighted distributed estimator with the Phi-box fallback to SaC.
template <class T>
AggregateEstimate<T> wd(const std::vector<BlockSummary<T>>& in, const ParameterBox<T>& box) {
  const auto summaries = detail::sorted_by_id(in);
  const Index p1 = detail::check_summaries(summaries, "wd");
  require(box.common_dim() == p1, "wd: box common dimension does not match p1");
  std::vector<const BlockSummary<T>*> ptrs;
  Index excluded = 0;
  for (const auto& s : summaries) {
    if (s.degraded || s.H_inv.rows() != p1) ++excluded;
    ptrs.push_back(&s);
  }
  if (excluded == Index(summaries.size())) throw AggregationError("wd: every block summary is degraded");
  const auto fold = detail::weighted_fold(ptrs, ptrs, p1);
  if (!fold) throw AggregationError("wd: weight matrix is not positive definite");

  AggregateEstimate<T> out;
  out.kind = EstimatorKind::wd;
  out.standardizer = fold->second;
  out.blocks_used = Index(summaries.size()) - excluded;
  out.blocks_excluded = excluded;
  for (const auto& s : summaries) out.total_n += s.n;
  if (box.contains_common(fold->first)) {
    out.phi = fold->first;
  } else {
    out.phi = sac(summaries).phi;
    out.fallback_used = true;
  }
  return out;
}

/// Debiased weighted distributed estimator. For split s the weights come
/// from half s and the debiased estimates from the other half; the two
/// cross-fitted combinations are averaged.
template <class T>
AggregateEstimate<T> dwd(const std::vector<SplitSummary<T>>& in, const ParameterBox<T>& box) {
  const auto splits = detail::sorted_by_id(in);
  require(!splits.empty(), "dwd: no summaries");
  const Index p1 = splits.front().halves[0].common_dim();
  require(box.common_dim() == p1, "dwd: box common dimension does not match p1");

  AggregateEstimate<T> out;
  out.kind = EstimatorKind::dwd;
  out.phi = vector_type<T>::Zero(p1);
  out.standardizer = matrix_type<T>::Zero(p1, p1);
  Index excluded = 0;
  for (const auto& sp : splits) {
    for (const auto& h : sp.halves) {
      require(h.common_dim() == p1, "dwd: inconsistent p1 across summaries");
      require(h.n >= 1 && h.phi.allFinite(), "dwd: bad half summary in block " + std::to_string(sp.k));
    }
    out.total_n += sp.n();
  }

  for (int s = 0; s < 2; ++s) {
    const int other = 1 - s;
    std::vector<const BlockSummary<T>*> weights, values;
    vector_type<T> fallback = vector_type<T>::Zero(p1);
    T fallback_n = T(0);
    Index bad = 0;
    for (const auto& sp : splits) {
      weights.push_back(&sp.halves[s]);
      values.push_back(&sp.halves[other]);
      fallback += T(sp.halves[other].n) * sp.halves[other].phi;
      fallback_n += T(sp.halves[other].n);
      if (sp.halves[s].degraded || sp.halves[s].H_inv.rows() != p1) ++bad;
    }
    if (bad == Index(splits.size())) throw AggregationError("dwd: every half summary of split is degraded");
    const auto fold = detail::weighted_fold(weights, values, p1);
    if (!fold) throw AggregationError("dwd: weight matrix is not positive definite");
    excluded += bad;
    out.standardizer += fold->second;
    if (box.contains_common(fold->first)) {
      out.phi += T(0.5) * fold->first;
    } else {
      out.phi += T(0.5) * fallback / fallback_n;
      out.fallback_used = true;
    }
  }
  out.standardizer = symmetrized(out.standardizer);
  out.blocks_used = Index(splits.size());
  out.blocks_excluded = excluded;
  return out;
}

/// Subsampled average mixture: per block (theta - r theta_r) / (1 - r),
/// common part averaged with sample-size weights.
template <class T>
AggregateEstimate<T> savgm(const std::vector<SavgmSummary<T>>& in, double r, Index common_dim) {
  require(r > 0.0 && r < 1.0, "savgm: r must lie in (0, 1)");
  require(common_dim >= 1, "savgm: p1 must be >= 1");
  const auto blocks = detail::sorted_by_id(in);
  require(!blocks.empty(), "savgm: no summaries");
  AggregateEstimate<T> out;
  out.kind = EstimatorKind::savgm;
  out.phi = vector_type<T>::Zero(common_dim);
  T total = T(0);
  const T rr = T(r);
  for (const auto& b : blocks) {
    const Index p = b.theta.size();
    require(p >= common_dim && b.theta_sub.size() == p, "savgm: inconsistent parameter sizes");
    if (b.n_sub < p)
      throw ContractViolation("savgm: block " + std::to_string(b.k) + " subsample has " + std::to_string(b.n_sub) +
                              " rows, fewer than p = " + std::to_string(p));
    const vector_type<T> bar = (b.theta - rr * b.theta_sub) / (T(1) - rr);
    out.phi += T(b.n) * bar.head(common_dim);
    total += T(b.n);
  }
  out.phi /= total;
  out.total_n = Index(total);
  out.blocks_used = Index(blocks.size());
  return out;
}

/// Full-sample benchmark wrapped as an aggregate estimate.
template <class T>
AggregateEstimate<T> full_estimate(const PooledFit<T>& fit, Index blocks) {
  if (!fit.converged()) throw AggregationError("full: pooled fit did not converge");
  AggregateEstimate<T> out;
  out.kind = EstimatorKind::full;
  out.phi = fit.phi;
  out.standardizer = fit.precision;
  out.total_n = fit.total_n;
  out.blocks_used = blocks;
  return out;
}

/// Chi-square ellipsoid {phi : (center - phi)' S (center - phi) <= chi2_{p1, alpha}}.
template <class T>
ConfidenceRegion<T> confidence_region(const AggregateEstimate<T>& est, double alpha) {
  require(alpha > 0.0 && alpha < 1.0, "confidence_region: alpha must lie in (0, 1)");
  if (!est.has_standardizer())
    throw AggregationError(std::string("confidence_region: ") + to_string(est.kind) + " carries no standardizer");
  if (!is_positive_definite(est.standardizer))
    throw AggregationError("confidence_region: standardizer is not positive definite");
  ConfidenceRegion<T> cr;
  cr.center = est.phi;
  cr.shape = symmetrized(est.standardizer);
  cr.threshold = chisq_quantile(est.phi.size(), alpha);
  cr.alpha = alpha;
  return cr;
}

}  // namespace wdist
