#include <wdist/random.hpp>
#include <wdist/simnet.hpp>

#include <cmath>
#include <type_traits>

namespace wdist {

namespace {

Index summary_scalars(const BlockSummary<double>& s) { return s.phi.size() + s.H_inv.size() + s.H.size(); }

LocalFit<double> checked_fit(const DataBlock<double>& block, const BlockModel<double>& model,
                             const ParameterBox<double>& box, const ProtocolOptions& opts, const LocalWork& work) {
  auto fit = fit_block(block, model, box, opts.solver, work);
  if (!fit.usable()) throw WorkerFailure(block.id, std::string("local fit failed: ") + to_string(fit.diagnostics.status));
  return fit;
}

// Subsample of floor(r n) rows drawn without replacement.
DataBlock<double> subsample(const DataBlock<double>& block, double r, std::uint64_t seed) {
  const Index m = Index(std::floor(r * double(block.n())));
  const auto perm = seeded_permutation(block.n(), derive_seed(seed, 0x5A5A), std::uint32_t(block.id),
                                       std::uint32_t(std::uint64_t(block.id) >> 32));
  DataBlock<double> out;
  out.id = block.id;
  out.rows.resize(m, block.arity());
  for (Index i = 0; i < m; ++i) out.rows.row(i) = block.rows.row(perm[std::size_t(i)]);
  return out;
}

template <class S>
std::vector<S> payloads(const std::vector<ProtocolMessage>& messages, EstimatorKind kind) {
  std::vector<S> out;
  out.reserve(messages.size());
  for (const auto& m : messages) {
    require(m.kind == kind, "coordinate: message kind does not match the estimator");
    const S* p = std::get_if<S>(&m.payload);
    require(p != nullptr, "coordinate: payload shape does not match the estimator");
    out.push_back(*p);
  }
  return out;
}

}  // namespace

Index ProtocolMessage::scalar_count() const {
  return std::visit(
      [](const auto& p) -> Index {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, BlockSummary<double>>)
          return summary_scalars(p);
        else if constexpr (std::is_same_v<P, SplitSummary<double>>)
          return summary_scalars(p.halves[0]) + summary_scalars(p.halves[1]);
        else
          return p.theta.size() + p.theta_sub.size();
      },
      payload);
}

Index ProtocolRun::total_bytes() const {
  Index total = 0;
  for (const auto& m : messages) total += m.byte_count();
  return total;
}

ProtocolMessage worker_message(EstimatorKind kind, const DataBlock<double>& block, const BlockModel<double>& model,
                               const ParameterBox<double>& box, const ProtocolOptions& opts) {
  require(block.arity() == model.row_arity(), "worker: block arity does not match the model");
  ProtocolMessage msg;
  msg.block = block.id;
  msg.kind = kind;
  LocalWork work;
  work.bias_options = opts.bias;
  switch (kind) {
    case EstimatorKind::sac:
    case EstimatorKind::dsac: {
      const bool debias = kind == EstimatorKind::dsac;
      work.sandwich = opts.inference;
      work.bias = debias;
      const auto fit = checked_fit(block, model, box, opts, work);
      msg.payload = summarize(block.id, fit, debias, false, opts.inference);
      break;
    }
    case EstimatorKind::wd: {
      const auto fit = checked_fit(block, model, box, opts, work);
      msg.payload = summarize(block.id, fit, false, true, false);
      break;
    }
    case EstimatorKind::dwd: {
      work.bias = true;
      const auto halves = split_halves(block, opts.seed, model.dim());
      SplitSummary<double> sp;
      sp.k = block.id;
      sp.halves[0] = summarize(block.id, checked_fit(halves.first, model, box, opts, work), true, true, false);
      sp.halves[1] = summarize(block.id, checked_fit(halves.second, model, box, opts, work), true, true, false);
      msg.payload = std::move(sp);
      break;
    }
    case EstimatorKind::savgm: {
      work.sandwich = false;
      const auto sub = subsample(block, opts.savgm_r, opts.seed);
      if (sub.n() < model.dim())
        throw WorkerFailure(block.id, "subsample of " + std::to_string(sub.n()) + " rows is smaller than p");
      SavgmSummary<double> s;
      s.k = block.id;
      s.n = block.n();
      s.n_sub = sub.n();
      s.theta = checked_fit(block, model, box, opts, work).theta_hat.flat();
      s.theta_sub = checked_fit(sub, model, box, opts, work).theta_hat.flat();
      msg.payload = std::move(s);
      break;
    }
    case EstimatorKind::full:
      throw ContractViolation("worker: the full-sample estimator has no worker step");
  }
  return msg;
}

AggregateEstimate<double> coordinate(EstimatorKind kind, const std::vector<ProtocolMessage>& messages,
                                     const ParameterBox<double>& box, const ProtocolOptions& opts) {
  require(!messages.empty(), "coordinate: no messages");
  switch (kind) {
    case EstimatorKind::sac: return sac(payloads<BlockSummary<double>>(messages, kind));
    case EstimatorKind::dsac: return dsac(payloads<BlockSummary<double>>(messages, kind));
    case EstimatorKind::wd: return wd(payloads<BlockSummary<double>>(messages, kind), box);
    case EstimatorKind::dwd: return dwd(payloads<SplitSummary<double>>(messages, kind), box);
    case EstimatorKind::savgm:
      return savgm(payloads<SavgmSummary<double>>(messages, kind), opts.savgm_r, box.common_dim());
    case EstimatorKind::full: break;
  }
  throw ContractViolation("coordinate: the full-sample estimator has no coordinator step");
}

ProtocolRun run_protocol(EstimatorKind kind, const std::vector<DataBlock<double>>& blocks,
                         const BlockModel<double>& model, const ParameterBox<double>& box,
                         const ProtocolOptions& opts) {
  require(!blocks.empty(), "run_protocol: no blocks");
  ProtocolRun run;
  if (kind == EstimatorKind::full) {
    const auto pooled = fit_pooled(blocks, model, box, opts.solver);
    if (!pooled.converged())
      throw EvaluationError(std::string("full: pooled fit failed: ") + to_string(pooled.diagnostics.status));
    run.estimate = full_estimate(pooled, Index(blocks.size()));
    return run;
  }
  run.messages.reserve(blocks.size());
  for (const auto& b : blocks) run.messages.push_back(worker_message(kind, b, model, box, opts));
  run.estimate = coordinate(kind, run.messages, box, opts);
  return run;
}

}  // namespace wdist
