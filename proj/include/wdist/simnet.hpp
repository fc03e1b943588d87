#pragma once

#include <wdist/aggregation.hpp>
#include <wdist/asymptotics.hpp>
#include <wdist/local.hpp>
#include <wdist/models.hpp>
#include <wdist/types.hpp>

#include <cstdint>
#include <memory>
#include <string>
#include <variant>
#include <vector>

namespace wdist {

// ---- data generators --------------------------------------------------------
//
// Every variate is addressed by (seed, replicate, block id, row), so a block
// is the same whichever thread produces it and in whatever order.

/// Errors-in-variables rows (X, Y): Z ~ N(mu_z, var_z), X = Z + e,
/// Y = phi + lambda_k Z + f, (e, f) ~ N(0, sigma2 I). Block k uses
/// scn.lambdas[k] and n_per_block[k] rows.
std::vector<DataBlock<double>> generate_eiv(const EivScenario& scn, const std::vector<Index>& n_per_block,
                                            std::uint64_t seed, std::uint32_t replicate = 0);

/// lambda_{k,j} = (-1)^j 10 (1 - 2(k-1)/(K-1)), k = 1..K, j = 1..p2.
vector_type<double> logistic_lambda(Index K, Index k, Index p2);

struct LogisticDesign {
  Index K = 10;
  std::vector<Index> n_per_block;  // size K
  Index p2 = 4;
  double phi = 1.0;
  double sigma_x = 0.75;
  // When set, every block uses lambda_{k,j} = homogeneous_lambda instead of
  // the alternating design (and K = 1 is allowed).
  std::optional<double> homogeneous_lambda;

  void validate() const;
  ParameterVector<double> theta(Index k) const;  // k is 0-based
};

/// Rows (x_1..x_p, y): x ~ N(0, sigma_x^2 I_p), y | x ~ Bernoulli(logit^-1(x' theta_k)).
std::vector<DataBlock<double>> generate_logistic(const LogisticDesign& design, std::uint64_t seed,
                                                 std::uint32_t replicate = 0);

// ---- one-round protocol -----------------------------------------------------

using Payload = std::variant<BlockSummary<double>, SplitSummary<double>, SavgmSummary<double>>;

/// Worker -> coordinator message. The payload types hold summaries only.
struct ProtocolMessage {
  std::int64_t block = 0;
  EstimatorKind kind = EstimatorKind::sac;
  Payload payload;

  Index scalar_count() const;
  Index byte_count() const { return 8 * scalar_count(); }
};

/// A worker could not produce its summary.
class WorkerFailure : public EvaluationError {
 public:
  WorkerFailure(std::int64_t block, const std::string& what)
      : EvaluationError("block " + std::to_string(block) + ": " + what), block_(block) {}
  std::int64_t block() const { return block_; }

 private:
  std::int64_t block_;
};

struct ProtocolOptions {
  SolverOptions solver;
  BiasOptions bias;
  double savgm_r = 0.05;
  // SaC-family payloads also carry H_hat_k so that the coordinator can build
  // a confidence region.
  bool inference = false;
  // Keys the half splits and SAVGM subsamples.
  std::uint64_t seed = 0;
};

struct ProtocolRun {
  AggregateEstimate<double> estimate;
  std::vector<ProtocolMessage> messages;

  Index total_bytes() const;
};

/// Worker side: fit -> [split] -> [debias] -> summarize for one block.
ProtocolMessage worker_message(EstimatorKind kind, const DataBlock<double>& block, const BlockModel<double>& model,
                               const ParameterBox<double>& box, const ProtocolOptions& opts);

/// Coordinator side: folds the messages of one estimator kind.
AggregateEstimate<double> coordinate(EstimatorKind kind, const std::vector<ProtocolMessage>& messages,
                                     const ParameterBox<double>& box, const ProtocolOptions& opts);

/// Runs workers then coordinator. The full-sample estimator is a pooled
/// benchmark outside the protocol and logs no messages.
ProtocolRun run_protocol(EstimatorKind kind, const std::vector<DataBlock<double>>& blocks,
                         const BlockModel<double>& model, const ParameterBox<double>& box,
                         const ProtocolOptions& opts = {});

// ---- Monte Carlo engine -----------------------------------------------------

enum class Design { eiv, logistic };
const char* to_string(Design d);
Design parse_design(const std::string& s);

struct ExperimentConfig {
  Design design = Design::eiv;
  // eiv: scenario (phi, lambdas, mu_z, var_z, sigma2, N); K = lambdas.size()
  EivScenario eiv = eiv_scenario(3, 0.25, 2.25);
  // logistic
  Index K = 10;
  Index N = 200000;
  Index p2 = 4;
  double phi = 1.0;
  double sigma_x = 0.75;
  std::optional<double> homogeneous_lambda;

  std::vector<EstimatorKind> estimators{EstimatorKind::sac, EstimatorKind::wd};
  Index B = 200;
  std::vector<double> alphas{0.05};
  std::uint64_t seed = 1;
  int threads = 1;
  double savgm_r = 0.05;
  double box_radius = 50.0;
  bool center_hessian = false;

  void validate() const;
  Index blocks() const;
  Index total_n() const;
  std::vector<Index> block_sizes() const;  // N split as evenly as possible
  vector_type<double> phi_star() const;
  std::unique_ptr<BlockModel<double>> model() const;
  ParameterBox<double> box() const;
  std::vector<DataBlock<double>> generate(std::uint32_t replicate) const;
};

struct CoverageMetrics {
  double alpha = 0.05;
  double coverage = 0.0;    // fraction of regions containing phi*
  double mean_width = 0.0;  // mean of 2 * half_width(0)
  Index regions = 0;
};

struct EstimatorMetrics {
  EstimatorKind kind = EstimatorKind::sac;
  Index replicates = 0;  // successful replicates
  Index failures = 0;
  Index fallbacks = 0;
  double bias = 0.0;  // |mean(phi_hat) - phi*|, Euclidean
  double sd = 0.0;    // sqrt(trace of the sample covariance, divisor B - 1)
  double rmse = 0.0;  // sqrt(mean |phi_hat - phi*|^2)
  vector_type<double> mean_phi;
  std::vector<CoverageMetrics> coverage;  // empty when the estimator has no region
  double mean_bytes = 0.0;
  double mean_seconds = 0.0;  // estimator compute only; not part of the serialized report
  std::string first_error;
};

struct ExperimentReport {
  ExperimentConfig config;
  std::vector<EstimatorMetrics> estimators;
  bool valid = true;  // every estimator failed on at most 1% of replicates

  const EstimatorMetrics& at(EstimatorKind k) const;
};

/// B replicates over a pool of cfg.threads workers. Replicate b draws its
/// data from (seed, b) and its splits from derive_seed(seed, b); metrics are
/// reduced in replicate order, so the report does not depend on threads.
ExperimentReport monte_carlo(const ExperimentConfig& cfg);

}  // namespace wdist
