#include <wdist/random.hpp>
#include <wdist/simnet.hpp>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <thread>

namespace wdist {

const char* to_string(Design d) { return d == Design::eiv ? "eiv" : "logistic"; }

Design parse_design(const std::string& s) {
  if (s == "eiv") return Design::eiv;
  if (s == "logistic") return Design::logistic;
  throw ContractViolation("unknown design '" + s + "' (expected eiv or logistic)");
}

void ExperimentConfig::validate() const {
  if (design == Design::eiv) {
    eiv.validate();
  } else {
    require(K >= 1, "config: K must be >= 1");
    require(homogeneous_lambda || K >= 2, "config: the alternating logistic design needs K >= 2");
    require(N >= K, "config: N must be >= K");
    require(p2 >= 1, "config: p2 must be >= 1");
    require(sigma_x > 0.0, "config: sigma_x must be positive");
  }
  require(B >= 1, "config: B must be >= 1");
  require(threads >= 1, "config: threads must be >= 1");
  require(savgm_r > 0.0 && savgm_r < 1.0, "config: savgm_r must lie in (0, 1)");
  require(box_radius > 0.0, "config: box_radius must be positive");
  require(!estimators.empty(), "config: no estimators selected");
  require(std::set<EstimatorKind>(estimators.begin(), estimators.end()).size() == estimators.size(),
          "config: duplicate estimator");
  for (double a : alphas) require(a > 0.0 && a < 1.0, "config: alpha must lie in (0, 1)");
  require(std::abs(phi_star()(0)) < box_radius, "config: phi* must lie inside the parameter box");
}

Index ExperimentConfig::blocks() const { return design == Design::eiv ? Index(eiv.lambdas.size()) : K; }

Index ExperimentConfig::total_n() const { return design == Design::eiv ? eiv.N : N; }

std::vector<Index> ExperimentConfig::block_sizes() const {
  const Index k = blocks(), n = total_n();
  std::vector<Index> out(std::size_t(k), n / k);
  for (Index i = 0; i < n % k; ++i) ++out[std::size_t(i)];
  return out;
}

vector_type<double> ExperimentConfig::phi_star() const {
  return vector_type<double>::Constant(1, design == Design::eiv ? eiv.phi : phi);
}

std::unique_ptr<BlockModel<double>> ExperimentConfig::model() const {
  if (design == Design::eiv) return std::make_unique<EivModel<double>>(eiv.sigma2);
  return std::make_unique<LogisticModel<double>>(1, p2);
}

ParameterBox<double> ExperimentConfig::box() const {
  const Index dim = design == Design::eiv ? 2 : 1 + p2;
  return ParameterBox<double>::symmetric(dim, 1, box_radius);
}

std::vector<DataBlock<double>> ExperimentConfig::generate(std::uint32_t replicate) const {
  if (design == Design::eiv) return generate_eiv(eiv, block_sizes(), seed, replicate);
  LogisticDesign d;
  d.K = K;
  d.n_per_block = block_sizes();
  d.p2 = p2;
  d.phi = phi;
  d.sigma_x = sigma_x;
  d.homogeneous_lambda = homogeneous_lambda;
  return generate_logistic(d, seed, replicate);
}

const EstimatorMetrics& ExperimentReport::at(EstimatorKind k) const {
  for (const auto& e : estimators)
    if (e.kind == k) return e;
  throw ContractViolation(std::string("report has no estimator ") + to_string(k));
}

namespace {

// Neumaier compensated sum.
class Accumulator {
 public:
  void add(double x) {
    const double t = sum_ + x;
    comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

struct Cell {
  bool ok = false;
  vector_type<double> phi;
  double seconds = 0.0;
  Index bytes = 0;
  bool fallback = false;
  std::vector<char> covered;
  std::vector<double> width;
  std::string error;
};

EstimatorMetrics reduce(EstimatorKind kind, const std::vector<std::vector<Cell>>& cells, std::size_t e,
                        const ExperimentConfig& cfg) {
  const vector_type<double> truth = cfg.phi_star();
  const Index p1 = truth.size();
  const bool regions = kind != EstimatorKind::savgm && !cfg.alphas.empty();
  EstimatorMetrics m;
  m.kind = kind;
  std::vector<Accumulator> mean{std::size_t(p1)};
  Accumulator bytes, seconds;
  for (const auto& row : cells) {
    const Cell& c = row[e];
    if (!c.ok) {
      ++m.failures;
      if (m.first_error.empty()) m.first_error = c.error;
      continue;
    }
    ++m.replicates;
    m.fallbacks += c.fallback ? 1 : 0;
    for (Index j = 0; j < p1; ++j) mean[std::size_t(j)].add(c.phi(j));
    bytes.add(double(c.bytes));
    seconds.add(c.seconds);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (m.replicates == 0) {
    m.bias = m.sd = m.rmse = m.mean_bytes = m.mean_seconds = nan;
    m.mean_phi = vector_type<double>::Constant(p1, nan);
    return m;
  }
  const double r = double(m.replicates);
  m.mean_phi.resize(p1);
  for (Index j = 0; j < p1; ++j) m.mean_phi(j) = mean[std::size_t(j)].value() / r;
  Accumulator dev, err;
  std::vector<Accumulator> hits(cfg.alphas.size()), widths(cfg.alphas.size());
  for (const auto& row : cells) {
    const Cell& c = row[e];
    if (!c.ok) continue;
    dev.add((c.phi - m.mean_phi).squaredNorm());
    err.add((c.phi - truth).squaredNorm());
    if (regions)
      for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
        hits[a].add(c.covered[a] ? 1.0 : 0.0);
        widths[a].add(c.width[a]);
      }
  }
  m.bias = (m.mean_phi - truth).norm();
  m.sd = m.replicates > 1 ? std::sqrt(dev.value() / (r - 1.0)) : 0.0;
  m.rmse = std::sqrt(err.value() / r);
  m.mean_bytes = bytes.value() / r;
  m.mean_seconds = seconds.value() / r;
  if (regions)
    for (std::size_t a = 0; a < cfg.alphas.size(); ++a)
      m.coverage.push_back({cfg.alphas[a], hits[a].value() / r, widths[a].value() / r, m.replicates});
  return m;
}

}  // namespace

ExperimentReport monte_carlo(const ExperimentConfig& cfg) {
  cfg.validate();
  const auto model = cfg.model();
  const auto box = cfg.box();
  const vector_type<double> truth = cfg.phi_star();
  const std::size_t E = cfg.estimators.size();
  std::vector<std::vector<Cell>> cells(std::size_t(cfg.B), std::vector<Cell>(E));

  auto run_one = [&](Index b) {
    auto& row = cells[std::size_t(b)];
    std::vector<DataBlock<double>> blocks;
    try {
      blocks = cfg.generate(std::uint32_t(b));
    } catch (const std::exception& ex) {
      for (auto& c : row) c.error = std::string("generation: ") + ex.what();
      return;
    }
    ProtocolOptions opts;
    opts.savgm_r = cfg.savgm_r;
    opts.inference = !cfg.alphas.empty();
    opts.seed = derive_seed(cfg.seed, std::uint64_t(b));
    opts.bias.center_hessian = cfg.center_hessian;
    for (std::size_t e = 0; e < E; ++e) {
      Cell& c = row[e];
      const EstimatorKind kind = cfg.estimators[e];
      try {
        const auto t0 = std::chrono::steady_clock::now();
        const auto run = run_protocol(kind, blocks, *model, box, opts);
        c.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        c.phi = run.estimate.phi;
        c.bytes = run.total_bytes();
        c.fallback = run.estimate.fallback_used;
        if (kind != EstimatorKind::savgm)
          for (double a : cfg.alphas) {
            const auto cr = confidence_region(run.estimate, a);
            c.covered.push_back(cr.contains(truth) ? 1 : 0);
            c.width.push_back(2.0 * cr.half_width(0));
          }
        c.ok = true;
      } catch (const std::exception& ex) {
        c = Cell{};
        c.error = ex.what();
      }
    }
  };

  const int workers = int(std::min<Index>(cfg.threads, cfg.B));
  if (workers <= 1) {
    for (Index b = 0; b < cfg.B; ++b) run_one(b);
  } else {
    std::atomic<Index> next{0};
    std::vector<std::jthread> pool;
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (Index b = next++; b < cfg.B; b = next++) run_one(b);
      });
  }

  ExperimentReport report;
  report.config = cfg;
  for (std::size_t e = 0; e < E; ++e) {
    report.estimators.push_back(reduce(cfg.estimators[e], cells, e, cfg));
    if (double(report.estimators.back().failures) > 0.01 * double(cfg.B)) report.valid = false;
  }
  return report;
}

}  // namespace wdist
