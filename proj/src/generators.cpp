#include <wdist/random.hpp>
#include <wdist/simnet.hpp>

#include <cmath>

namespace wdist {

std::vector<DataBlock<double>> generate_eiv(const EivScenario& scn, const std::vector<Index>& n_per_block,
                                            std::uint64_t seed, std::uint32_t replicate) {
  scn.validate();
  require(n_per_block.size() == scn.lambdas.size(), "generate_eiv: one size per block is required");
  const double sz = std::sqrt(scn.var_z);
  const double se = std::sqrt(scn.sigma2);
  std::vector<DataBlock<double>> out(n_per_block.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    const Index n = n_per_block[k];
    require(n >= 1, "generate_eiv: block sizes must be positive");
    const double lam = scn.lambdas[k];
    auto& b = out[k];
    b.id = std::int64_t(k);
    b.rows.resize(n, 2);
    for (Index i = 0; i < n; ++i) {
      CounterStream s(seed, replicate, std::uint32_t(k), std::uint32_t(i));
      const double z = scn.mu_z + sz * s.normal();
      b.rows(i, 0) = z + se * s.normal();
      b.rows(i, 1) = scn.phi + lam * z + se * s.normal();
    }
  }
  return out;
}

vector_type<double> logistic_lambda(Index K, Index k, Index p2) {
  require(K >= 2, "logistic_lambda: the design needs K >= 2");
  require(k >= 1 && k <= K, "logistic_lambda: k must lie in 1..K");
  require(p2 >= 1, "logistic_lambda: p2 must be >= 1");
  const double level = 10.0 * (1.0 - 2.0 * double(k - 1) / double(K - 1));
  vector_type<double> lam(p2);
  for (Index j = 1; j <= p2; ++j) lam(j - 1) = (j % 2 == 0 ? 1.0 : -1.0) * level;
  return lam;
}

void LogisticDesign::validate() const {
  require(K >= 1, "LogisticDesign: K must be >= 1");
  require(homogeneous_lambda || K >= 2, "LogisticDesign: the alternating design is undefined for K = 1");
  require(Index(n_per_block.size()) == K, "LogisticDesign: one size per block is required");
  for (Index n : n_per_block) require(n >= 1, "LogisticDesign: block sizes must be positive");
  require(p2 >= 1, "LogisticDesign: p2 must be >= 1");
  require(sigma_x > 0.0, "LogisticDesign: sigma_x must be positive");
  require(std::isfinite(phi), "LogisticDesign: phi must be finite");
}

ParameterVector<double> LogisticDesign::theta(Index k) const {
  const vector_type<double> common = vector_type<double>::Constant(1, phi);
  if (homogeneous_lambda) return {common, vector_type<double>::Constant(p2, *homogeneous_lambda)};
  return {common, logistic_lambda(K, k + 1, p2)};
}

std::vector<DataBlock<double>> generate_logistic(const LogisticDesign& design, std::uint64_t seed,
                                                 std::uint32_t replicate) {
  design.validate();
  const Index p = 1 + design.p2;
  std::vector<DataBlock<double>> out(std::size_t(design.K));
  for (Index k = 0; k < design.K; ++k) {
    const vector_type<double> theta = design.theta(k).flat();
    auto& b = out[std::size_t(k)];
    b.id = k;
    b.rows.resize(design.n_per_block[std::size_t(k)], p + 1);
    for (Index i = 0; i < b.n(); ++i) {
      CounterStream s(seed, replicate, std::uint32_t(k), std::uint32_t(i));
      double z = 0.0;
      for (Index j = 0; j < p; ++j) {
        b.rows(i, j) = design.sigma_x * s.normal();
        z += b.rows(i, j) * theta(j);
      }
      b.rows(i, p) = s.uniform() < LogisticModel<double>::sigmoid(z) ? 1.0 : 0.0;
    }
  }
  return out;
}

}  // namespace wdist
