#include <doctest.h>

#include <wdist/model.hpp>
#include <wdist/models.hpp>
#include <wdist/random.hpp>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <random>
#include <thread>
#include <vector>

using namespace wdist;
using Vec = vector_type<double>;
using Mat = matrix_type<double>;

namespace {

Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

double scaled_error(const Mat& approx, const Mat& exact) {
  return (approx - exact).cwiseAbs().maxCoeff() / std::max(1.0, exact.cwiseAbs().maxCoeff());
}

double step(double t) { return 1e-5 * (1.0 + std::abs(t)); }

// Central differences, written independently of BlockModel::eval_third.
Vec fd_score(const BlockModel<double>& m, const Vec& row, const Vec& th) {
  Vec g(th.size());
  for (Index j = 0; j < th.size(); ++j) {
    Vec a = th, b = th;
    const double h = step(th(j));
    a(j) += h;
    b(j) -= h;
    g(j) = (objective(m, row, a) - objective(m, row, b)) / (2 * h);
  }
  return g;
}

Mat fd_hessian(const BlockModel<double>& m, const Vec& row, const Vec& th) {
  Mat h(th.size(), th.size());
  for (Index j = 0; j < th.size(); ++j) {
    Vec a = th, b = th;
    const double s = step(th(j));
    a(j) += s;
    b(j) -= s;
    h.col(j) = (score(m, row, a) - score(m, row, b)) / (2 * s);
  }
  return h;
}

Mat fd_third(const BlockModel<double>& m, const Vec& row, const Vec& th) {
  const Index p = th.size();
  Mat t(p, p * p);
  for (Index j = 0; j < p; ++j) {
    Vec a = th, b = th;
    const double s = step(th(j));
    a(j) += s;
    b(j) -= s;
    t.middleCols(j * p, p) = (hessian(m, row, a) - hessian(m, row, b)) / (2 * s);
  }
  return t;
}

struct Case {
  std::shared_ptr<BlockModel<double>> model;
  std::function<Vec(std::mt19937_64&)> row;
  std::function<Vec(std::mt19937_64&)> theta;
};

std::vector<Case> builtin_cases() {
  std::vector<Case> cases;
  auto logistic = std::make_shared<LogisticModel<double>>(1, 2);
  cases.push_back({logistic,
                   [](std::mt19937_64& g) {
                     std::normal_distribution<double> n(0, 1);
                     std::bernoulli_distribution b(0.5);
                     return vec({n(g), n(g), n(g), b(g) ? 1.0 : 0.0});
                   },
                   [](std::mt19937_64& g) {
                     std::uniform_real_distribution<double> u(-3, 3);
                     return vec({u(g), u(g), u(g)});
                   }});
  auto eiv = std::make_shared<EivModel<double>>(1.5);
  cases.push_back({eiv,
                   [](std::mt19937_64& g) {
                     std::normal_distribution<double> n(0, 2);
                     return vec({n(g), n(g)});
                   },
                   [](std::mt19937_64& g) {
                     std::uniform_real_distribution<double> u(-3, 3);
                     return vec({u(g), u(g)});
                   }});
  auto quad = std::make_shared<QuadraticModel<double>>(2, 1);
  cases.push_back({quad,
                   [](std::mt19937_64& g) {
                     std::normal_distribution<double> n(0, 1);
                     return vec({n(g), n(g), n(g)});
                   },
                   [](std::mt19937_64& g) {
                     std::uniform_real_distribution<double> u(-3, 3);
                     return vec({u(g), u(g), u(g)});
                   }});
  auto expo = std::make_shared<ExponentialModel<double>>();
  cases.push_back({expo,
                   [](std::mt19937_64& g) {
                     std::exponential_distribution<double> e(1.0);
                     return vec({e(g)});
                   },
                   [](std::mt19937_64& g) {
                     std::uniform_real_distribution<double> u(0.2, 5);
                     return vec({u(g)});
                   }});
  return cases;
}

// Logistic model without third-derivative override, to exercise the
// finite-difference fallback of the base class.
class LogisticNoThird final : public BlockModel<double> {
 public:
  LogisticNoThird() : BlockModel<double>(1, 1, 3), inner_(1, 1) {}
  std::string name() const override { return "logistic-fd"; }
  double eval_objective(RowRef r, ThetaRef t) const override { return inner_.eval_objective(r, t); }
  void eval_score(RowRef r, ThetaRef t, Eigen::Ref<Vector> o) const override { inner_.eval_score(r, t, o); }
  void eval_hessian(RowRef r, ThetaRef t, Eigen::Ref<Matrix> o) const override { inner_.eval_hessian(r, t, o); }

 private:
  LogisticModel<double> inner_;
};

}  // namespace

TEST_CASE("parameter vector keeps the common part first") {
  ParameterVector<double> th(vec({1, 2}), vec({3}));
  CHECK(th.size() == 3);
  CHECK(th.common_dim() == 2);
  CHECK(th.block_dim() == 1);
  CHECK(th.flat()(0) == 1);
  CHECK(th.common()(1) == 2);
  CHECK(th.block()(0) == 3);
  ParameterVector<double> only_common(vec({4}), 1);
  CHECK(only_common.block_dim() == 0);
  CHECK_THROWS_AS(ParameterVector<double>(vec({1}), 2), ContractViolation);
  CHECK_THROWS_AS(ParameterVector<double>(vec({1}), 0), ContractViolation);
}

TEST_CASE("parameter box") {
  auto box = ParameterBox<double>::symmetric(3, 1, 2.0);
  CHECK(box.contains(vec({0, 2, -2})));
  CHECK_FALSE(box.contains(vec({0, 2.1, 0})));
  CHECK(box.contains_common(vec({1.5})));
  CHECK(box.clamp(vec({5, -5, 0})).isApprox(vec({2, -2, 0})));
  CHECK_THROWS_AS(ParameterBox<double>::from_bounds(vec({0, 0}), vec({1, 0}), 1), ContractViolation);
  ParameterBox<double> bad = box;
  bad.common_upper(0) = 3.0;
  CHECK_THROWS_AS(bad.validate(), ContractViolation);
}

TEST_CASE("data block validation") {
  DataBlock<double> b;
  CHECK_THROWS_AS(b.validate(), ContractViolation);
  b.rows = row_matrix_type<double>::Ones(2, 2);
  b.validate();
  b.rows(1, 1) = std::nan("");
  CHECK_THROWS_AS(b.validate(), ContractViolation);
}

TEST_CASE("objective examples") {
  LogisticModel<double> logit(1, 0);
  CHECK(objective(logit, vec({0, 1}), vec({0})) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(objective(logit, vec({0.5, 0}), vec({4.0})) == doctest::Approx(2.1269280110429727).epsilon(1e-12));

  EivModel<double> eiv(1.0);
  CHECK(objective(eiv, vec({0, 1}), vec({1, 1})) == 0.0);
  // (lambda X - (Y - phi))^2 / (2 sigma2 (1 + lambda^2)) at a nonzero residual.
  CHECK(objective(eiv, vec({2, 0.5}), vec({1, 0.5})) == doctest::Approx(1.5 * 1.5 / (2 * 1.25)));
}

TEST_CASE("score, hessian and third-derivative examples") {
  QuadraticModel<double> quad(1, 1);
  const Vec x = vec({0.3, -1.2});
  const Vec th = vec({1.0, 2.0});
  CHECK(score(quad, x, th).isApprox(th - x));
  CHECK(hessian(quad, x, th).isApprox(Mat::Identity(2, 2)));
  CHECK(third_derivative(quad, x, th).isZero());

  LogisticModel<double> logit(1, 1);
  const Vec row = vec({0.7, -0.4, 1.0});
  const Vec s0 = score(logit, row, vec({0, 0}));
  CHECK(s0(0) == doctest::Approx((0.5 - 1.0) * 0.7));
  CHECK(s0(1) == doctest::Approx((0.5 - 1.0) * -0.4));
  const Vec t = vec({0.3, -0.8});
  const double z = 0.7 * 0.3 + 0.4 * 0.8;
  const double mu = 1.0 / (1.0 + std::exp(-z));
  const Vec xv = vec({0.7, -0.4});
  CHECK(hessian(logit, row, t).isApprox(mu * (1 - mu) * xv * xv.transpose(), 1e-12));
  Eigen::SelfAdjointEigenSolver<Mat> es(hessian(logit, row, t));
  CHECK(es.eigenvalues()(0) == doctest::Approx(0.0).epsilon(1e-14));  // rank one

  EivModel<double> eiv(2.0);
  for (double lam : {-1.5, 0.0, 0.4, 3.0}) {
    const Mat h = hessian(eiv, vec({0.3, 1.1}), vec({0.2, lam}));
    CHECK(h(0, 0) == doctest::Approx(1.0 / (2.0 * (1 + lam * lam))));
  }

  ExponentialModel<double> expo;
  for (double lam : {0.5, 1.0, 2.5}) CHECK(third_derivative(expo, vec({1.3}), vec({lam}))(0, 0) == doctest::Approx(-2.0 / (lam * lam * lam)));
}

TEST_CASE("contract and domain errors") {
  LogisticModel<double> logit(1, 1);
  CHECK_THROWS_AS(objective(logit, vec({1, 2}), vec({0, 0})), ContractViolation);
  CHECK_THROWS_AS(score(logit, vec({1, 2, 1}), vec({0})), ContractViolation);
  ExponentialModel<double> expo;
  CHECK_THROWS_AS(objective(expo, vec({1.0}), vec({-1.0})), EvaluationError);
  CHECK_THROWS_AS(objective(expo, vec({1.0}), vec({0.0})), EvaluationError);
}

TEST_CASE("derivative chain consistency for every built-in model") {
  std::mt19937_64 gen(20240611);
  for (const auto& c : builtin_cases()) {
    CAPTURE(c.model->name());
    double worst_g = 0, worst_h = 0, worst_t = 0, worst_sym = 0;
    for (int draw = 0; draw < 100; ++draw) {
      const Vec row = c.row(gen);
      const Vec th = c.theta(gen);
      worst_g = std::max(worst_g, scaled_error(fd_score(*c.model, row, th), score(*c.model, row, th)));
      const Mat h = hessian(*c.model, row, th);
      worst_h = std::max(worst_h, scaled_error(fd_hessian(*c.model, row, th), h));
      worst_t = std::max(worst_t, scaled_error(fd_third(*c.model, row, th), third_derivative(*c.model, row, th)));
      worst_sym = std::max(worst_sym, (h - h.transpose()).cwiseAbs().maxCoeff());
    }
    CHECK(worst_g <= 1e-5);
    CHECK(worst_h <= 1e-5);
    CHECK(worst_t <= 1e-5);
    CHECK(worst_sym <= 1e-12);
  }
}

TEST_CASE("third derivative contracts with u (x) u to the second directional derivative of the score") {
  std::mt19937_64 gen(99);
  std::normal_distribution<double> n(0, 1);
  for (const auto& c : builtin_cases()) {
    CAPTURE(c.model->name());
    for (int draw = 0; draw < 50; ++draw) {
      const Vec row = c.row(gen);
      const Vec th = c.theta(gen);
      Vec u(th.size());
      for (Index j = 0; j < u.size(); ++j) u(j) = n(gen);
      u *= 0.5 / u.norm();
      const double h = 1e-4;
      const Vec second =
          (score(*c.model, row, Vec(th + h * u)) - 2 * score(*c.model, row, th) + score(*c.model, row, Vec(th - h * u))) /
          (h * h);
      const Vec contracted = third_derivative(*c.model, row, th) * kron_self(u);
      CHECK(scaled_error(second, contracted) <= 1e-4);
    }
  }
}

TEST_CASE("finite-difference third derivative fallback") {
  LogisticNoThird fd;
  LogisticModel<double> exact(1, 1);
  CHECK_FALSE(fd.has_analytic_third());
  const Vec row = vec({0.4, -1.3, 1.0});
  const Vec th = vec({0.7, 0.2});
  CHECK(scaled_error(third_derivative(fd, row, th), third_derivative(exact, row, th)) <= 1e-6);
}

TEST_CASE("logistic objective is stable where the naive form overflows") {
  LogisticModel<double> logit(1, 0);
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> u(-40, 40);
  for (int i = 0; i < 2000; ++i) {
    const double z = u(gen);
    for (double y : {0.0, 1.0}) {
      const double stable = objective(logit, vec({1.0, y}), vec({z}));
      const double naive = y * std::log(1 + std::exp(-z)) + (1 - y) * std::log(1 + std::exp(z));
      if (std::isfinite(naive)) CHECK(std::abs(stable - naive) <= 1e-12 * std::max(1.0, std::abs(naive)));
    }
  }
  CHECK(std::isfinite(objective(logit, vec({1.0, 0.0}), vec({800.0}))));
  CHECK(objective(logit, vec({1.0, 0.0}), vec({800.0})) == doctest::Approx(800.0));
}

TEST_CASE("block evaluation matches per-row averages") {
  std::mt19937_64 gen(17);
  for (const auto& c : builtin_cases()) {
    CAPTURE(c.model->name());
    DataBlock<double> b;
    b.rows.resize(40, c.model->row_arity());
    for (Index i = 0; i < 40; ++i) b.rows.row(i) = c.row(gen).transpose();
    const Vec th = c.theta(gen);
    const auto ev = c.model->evaluate(b.rows, th, 2);
    double f = 0;
    Vec g = Vec::Zero(th.size());
    Mat h = Mat::Zero(th.size(), th.size());
    for (Index i = 0; i < 40; ++i) {
      const Vec r = b.rows.row(i).transpose();
      f += objective(*c.model, r, th) / 40;
      g += score(*c.model, r, th) / 40;
      h += hessian(*c.model, r, th) / 40;
    }
    CHECK(ev.objective == doctest::Approx(f).epsilon(1e-12));
    CHECK(scaled_error(ev.gradient, g) <= 1e-12);
    CHECK(scaled_error(ev.hessian, h) <= 1e-12);

    const Mat psi = c.model->scores(b.rows, th);
    CHECK(scaled_error(Vec(psi.colwise().mean().transpose()), g) <= 1e-12);

    // curvature_terms against direct sums.
    Mat d(40, th.size());
    for (Index i = 0; i < 40; ++i)
      for (Index j = 0; j < th.size(); ++j) d(i, j) = std::sin(double(i + 3 * j));
    const Mat m = d.transpose() * d / 40.0;
    Vec hd, h3m;
    c.model->curvature_terms(b.rows, th, d, m, hd, h3m);
    Vec hd_ref = Vec::Zero(th.size()), h3_ref = Vec::Zero(th.size());
    const Vec vec_m = Eigen::Map<const Vec>(m.data(), m.size());
    for (Index i = 0; i < 40; ++i) {
      const Vec r = b.rows.row(i).transpose();
      hd_ref += hessian(*c.model, r, th) * d.row(i).transpose() / 40.0;
      h3_ref += third_derivative(*c.model, r, th) * vec_m / 40.0;
    }
    CHECK(scaled_error(hd, hd_ref) <= 1e-12);
    CHECK(scaled_error(h3m, h3_ref) <= 1e-12);
  }
}

TEST_CASE("models are safe to share across threads") {
  // Evaluations are const and stateless: concurrent calls agree with serial ones.
  LogisticModel<double> logit(1, 2);
  const Vec row = vec({0.1, 0.2, -0.3, 1.0});
  const Vec th = vec({0.5, -0.5, 0.25});
  const Mat serial = hessian(logit, row, th);
  std::vector<Mat> out(8);
  std::vector<std::thread> threads;
  for (int t = 0; t < 8; ++t) threads.emplace_back([&, t] { out[t] = hessian(logit, row, th); });
  for (auto& t : threads) t.join();
  for (const auto& m : out) CHECK(m == serial);
}

TEST_CASE("Philox4x32-10 known-answer vectors") {
  Philox4x32 zero(0);
  const auto a = zero({0, 0, 0, 0});
  CHECK(a == Philox4x32::counter_type{0x6627e8d5u, 0xe169c58du, 0xbc57ac4cu, 0x9b00dbd8u});
  Philox4x32 ones(~std::uint64_t{0});
  const auto b = ones({0xffffffffu, 0xffffffffu, 0xffffffffu, 0xffffffffu});
  CHECK(b == Philox4x32::counter_type{0x408f276du, 0x41c83b0eu, 0xa20bc7c6u, 0x6d5451fdu});
  Philox4x32 pi(0x299f31d0a4093822ull);
  const auto c = pi({0x243f6a88u, 0x85a308d3u, 0x13198a2eu, 0x03707344u});
  CHECK(c == Philox4x32::counter_type{0xd16cfe09u, 0x94fdccebu, 0x5001e420u, 0x24126ea1u});
}

TEST_CASE("counter streams are addressable and well distributed") {
  CounterStream s1(42, 1, 2, 3), s2(42, 1, 2, 3), s3(42, 1, 2, 4);
  double sum = 0, sum2 = 0;
  bool differs = false;
  for (int i = 0; i < 20000; ++i) {
    const double a = s1.normal();
    CHECK(a == s2.normal());
    differs = differs || a != s3.normal();
    sum += a;
    sum2 += a * a;
  }
  CHECK(differs);
  CHECK(std::abs(sum / 20000) < 4.0 / std::sqrt(20000.0));
  CHECK(std::abs(sum2 / 20000 - 1.0) < 0.05);

  CounterStream u(7, 0, 0, 0);
  for (int i = 0; i < 1000; ++i) {
    const double v = u.uniform();
    CHECK(v > 0.0);
    CHECK(v < 1.0);
  }
}

TEST_CASE("seeded permutation") {
  const auto p = seeded_permutation(1000, 3, 5, 0);
  std::vector<bool> seen(1000, false);
  for (auto v : p) seen[static_cast<std::size_t>(v)] = true;
  CHECK(std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }));
  CHECK(p == seeded_permutation(1000, 3, 5, 0));
  CHECK(p != seeded_permutation(1000, 4, 5, 0));
}
