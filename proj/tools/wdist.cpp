#include <wdist/asymptotics.hpp>
#include <wdist/io.hpp>
#include <wdist/simnet.hpp>
#include <wdist/svg.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

using namespace wdist;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Bad input: exit 2. Anything that fails while computing: exit 1.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int report_error(int code, const std::string& kind, const std::string& what) {
  std::cerr << json{{"error", kind}, {"message", what}, {"exit_code", code}}.dump() << '\n';
  return code;
}

void emit(const std::string& out, const std::string& content) {
  if (out.empty() || out == "-")
    std::cout << content;
  else
    write_atomic(out, content);
}

std::vector<EstimatorKind> parse_estimators(const std::vector<std::string>& names) {
  std::vector<EstimatorKind> out;
  for (const auto& n : names) out.push_back(parse_estimator_kind(n));
  return out;
}

struct SimulateArgs {
  std::string design = "eiv";
  std::vector<std::string> estimators;
  std::vector<Index> K;
  std::optional<Index> N;
  Index p2 = 4;
  std::optional<Index> B;
  std::uint64_t seed = 1;
  std::vector<double> alpha{0.01, 0.05, 0.1};
  double savgm_r = 0.05;
  int threads = 1;
  std::string out = "wdist-out";
  bool full_scale = false;
  int scenario = 3;
  std::vector<double> lambda{0.25, 2.25};
  double phi = 1.0;
  double homogeneous_lambda = 0.0;
  bool homogeneous = false;
  double box_radius = 50.0;
  bool center_hessian = false;
};

std::vector<ExperimentConfig> build_configs(const SimulateArgs& a) {
  ExperimentConfig base;
  try {
    base.design = parse_design(a.design);
    base.estimators = parse_estimators(a.estimators);
  } catch (const ContractViolation& e) {
    throw UsageError(e.what());
  }
  base.B = a.B.value_or(a.full_scale ? 500 : 200);
  base.seed = a.seed;
  base.alphas = a.alpha;
  base.savgm_r = a.savgm_r;
  base.threads = a.threads;
  base.box_radius = a.box_radius;
  base.center_hessian = a.center_hessian;
  std::vector<ExperimentConfig> out;
  if (base.design == Design::eiv) {
    if (a.lambda.size() < 1) throw UsageError("--lambda needs at least one value");
    if (a.scenario < 1 || a.scenario > 4) throw UsageError("--scenario must be 1..4");
    base.eiv = eiv_scenario(a.scenario, 0.0, 0.0);
    base.eiv.lambdas = a.lambda;
    base.eiv.phi = a.phi;
    base.eiv.N = a.N.value_or(100000);
    if (a.estimators.empty()) base.estimators = {EstimatorKind::full, EstimatorKind::sac, EstimatorKind::wd};
    out.push_back(base);
  } else {
    base.N = a.N.value_or(a.full_scale ? 2000000 : 200000);
    base.p2 = a.p2;
    base.phi = a.phi;
    if (a.homogeneous) base.homogeneous_lambda = a.homogeneous_lambda;
    if (a.estimators.empty())
      base.estimators = {EstimatorKind::sac, EstimatorKind::wd, EstimatorKind::dsac, EstimatorKind::dwd,
                         EstimatorKind::savgm};
    const std::vector<Index> ks = a.K.empty() ? std::vector<Index>{10, 50, 250, 500} : a.K;
    for (Index k : ks) {
      ExperimentConfig c = base;
      c.K = k;
      out.push_back(c);
    }
  }
  for (const auto& c : out) {
    try {
      c.validate();
    } catch (const ContractViolation& e) {
      throw UsageError(e.what());
    }
  }
  return out;
}

int run_simulate(const SimulateArgs& a) {
  const auto configs = build_configs(a);
  std::vector<ExperimentReport> reports;
  for (const auto& c : configs) {
    std::cerr << "simulate: " << to_string(c.design) << " K=" << c.blocks() << " N=" << c.total_n() << " B=" << c.B
              << '\n';
    reports.push_back(monte_carlo(c));
  }
  fs::create_directories(a.out);
  const fs::path dir(a.out);
  write_atomic(dir / "report.json", sweep_to_json(reports).dump(2) + "\n");
  write_atomic(dir / "report.csv", reports_csv(reports));
  write_atomic(dir / "timing.json", timing_to_json(reports).dump(2) + "\n");
  if (reports.size() > 1) write_atomic(dir / "figure.svg", sweep_figure(reports));
  std::cout << reports_table(reports);
  for (const auto& r : reports)
    if (!r.valid) {
      std::string what;
      for (const auto& m : r.estimators)
        if (double(m.failures) > 0.01 * double(r.config.B))
          what += std::string(to_string(m.kind)) + ": " + std::to_string(m.failures) + " failed replicates (" +
                  m.first_error + "); ";
      return report_error(1, "estimator_failure", "report invalid: " + what);
    }
  return 0;
}

json are_row(const EivScenario& scn, int scenario) {
  const auto v = eiv_asymptotic_variances(scn);
  json j;
  j["scenario"] = scenario;
  j["lambda"] = scn.lambdas;
  j["mu_z"] = scn.mu_z;
  j["var_z"] = scn.var_z;
  j["sigma2"] = scn.sigma2;
  j["are"] = v.are;
  j["are_rounded"] = std::round(v.are * 100.0) / 100.0;
  j["nvar_full"] = v.nvar_full;
  j["nvar_sac"] = v.nvar_sac;
  j["nvar_wd"] = v.nvar_wd;
  return j;
}

std::unique_ptr<BlockModel<double>> make_model(const std::string& name, Index arity, Index p1, double sigma2) {
  if (name == "logistic") {
    if (arity < 2 || p1 >= arity) throw UsageError("logistic blocks need p1 < columns - 1 features plus a response");
    return std::make_unique<LogisticModel<double>>(p1, arity - 1 - p1);
  }
  if (name == "eiv") {
    if (arity != 2) throw UsageError("eiv blocks need exactly two columns (x, y)");
    return std::make_unique<EivModel<double>>(sigma2);
  }
  if (name == "exponential") {
    if (arity != 1) throw UsageError("exponential blocks need one column");
    return std::make_unique<ExponentialModel<double>>();
  }
  if (name == "quadratic") {
    if (p1 > arity) throw UsageError("quadratic blocks need at least p1 columns");
    return std::make_unique<QuadraticModel<double>>(p1, arity - p1);
  }
  throw UsageError("unknown model '" + name + "' (logistic, eiv, exponential, quadratic)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed M-estimation of a common parameter across heterogeneous data blocks"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  // simulate
  SimulateArgs sim;
  auto* s = app.add_subcommand("simulate", "Monte Carlo experiment; writes report.json, report.csv, timing.json, figure.svg");
  // keys go under a [simulate] section; flags on the command line win
  app.set_config("--config", "", "INI file whose [simulate] section sets any simulate flag");
  s->fallthrough();
  s->footer("--config FILE.ini reads flags from its [simulate] section; explicit flags take precedence.");
  s->add_option("--design", sim.design, "eiv | logistic")->capture_default_str();
  s->add_option("--estimators", sim.estimators, "Comma list of sac,wd,dsac,dwd,savgm,full")->delimiter(',');
  s->add_option("--K", sim.K, "Logistic: comma list of block counts (default 10,50,250,500)")->delimiter(',');
  s->add_option("--N", sim.N, "Total sample size (default 1e5 eiv, 2e5 logistic, 2e6 with --full-scale)");
  s->add_option("--p2", sim.p2, "Logistic: dimension of each block parameter")->capture_default_str();
  s->add_option("--B", sim.B, "Replicates (default 200, 500 with --full-scale)");
  s->add_option("--seed", sim.seed, "Master seed")->capture_default_str();
  s->add_option("--alpha", sim.alpha, "Comma list of significance levels for the regions")->delimiter(',')->capture_default_str();
  s->add_option("--savgm-r", sim.savgm_r, "SAVGM subsampling rate")->capture_default_str();
  s->add_option("--threads", sim.threads, "Worker threads; results do not depend on it")->capture_default_str();
  s->add_option("--out", sim.out, "Output directory")->capture_default_str();
  s->add_flag("--full-scale", sim.full_scale, "Use N = 2e6 (logistic) and B = 500");
  s->add_option("--scenario", sim.scenario, "EIV scenario 1..4")->capture_default_str();
  s->add_option("--lambda", sim.lambda, "EIV: comma list of block slopes")->delimiter(',')->capture_default_str();
  s->add_option("--phi", sim.phi, "True common parameter")->capture_default_str();
  auto* hl = s->add_option("--homogeneous-lambda", sim.homogeneous_lambda,
                           "Logistic: give every block this lambda value instead of the alternating design");
  s->add_option("--box-radius", sim.box_radius, "Parameter box half-width")->capture_default_str();
  s->add_flag("--center-hessian", sim.center_hessian, "Centered Hessian fluctuation term in the bias estimate");

  // are
  int are_scenario = 3;
  std::vector<double> are_lambda{0.25, 2.25};
  bool are_all = false;
  std::string are_out;
  auto* a = app.add_subcommand("are", "Closed-form asymptotic variances and ARE for the errors-in-variables design");
  a->add_option("--scenario", are_scenario, "Scenario 1..4")->capture_default_str();
  for (int i = 1; i <= 4; ++i)
    a->add_flag_callback("--scenario" + std::to_string(i), [&are_scenario, i] { are_scenario = i; },
                         "Same as --scenario " + std::to_string(i));
  a->add_option("--lambda", are_lambda, "Comma list of block slopes")->delimiter(',')->capture_default_str();
  a->add_flag("--all", are_all, "Every reference row: four scenarios, three slope pairs each");
  a->add_option("--out", are_out, "Output file (default stdout)");

  // estimate
  std::vector<std::string> est_blocks;
  std::string est_model = "logistic", est_kind = "wd", est_out;
  Index est_p1 = 1;
  double est_sigma2 = 1.0, est_alpha = 0.05, est_r = 0.05, est_radius = 50.0;
  std::uint64_t est_seed = 1;
  auto* e = app.add_subcommand("estimate", "Estimate the common parameter from one CSV file per block");
  e->add_option("--blocks", est_blocks, "Comma list of CSV files, one block each")->delimiter(',')->required();
  e->add_option("--model", est_model, "logistic | eiv | exponential | quadratic")->capture_default_str();
  e->add_option("--estimator", est_kind, "sac | wd | dsac | dwd | savgm | full")->capture_default_str();
  e->add_option("--alpha", est_alpha, "Significance level of the region")->capture_default_str();
  e->add_option("--p1", est_p1, "Dimension of the common parameter (leading parameters)")->capture_default_str();
  e->add_option("--sigma2", est_sigma2, "EIV noise variance")->capture_default_str();
  e->add_option("--savgm-r", est_r, "SAVGM subsampling rate")->capture_default_str();
  e->add_option("--seed", est_seed, "Seed for half splits and subsamples")->capture_default_str();
  e->add_option("--box-radius", est_radius, "Parameter box half-width")->capture_default_str();
  e->add_option("--out", est_out, "Output file (default stdout)");

  // report
  std::string rep_in, rep_out;
  double rep_scale = 100.0;
  auto* r = app.add_subcommand("report", "Table, CSV and SVG figure from a report.json");
  r->add_option("--in", rep_in, "report.json written by simulate")->required();
  r->add_option("--out", rep_out, "Directory for report.csv and figure.svg (default: print only)");
  r->add_option("--scale", rep_scale, "Multiplier for bias, SD and RMSE in the table")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    return report_error(2, "usage", ex.what());
  }

  try {
    if (s->parsed()) {
      sim.homogeneous = hl->count() > 0;
      return run_simulate(sim);
    }
    if (a->parsed()) {
      json out;
      if (are_all) {
        out = json::array();
        for (const auto& row : eiv_table_rows()) out.push_back(are_row(row.design, row.scenario));
      } else {
        if (are_scenario < 1 || are_scenario > 4) throw UsageError("--scenario must be 1..4");
        EivScenario scn = eiv_scenario(are_scenario, 0.0, 0.0);
        scn.lambdas = are_lambda;
        try {
          scn.validate();
        } catch (const ContractViolation& ex) {
          throw UsageError(ex.what());
        }
        out = are_row(scn, are_scenario);
      }
      emit(are_out, out.dump(2) + "\n");
      return 0;
    }
    if (e->parsed()) {
      EstimatorKind kind;
      try {
        kind = parse_estimator_kind(est_kind);
      } catch (const ContractViolation& ex) {
        throw UsageError(ex.what());
      }
      if (!(est_alpha > 0.0 && est_alpha < 1.0)) throw UsageError("--alpha must lie in (0, 1)");
      std::vector<DataBlock<double>> blocks;
      for (std::size_t i = 0; i < est_blocks.size(); ++i) {
        try {
          blocks.push_back(read_block_csv(est_blocks[i], std::int64_t(i)));
        } catch (const std::exception& ex) {
          throw UsageError(ex.what());
        }
        if (blocks.back().arity() != blocks.front().arity()) throw UsageError("blocks have different column counts");
      }
      const auto model = make_model(est_model, blocks.front().arity(), est_p1, est_sigma2);
      const auto box = ParameterBox<double>::symmetric(model->dim(), model->common_dim(), est_radius);
      ProtocolOptions opts;
      opts.inference = true;
      opts.savgm_r = est_r;
      opts.seed = est_seed;
      const auto run = run_protocol(kind, blocks, *model, box, opts);
      json out = estimate_to_json(run.estimate);
      out["model"] = model->name();
      out["blocks"] = est_blocks;
      out["comm_bytes"] = run.total_bytes();
      if (run.estimate.has_standardizer()) {
        const auto cr = confidence_region(run.estimate, est_alpha);
        json reg;
        reg["alpha"] = est_alpha;
        reg["threshold"] = cr.threshold;
        json iv = json::array();
        for (Index i = 0; i < cr.center.size(); ++i)
          iv.push_back({cr.center(i) - cr.half_width(i), cr.center(i) + cr.half_width(i)});
        reg["intervals"] = iv;
        out["region"] = reg;
      } else {
        out["region"] = nullptr;
      }
      emit(est_out, out.dump(2) + "\n");
      return 0;
    }
    if (r->parsed()) {
      std::vector<ExperimentReport> reports;
      try {
        reports = sweep_from_json(json::parse(read_file(rep_in)));
      } catch (const std::exception& ex) {
        throw UsageError(std::string("cannot read report: ") + ex.what());
      }
      std::cout << reports_table(reports, rep_scale);
      if (!rep_out.empty()) {
        fs::create_directories(rep_out);
        write_atomic(fs::path(rep_out) / "report.csv", reports_csv(reports));
        write_atomic(fs::path(rep_out) / "figure.svg", sweep_figure(reports));
      }
      return 0;
    }
  } catch (const UsageError& ex) {
    return report_error(2, "usage", ex.what());
  } catch (const ContractViolation& ex) {
    return report_error(2, "contract", ex.what());
  } catch (const std::exception& ex) {
    return report_error(1, "runtime", ex.what());
  }
  return 0;
}
