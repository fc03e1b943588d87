#include <wdist/io.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <unistd.h>

namespace wdist {

using nlohmann::json;

namespace {

double number(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

std::string fmt(double x) {
  if (std::isnan(x)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

json vec(const vector_type<double>& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

vector_type<double> vec(const json& j) {
  vector_type<double> v(Index(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(Index(i)) = number(j[i]);
  return v;
}

json mat(const matrix_type<double>& m) {
  json rows = json::array();
  for (Index i = 0; i < m.rows(); ++i) rows.push_back(vec(vector_type<double>(m.row(i).transpose())));
  return rows;
}

json config_json(const ExperimentConfig& c) {
  json j;
  j["design"] = to_string(c.design);
  if (c.design == Design::eiv) {
    j["phi"] = c.eiv.phi;
    j["lambdas"] = c.eiv.lambdas;
    j["mu_z"] = c.eiv.mu_z;
    j["var_z"] = c.eiv.var_z;
    j["sigma2"] = c.eiv.sigma2;
    j["N"] = c.eiv.N;
  } else {
    j["K"] = c.K;
    j["N"] = c.N;
    j["p2"] = c.p2;
    j["phi"] = c.phi;
    j["sigma_x"] = c.sigma_x;
    j["homogeneous_lambda"] = c.homogeneous_lambda ? json(*c.homogeneous_lambda) : json(nullptr);
  }
  json est = json::array();
  for (auto k : c.estimators) est.push_back(to_string(k));
  j["estimators"] = est;
  j["B"] = c.B;
  j["alphas"] = c.alphas;
  j["seed"] = c.seed;
  j["savgm_r"] = c.savgm_r;
  j["box_radius"] = c.box_radius;
  j["center_hessian"] = c.center_hessian;
  return j;
}

ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  c.design = parse_design(j.at("design").get<std::string>());
  if (c.design == Design::eiv) {
    c.eiv.phi = j.at("phi").get<double>();
    c.eiv.lambdas = j.at("lambdas").get<std::vector<double>>();
    c.eiv.mu_z = j.at("mu_z").get<double>();
    c.eiv.var_z = j.at("var_z").get<double>();
    c.eiv.sigma2 = j.at("sigma2").get<double>();
    c.eiv.N = j.at("N").get<Index>();
  } else {
    c.K = j.at("K").get<Index>();
    c.N = j.at("N").get<Index>();
    c.p2 = j.at("p2").get<Index>();
    c.phi = j.at("phi").get<double>();
    c.sigma_x = j.at("sigma_x").get<double>();
    if (!j.at("homogeneous_lambda").is_null()) c.homogeneous_lambda = j.at("homogeneous_lambda").get<double>();
  }
  c.estimators.clear();
  for (const auto& e : j.at("estimators")) c.estimators.push_back(parse_estimator_kind(e.get<std::string>()));
  c.B = j.at("B").get<Index>();
  c.alphas = j.at("alphas").get<std::vector<double>>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.savgm_r = j.at("savgm_r").get<double>();
  c.box_radius = j.at("box_radius").get<double>();
  c.center_hessian = j.at("center_hessian").get<bool>();
  return c;
}

std::string csv_prefix(const ExperimentConfig& c) {
  std::ostringstream os;
  os << to_string(c.design) << ',' << c.blocks() << ',' << c.total_n() << ','
     << (c.design == Design::eiv ? Index(1) : c.p2);
  return os.str();
}

}  // namespace

json report_to_json(const ExperimentReport& report) {
  json j;
  j["config"] = config_json(report.config);
  j["seed"] = report.config.seed;
  j["valid"] = report.valid;
  json est = json::array();
  for (const auto& m : report.estimators) {
    json e;
    e["estimator"] = to_string(m.kind);
    e["replicates"] = m.replicates;
    e["failures"] = m.failures;
    e["fallbacks"] = m.fallbacks;
    e["bias"] = m.bias;
    e["sd"] = m.sd;
    e["rmse"] = m.rmse;
    e["mean_phi"] = vec(m.mean_phi);
    e["mean_bytes"] = m.mean_bytes;
    json cov = json::array();
    for (const auto& c : m.coverage)
      cov.push_back({{"alpha", c.alpha}, {"coverage", c.coverage}, {"mean_width", c.mean_width}, {"regions", c.regions}});
    e["coverage"] = cov;
    if (!m.first_error.empty()) e["first_error"] = m.first_error;
    est.push_back(e);
  }
  j["estimators"] = est;
  return j;
}

ExperimentReport report_from_json(const json& j) {
  ExperimentReport r;
  r.config = config_from_json(j.at("config"));
  r.valid = j.at("valid").get<bool>();
  for (const auto& e : j.at("estimators")) {
    EstimatorMetrics m;
    m.kind = parse_estimator_kind(e.at("estimator").get<std::string>());
    m.replicates = e.at("replicates").get<Index>();
    m.failures = e.at("failures").get<Index>();
    m.fallbacks = e.at("fallbacks").get<Index>();
    m.bias = number(e.at("bias"));
    m.sd = number(e.at("sd"));
    m.rmse = number(e.at("rmse"));
    m.mean_phi = vec(e.at("mean_phi"));
    m.mean_bytes = number(e.at("mean_bytes"));
    m.mean_seconds = std::numeric_limits<double>::quiet_NaN();
    for (const auto& c : e.at("coverage"))
      m.coverage.push_back({c.at("alpha").get<double>(), number(c.at("coverage")), number(c.at("mean_width")),
                            c.at("regions").get<Index>()});
    if (e.contains("first_error")) m.first_error = e.at("first_error").get<std::string>();
    r.estimators.push_back(std::move(m));
  }
  return r;
}

json timing_to_json(const std::vector<ExperimentReport>& reports) {
  json out = json::array();
  for (const auto& r : reports) {
    json t;
    t["K"] = r.config.blocks();
    for (const auto& m : r.estimators) t["mean_seconds"][to_string(m.kind)] = m.mean_seconds;
    out.push_back(t);
  }
  return out;
}

json sweep_to_json(const std::vector<ExperimentReport>& reports) {
  json j;
  j["reports"] = json::array();
  for (const auto& r : reports) j["reports"].push_back(report_to_json(r));
  return j;
}

std::vector<ExperimentReport> sweep_from_json(const json& j) {
  std::vector<ExperimentReport> out;
  for (const auto& r : j.at("reports")) out.push_back(report_from_json(r));
  return out;
}

std::string reports_csv(const std::vector<ExperimentReport>& reports) {
  std::ostringstream os;
  os << "design,K,N,p2,estimator,alpha,replicates,failures,fallbacks,bias,sd,rmse,coverage,mean_width,mean_bytes\n";
  for (const auto& r : reports) {
    const std::string prefix = csv_prefix(r.config);
    for (const auto& m : r.estimators) {
      const std::string tail = fmt(m.bias) + ',' + fmt(m.sd) + ',' + fmt(m.rmse);
      auto line = [&](const std::string& alpha, const std::string& cov, const std::string& width) {
        os << prefix << ',' << to_string(m.kind) << ',' << alpha << ',' << m.replicates << ',' << m.failures << ','
           << m.fallbacks << ',' << tail << ',' << cov << ',' << width << ',' << fmt(m.mean_bytes) << '\n';
      };
      if (m.coverage.empty()) line("", "", "");
      for (const auto& c : m.coverage) line(fmt(c.alpha), fmt(c.coverage), fmt(c.mean_width));
    }
  }
  return os.str();
}

std::string reports_table(const std::vector<ExperimentReport>& reports, double scale) {
  std::ostringstream os;
  char buf[256];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof buf, "%s  K=%lld  N=%lld  B=%lld  seed=%llu%s\n", to_string(r.config.design),
                  (long long)r.config.blocks(), (long long)r.config.total_n(), (long long)r.config.B,
                  (unsigned long long)r.config.seed, r.valid ? "" : "  [INVALID: >1% failures]");
    os << buf;
    std::snprintf(buf, sizeof buf, "  %-9s %10s %10s %10s %8s %12s  %s\n", "estimator", "|bias|", "SD", "RMSE",
                  "fail", "bytes", "coverage (width)");
    os << buf;
    for (const auto& m : r.estimators) {
      std::snprintf(buf, sizeof buf, "  %-9s %10.4f %10.4f %10.4f %8lld %12.0f  ", to_string(m.kind), scale * m.bias,
                    scale * m.sd, scale * m.rmse, (long long)m.failures, m.mean_bytes);
      os << buf;
      for (const auto& c : m.coverage) {
        std::snprintf(buf, sizeof buf, "%.2f: %.3f (%.4g)  ", 1.0 - c.alpha, c.coverage, c.mean_width);
        os << buf;
      }
      os << '\n';
    }
    os << '\n';
  }
  return os.str();
}

json estimate_to_json(const AggregateEstimate<double>& est) {
  json j;
  j["estimator"] = to_string(est.kind);
  j["phi"] = vec(est.phi);
  j["total_n"] = est.total_n;
  j["blocks_used"] = est.blocks_used;
  j["blocks_excluded"] = est.blocks_excluded;
  j["fallback_used"] = est.fallback_used;
  j["standardizer"] = est.has_standardizer() ? mat(est.standardizer) : json(nullptr);
  return j;
}

void write_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out << content;
    out.flush();
    if (!out) {
      std::filesystem::remove(tmp);
      throw std::runtime_error("failed writing " + tmp.string());
    }
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

DataBlock<double> read_block_csv(const std::filesystem::path& path, std::int64_t id) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos || line[line.find_first_not_of(" \t")] == '#') continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    bool numeric = true;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || cell.find_first_not_of(" \t", std::size_t(end - cell.c_str())) != std::string::npos) {
        numeric = false;
        break;
      }
      row.push_back(v);
    }
    if (!numeric) {
      if (rows.empty()) continue;  // header
      throw ContractViolation(path.string() + ":" + std::to_string(lineno) + ": non-numeric field");
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ContractViolation(path.string() + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(rows.front().size()) + " fields");
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ContractViolation(path.string() + ": no data rows");
  DataBlock<double> b;
  b.id = id;
  b.rows.resize(Index(rows.size()), Index(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) b.rows(Index(i), Index(j)) = rows[i][j];
  b.validate();
  return b;
}

std::string block_csv(const DataBlock<double>& block) {
  std::ostringstream os;
  for (Index i = 0; i < block.n(); ++i) {
    for (Index j = 0; j < block.arity(); ++j) os << (j ? "," : "") << fmt(block.rows(i, j));
    os << '\n';
  }
  return os.str();
}

}  // namespace wdist
