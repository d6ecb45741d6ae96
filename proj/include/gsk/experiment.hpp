#pragma once

#include "gsk/common.hpp"
#include "gsk/convex.hpp"
#include "gsk/graph.hpp"
#include "gsk/kernel.hpp"
#include "gsk/random.hpp"
#include "gsk/rates.hpp"
#include "gsk/restricted.hpp"
#include "gsk/sampling.hpp"
#include "gsk/spectra.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace gsk {

/// Built-in graph families ("circle:200", "path:50", "complete:4", "empty:3")
/// or a path to a Matrix Market / dense weight file.
inline WeightedGraph make_graph(const std::string& source) {
  const auto colon = source.find(':');
  if (colon != std::string::npos) {
    const std::string kind = source.substr(0, colon);
    const std::string size = source.substr(colon + 1);
    if (kind == "circle" || kind == "path" || kind == "complete" || kind == "empty") {
      char* end = nullptr;
      const long m = std::strtol(size.c_str(), &end, 10);
      require(end && *end == '\0' && m > 0, "graph: bad size in '" + source + "'");
      if (kind == "circle") return WeightedGraph::circle(m);
      if (kind == "path") return WeightedGraph::path(m);
      if (kind == "complete") return WeightedGraph::complete(m);
      return WeightedGraph::empty(m);
    }
  }
  return read_graph(source);
}

/// Sectioned key = value text. Lines starting with '#' or ';' are comments;
/// "[name]" opens a section and keys inside it are stored as "name.key".
class ConfigFile {
public:
  static ConfigFile parse(std::istream& in) {
    ConfigFile cfg;
    std::string line, section;
    int number = 0;
    while (std::getline(in, line)) {
      ++number;
      const auto hash = line.find_first_of("#;");
      if (hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        require(line.back() == ']', "config line " + std::to_string(number) + ": unterminated section");
        section = trim(line.substr(1, line.size() - 2));
        continue;
      }
      const auto eq = line.find('=');
      require(eq != std::string::npos, "config line " + std::to_string(number) + ": expected key = value");
      const std::string key = trim(line.substr(0, eq));
      require(!key.empty(), "config line " + std::to_string(number) + ": empty key");
      cfg.values_[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static ConfigFile load(const std::string& path) {
    std::ifstream in(path);
    require(in.good(), "cannot open config file: " + path);
    return parse(in);
  }

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get(const std::string& key, const std::string& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  std::string require_key(const std::string& key) const {
    const auto it = values_.find(key);
    require(it != values_.end(), "config: missing key '" + key + "'");
    return it->second;
  }

  double number(const std::string& key, double fallback) const {
    return has(key) ? to_number(key, values_.at(key)) : fallback;
  }

  long integer(const std::string& key, long fallback) const {
    if (!has(key)) return fallback;
    const double x = to_number(key, values_.at(key));
    require(x == std::floor(x), "config: '" + key + "' must be an integer");
    return static_cast<long>(x);
  }

  std::vector<double> list(const std::string& key) const {
    std::vector<double> out;
    std::stringstream ss(require_key(key));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(to_number(key, item));
    }
    return out;
  }

private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  static double to_number(const std::string& key, const std::string& text) {
    char* end = nullptr;
    const double x = std::strtod(text.c_str(), &end);
    require(end != text.c_str() && *end == '\0', "config: '" + key + "' is not a number: " + text);
    return x;
  }

  std::map<std::string, std::string> values_;
};

enum class EstimatorKind { Convex, Restricted, Select, Aggregate };

inline EstimatorKind parse_estimator(const std::string& text) {
  if (text == "convex") return EstimatorKind::Convex;
  if (text == "restricted") return EstimatorKind::Restricted;
  if (text == "select") return EstimatorKind::Select;
  if (text == "aggregate") return EstimatorKind::Aggregate;
  throw Error("unknown estimator '" + text + "' (convex | restricted | select | aggregate)");
}

inline const char* to_string(EstimatorKind kind) {
  switch (kind) {
    case EstimatorKind::Convex: return "convex";
    case EstimatorKind::Restricted: return "restricted";
    case EstimatorKind::Select: return "select";
    case EstimatorKind::Aggregate: return "aggregate";
  }
  return "?";
}

struct ExperimentConfig {
  std::string graph = "circle:200";
  double power = 1.0;

  Index oracle_rank = 1;
  double oracle_rho = 1e9;
  double oracle_sup = 0.5;  // target max |S*(u,v)| when the sup constraint binds
  std::string oracle_profile = "smooth";
  std::uint64_t oracle_seed = 1;

  double a = 1.0;
  std::string noise = "sign:0.1";

  EstimatorKind estimator = EstimatorKind::Aggregate;
  bool auto_epsilon = true;
  double epsilon = 0.0;  // used when auto_epsilon is false
  double big_d = 32.0;
  double epsilon_bar = 0.0;
  int max_iters = 50000;
  double rel_tol = 1e-7;
  double opt_tol = 1e-6;
  bool certify = false;
  Index r = 1;
  Index l = 1;
  std::vector<Index> r_grid;
  std::vector<Index> l_grid;
  double K = 1.0;
  double A = 1.0;
  int restarts = 16;

  std::vector<Index> n_grid;
  int replicates = 1;
  std::uint64_t seed = 0;
  std::string output = "rates.csv";
  bool timing = true;  // when off, wall_ms is written as 0 so reruns give identical bytes
  double beta = 0.0;   // exponent for the beta-example column; 0 means use `power`

  void validate() const {
    require(power > 0.0, "experiment: power must be positive");
    require(oracle_rank >= 1 && oracle_rho > 0.0 && oracle_sup > 0.0,
            "experiment: invalid oracle parameters");
    require(a > 0.0, "experiment: a must be positive");
    require(!n_grid.empty(), "experiment: n_grid is empty");
    for (std::size_t i = 0; i < n_grid.size(); ++i) {
      require(n_grid[i] >= 1, "experiment: n values must be positive");
      if (i > 0) require(n_grid[i] > n_grid[i - 1], "experiment: n_grid must be strictly increasing");
    }
    require(replicates >= 1, "experiment: replicates must be >= 1");
    require(auto_epsilon ? big_d > 0.0 : epsilon >= 0.0, "experiment: invalid epsilon settings");
  }

  static ExperimentConfig from_file(const ConfigFile& f) {
    ExperimentConfig c;
    c.graph = f.get("graph.source", c.graph);
    c.power = f.number("graph.power", c.power);
    c.oracle_rank = f.integer("oracle.rank", c.oracle_rank);
    c.oracle_rho = f.number("oracle.rho", c.oracle_rho);
    c.oracle_sup = f.number("oracle.sup", c.oracle_sup);
    c.oracle_profile = f.get("oracle.profile", c.oracle_profile);
    c.oracle_seed = static_cast<std::uint64_t>(f.integer("oracle.seed", 1));
    c.a = f.number("sampling.a", c.a);
    c.noise = f.get("sampling.noise", c.noise);
    c.estimator = parse_estimator(f.get("estimator.kind", "aggregate"));
    const std::string eps = f.get("estimator.epsilon", "auto");
    c.auto_epsilon = eps == "auto";
    if (!c.auto_epsilon) c.epsilon = f.number("estimator.epsilon", 0.0);
    c.big_d = f.number("estimator.big_d", c.big_d);
    c.epsilon_bar = f.number("estimator.epsilon_bar", c.epsilon_bar);
    c.max_iters = static_cast<int>(f.integer("estimator.max_iters", c.max_iters));
    c.rel_tol = f.number("estimator.rel_tol", c.rel_tol);
    c.opt_tol = f.number("estimator.opt_tol", c.opt_tol);
    c.certify = f.get("estimator.certify", "false") == "true";
    c.r = f.integer("estimator.r", c.r);
    c.l = f.integer("estimator.l", c.l);
    if (f.has("estimator.r_grid"))
      for (double x : f.list("estimator.r_grid")) c.r_grid.push_back(static_cast<Index>(x));
    if (f.has("estimator.l_grid"))
      for (double x : f.list("estimator.l_grid")) c.l_grid.push_back(static_cast<Index>(x));
    c.K = f.number("estimator.K", c.K);
    c.A = f.number("estimator.A", c.A);
    c.restarts = static_cast<int>(f.integer("estimator.restarts", c.restarts));
    for (double x : f.list("experiment.n_grid")) c.n_grid.push_back(static_cast<Index>(x));
    c.replicates = static_cast<int>(f.integer("experiment.replicates", c.replicates));
    c.seed = static_cast<std::uint64_t>(f.integer("experiment.seed", 0));
    c.output = f.get("experiment.output", c.output);
    c.timing = f.get("experiment.timing", "on") != "off";
    c.beta = f.number("experiment.beta", c.beta);
    c.validate();
    return c;
  }
};

struct RateRow {
  Index n = 0;
  int replicate = 0;
  double sq_error = 0.0;
  double wall_ms = 0.0;
  std::string estimator;
  std::string failure;  // empty on success
};

struct EnvelopeRow {
  Index n = 0;
  double delta1 = 0.0;
  double delta4 = 0.0;
  double Delta_n = 0.0;
  double beta_rate = 0.0;
};

struct SlopeFit {
  double slope = 0.0;
  double stderr_ = 0.0;
  double intercept = 0.0;
};

struct RateReport {
  std::vector<RateRow> rows;
  std::vector<EnvelopeRow> envelope;
  SlopeFit slope;
  double oracle_sq_norm = 0.0;
  double oracle_sobolev = 0.0;
};

/// OLS of log(mean error) on log n over the distinct n in `rows`.
inline SlopeFit fit_rate_slope(const std::vector<RateRow>& rows) {
  std::map<Index, std::pair<double, int>> acc;
  for (const RateRow& r : rows) {
    if (!r.failure.empty() || !std::isfinite(r.sq_error)) continue;
    auto& slot = acc[r.n];
    slot.first += r.sq_error;
    slot.second += 1;
  }
  require(acc.size() >= 3, "slope fit: need at least 3 distinct n values");
  std::vector<double> x, y;
  for (const auto& [n, s] : acc) {
    const double mean = s.first / s.second;
    require(mean > 0.0, "slope fit: mean error must be positive");
    x.push_back(std::log(static_cast<double>(n)));
    y.push_back(std::log(mean));
  }
  const double k = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= k;
  my /= k;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  double rss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double e = y[i] - fit.intercept - fit.slope * x[i];
    rss += e * e;
  }
  fit.stderr_ = std::sqrt(rss / (k - 2.0) / sxx);
  return fit;
}

/// Thread count from an explicit request, else RANDKIT_THREADS, else 1.
inline int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("RANDKIT_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return 1;
}

/// Estimate from one dataset with the configured estimator.
inline Matrix fit_estimator(const ExperimentConfig& cfg, const Dataset& data,
                            const SpectralDecomposition& spec, std::uint64_t seed) {
  const Index n = data.n();
  const Index m = spec.size();
  switch (cfg.estimator) {
    case EstimatorKind::Convex:
    case EstimatorKind::Aggregate: {
      ConvexConfig cc;
      cc.epsilon = cfg.auto_epsilon ? default_epsilon(n, m, cfg.a, cfg.big_d) : cfg.epsilon;
      cc.epsilon_bar = cfg.epsilon_bar;
      cc.a = cfg.a;
      cc.max_iters = cfg.max_iters;
      cc.rel_tol = cfg.rel_tol;
      cc.opt_tol = cfg.opt_tol;
      cc.certify = cfg.certify;
      if (cfg.estimator == EstimatorKind::Convex) return solve_convex(data, spec, cc).first;
      return aggregate_epsbar(data, spec, cc).kernel;
    }
    case EstimatorKind::Restricted: {
      RestrictedConfig rc;
      rc.r = cfg.r;
      rc.l = cfg.l;
      rc.a = cfg.a;
      rc.restarts = cfg.restarts;
      rc.seed = seed;
      return restricted_ls(data, spec, rc).kernel;
    }
    case EstimatorKind::Select: {
      SelectionConfig sc;
      sc.K = cfg.K;
      sc.A = cfg.A;
      sc.a = cfg.a;
      sc.restarts = cfg.restarts;
      sc.seed = seed;
      const std::vector<Index> rs = cfg.r_grid.empty() ? std::vector<Index>{cfg.r} : cfg.r_grid;
      const std::vector<Index> ls = cfg.l_grid.empty() ? std::vector<Index>{cfg.l} : cfg.l_grid;
      for (Index r : rs)
        for (Index l : ls) sc.grid.push_back({r, l});
      return select_model(data, spec, sc).kernel;
    }
  }
  throw Error("experiment: unknown estimator");
}

/// Monte Carlo sweep over the sample-size grid. Replicate k at grid index i
/// draws its data from a seed derived from (seed, i, k) only, and rows are
/// stored by (i, k), so the output does not depend on the thread count.
inline RateReport run_experiment(const ExperimentConfig& cfg, int threads = 0) {
  cfg.validate();
  const SpectralDecomposition spec = smoothing_operator(make_graph(cfg.graph), cfg.power);
  const Index m = spec.size();
  require(cfg.oracle_rank <= m, "experiment: oracle rank exceeds m");
  const NoiseModel noise = NoiseModel::parse(cfg.noise);
  auto [s_star, profile] =
      generate_oracle(spec, cfg.oracle_rank, cfg.oracle_rho, cfg.oracle_sup / 0.95,
                      SmoothnessProfile::parse(cfg.oracle_profile), cfg.oracle_seed);

  RateReport report;
  report.oracle_sq_norm = l2_pi2_distance_sq(s_star, Matrix::Zero(m, m));
  report.oracle_sobolev = sobolev_norm_l2_pi2(s_star, spec);

  const std::size_t cells = cfg.n_grid.size() * static_cast<std::size_t>(cfg.replicates);
  report.rows.resize(cells);
  std::atomic<std::size_t> next{0};
  const auto work = [&]() {
    for (std::size_t task = next++; task < cells; task = next++) {
      const std::size_t i = task / static_cast<std::size_t>(cfg.replicates);
      const int k = static_cast<int>(task % static_cast<std::size_t>(cfg.replicates));
      RateRow& row = report.rows[task];
      row.n = cfg.n_grid[i];
      row.replicate = k;
      row.estimator = to_string(cfg.estimator);
      const std::uint64_t key = CounterRng::derive(cfg.seed, i, static_cast<std::uint64_t>(k));
      const auto t0 = std::chrono::steady_clock::now();
      try {
        const Dataset data = draw_dataset(s_star, cfg.a, noise, row.n, key);
        const Matrix est = fit_estimator(cfg, data, spec, CounterRng::derive(key, 1));
        row.sq_error = l2_pi2_distance_sq(est, s_star);
      } catch (const std::exception& e) {
        row.sq_error = std::numeric_limits<double>::quiet_NaN();
        row.failure = e.what();
      }
      const auto t1 = std::chrono::steady_clock::now();
      row.wall_ms = cfg.timing ? std::chrono::duration<double, std::milli>(t1 - t0).count() : 0.0;
    }
  };
  const int pool = std::max(1, std::min<int>(resolve_threads(threads), static_cast<int>(cells)));
  std::vector<std::thread> workers;
  for (int t = 1; t < pool; ++t) workers.emplace_back(work);
  work();
  for (auto& w : workers) w.join();

  const double p = std::max(2.0, std::log(static_cast<double>(m)));
  const double qp = q_p(spec, p);
  const Index d = sparsity_d(spec);
  const double beta = cfg.beta > 0.0 ? cfg.beta : cfg.power;
  for (Index n : cfg.n_grid) {
    ProblemSize ps{static_cast<double>(n), m, cfg.oracle_rank, report.oracle_sobolev, cfg.a};
    EnvelopeRow e;
    e.n = n;
    e.delta1 = lower_dense(ps, spec, p, qp, true);
    e.delta4 = m >= 2 ? lower_sparse(ps, spec, d) : 0.0;
    e.Delta_n = adaptive_upper_rate(ps, spec, cfg.A).delta_n;
    e.beta_rate = beta > 0.5 ? beta_example_rate(ps, beta) : std::numeric_limits<double>::quiet_NaN();
    report.envelope.push_back(e);
  }
  bool enough = true;
  try {
    report.slope = fit_rate_slope(report.rows);
  } catch (const Error&) {
    enough = false;
  }
  if (!enough) report.slope = {std::numeric_limits<double>::quiet_NaN(), 0.0, 0.0};
  return report;
}

/// Median of the successful replicate errors at each n.
inline std::map<Index, double> median_errors(const std::vector<RateRow>& rows) {
  std::map<Index, std::vector<double>> by_n;
  for (const RateRow& r : rows)
    if (r.failure.empty() && std::isfinite(r.sq_error)) by_n[r.n].push_back(r.sq_error);
  std::map<Index, double> out;
  for (auto& [n, v] : by_n) {
    std::sort(v.begin(), v.end());
    const std::size_t h = v.size() / 2;
    out[n] = v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
  }
  return out;
}

/// Writes <output>, <stem>_envelope.csv, <stem>_summary.csv and, if any row
/// failed, <stem>_failures.txt next to it.
inline void write_rate_report(const RateReport& rep, const std::string& output) {
  const std::filesystem::path path(output);
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path stem = path.parent_path() / path.stem();
  {
    std::ofstream out(path);
    require(out.good(), "cannot write " + output);
    out << std::setprecision(10);
    out << "n,replicate,sq_error,wall_ms,estimator\n";
    for (const RateRow& r : rep.rows)
      out << r.n << ',' << r.replicate << ',' << r.sq_error << ',' << std::fixed
          << std::setprecision(3) << r.wall_ms << std::defaultfloat << std::setprecision(10) << ','
          << r.estimator << '\n';
  }
  {
    std::ofstream out(stem.string() + "_envelope.csv");
    out << std::setprecision(10);
    out << "n,delta1,delta4,Delta_n,beta_rate\n";
    for (const EnvelopeRow& e : rep.envelope)
      out << e.n << ',' << e.delta1 << ',' << e.delta4 << ',' << e.Delta_n << ',' << e.beta_rate << '\n';
  }
  {
    std::ofstream out(stem.string() + "_summary.csv");
    out << std::setprecision(10);
    out << "n,mean_sq_error,median_sq_error,replicates\n";
    const auto med = median_errors(rep.rows);
    std::map<Index, std::pair<double, int>> mean;
    for (const RateRow& r : rep.rows)
      if (r.failure.empty() && std::isfinite(r.sq_error)) {
        mean[r.n].first += r.sq_error;
        mean[r.n].second += 1;
      }
    for (const auto& [n, s] : mean)
      out << n << ',' << s.first / s.second << ',' << med.at(n) << ',' << s.second << '\n';
    out << "# slope=" << rep.slope.slope << " stderr=" << rep.slope.stderr_
        << " oracle_sq_norm=" << rep.oracle_sq_norm << '\n';
  }
  bool failed = false;
  for (const RateRow& r : rep.rows) failed = failed || !r.failure.empty();
  if (failed) {
    std::ofstream out(stem.string() + "_failures.txt");
    for (const RateRow& r : rep.rows)
      if (!r.failure.empty()) out << "n=" << r.n << " replicate=" << r.replicate << ": " << r.failure << '\n';
  }
}

}  // namespace gsk
