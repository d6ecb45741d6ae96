#include "gsk/convex.hpp"
#include "gsk/experiment.hpp"
#include "gsk/packing.hpp"
#include "gsk/rates.hpp"
#include "gsk/restricted.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

using namespace gsk;

namespace {

struct GraphArgs {
  std::string source;
  double power = 1.0;

  void attach(CLI::App* app, bool required = true) {
    auto* opt = app->add_option("--graph", source, "graph file (Matrix Market or dense) or family such as circle:200");
    if (required) opt->required();
    app->add_option("--power", power, "exponent q of the smoothing operator W = L^q")->check(CLI::PositiveNumber);
  }

  SpectralDecomposition spectrum() const { return smoothing_operator(make_graph(source), power); }
};

// "3", "1,2,4" or "grid" (every value from 1 to m).
std::vector<Index> parse_index_list(const std::string& text, Index m, const char* what) {
  std::vector<Index> out;
  if (text == "grid") {
    for (Index k = 1; k <= m; ++k) out.push_back(k);
    return out;
  }
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    require(used == item.size() && v >= 1, std::string("bad ") + what + " value '" + item + "'");
    out.push_back(static_cast<Index>(v));
  }
  require(!out.empty(), std::string("empty ") + what + " list");
  return out;
}

void print_kv(const std::string& key, double value) {
  std::cout << key << '=' << std::setprecision(12) << value << '\n';
}

void run_spectra(const GraphArgs& g, double gamma, const std::string& out) {
  const auto spec = g.spectrum();
  const auto fbar = regularized_majorant(spec, gamma);
  print_kv("m", static_cast<double>(spec.size()));
  print_kv("k0", static_cast<double>(spec.k0()));
  print_kv("growth_c", spec.growth_c());
  print_kv("lambda_min_positive", spec.k0() <= spec.size() ? spec.lambda(spec.k0()) : 0.0);
  print_kv("lambda_max", spec.lambda_max());
  print_kv("gamma", gamma);
  if (out.empty()) return;
  std::ofstream f(out);
  require(f.good(), "cannot write " + out);
  f << std::setprecision(17) << "k,lambda,F,F_bar\n";
  for (Index k = 1; k <= spec.size(); ++k) {
    const double x = spec.lambda(k);
    f << k << ',' << x << ',' << spectral_function(spec, x) << ',' << fbar(x) << '\n';
  }
}

void run_kernel_info(const std::string& path, const GraphArgs& g) {
  const Matrix s = read_kernel(path);
  const bool with_graph = !g.source.empty();
  const auto spec = with_graph ? g.spectrum() : SpectralDecomposition::diagonal(Vector::Zero(s.rows()));
  require(spec.size() == s.rows(), "kernel and graph sizes differ");
  const KernelNorms n = norms(s, spec);
  print_kv("m", static_cast<double>(s.rows()));
  print_kv("rank", static_cast<double>(kernel_rank(s)));
  print_kv("nuclear", n.nuclear);
  print_kv("frobenius", n.frobenius);
  print_kv("operator", n.op);
  print_kv("l2_pi2", n.l2_pi2);
  if (with_graph) print_kv("sobolev_l2_pi2", n.sobolev_l2_pi2);
  print_kv("sup", n.sup);
}

void run_fit_convex(const std::string& data_path, const GraphArgs& g, const std::string& eps,
                    const std::string& epsbar, double a, double big_d, const std::string& out) {
  const auto spec = g.spectrum();
  const Dataset data = read_dataset_csv(data_path, spec.size(), a);
  ConvexConfig cfg;
  cfg.a = a;
  cfg.epsilon = eps == "auto" ? default_epsilon(data.n(), spec.size(), a, big_d) : std::stod(eps);
  Matrix s;
  if (epsbar == "grid") {
    const auto agg = aggregate_epsbar(data, spec, cfg);
    s = agg.kernel;
    print_kv("chosen_l", static_cast<double>(agg.chosen_l));
  } else {
    cfg.epsilon_bar = std::stod(epsbar);
    const auto [fit, rep] = solve_convex(data, spec, cfg);
    s = fit;
    print_kv("iterations", rep.iterations);
    print_kv("residual", rep.residual);
    print_kv("converged", rep.converged);
  }
  print_kv("epsilon", cfg.epsilon);
  print_kv("empirical_loss", empirical_loss(s, data));
  print_kv("rank", static_cast<double>(kernel_rank(s)));
  write_kernel(s, out);
}

void run_fit_restricted(const std::string& data_path, const GraphArgs& g, const std::string& r_text,
                        const std::string& l_text, double a, double K, double A, int restarts,
                        std::uint64_t seed, const std::string& out) {
  const auto spec = g.spectrum();
  const Index m = spec.size();
  const Dataset data = read_dataset_csv(data_path, m, a);
  const auto rs = parse_index_list(r_text, m, "r");
  const auto ls = parse_index_list(l_text, m, "l");
  Matrix s;
  if (rs.size() == 1 && ls.size() == 1) {
    RestrictedConfig cfg;
    cfg.r = rs.front();
    cfg.l = ls.front();
    cfg.a = a;
    cfg.restarts = restarts;
    cfg.seed = seed;
    const auto fit = restricted_ls(data, spec, cfg);
    s = fit.kernel;
    print_kv("loss", fit.loss);
  } else {
    SelectionConfig cfg;
    cfg.K = K;
    cfg.A = A;
    cfg.a = a;
    cfg.restarts = restarts;
    cfg.seed = seed;
    for (Index r : rs)
      for (Index l : ls) cfg.grid.push_back({r, l});
    const auto sel = select_model(data, spec, cfg);
    s = sel.kernel;
    print_kv("r_hat", static_cast<double>(sel.r_hat));
    print_kv("l_hat", static_cast<double>(sel.l_hat));
    print_kv("loss", empirical_loss(s, data));
  }
  write_kernel(s, out);
}

struct RatesArgs {
  double n = 1000;
  Index r = 1;
  double rho = 1.0;
  double a = 1.0;
  double p = 0.0;  // 0 means log m
  Index sparse_d = 0;
  double A = 1.0;
  double beta = 0.0;
};

void run_rates(const GraphArgs& g, const RatesArgs& in) {
  const auto spec = g.spectrum();
  const Index m = spec.size();
  ProblemSize ps{in.n, m, in.r, in.rho, in.a};
  ps.validate();
  const double p = in.p > 0.0 ? in.p : std::max(2.0, std::log(static_cast<double>(m)));
  const double qp = q_p(spec, p);
  const Index d = in.sparse_d > 0 ? in.sparse_d : sparsity_d(spec);
  print_kv("m", static_cast<double>(m));
  print_kv("p", p);
  print_kv("Q_p", qp);
  print_kv("d", static_cast<double>(d));
  print_kv("delta1", lower_dense(ps, spec, p, qp));
  print_kv("delta1_log", lower_dense(ps, spec, p, qp, true));
  print_kv("delta4", lower_sparse(ps, spec, d));
  const auto lb = l_bar_and_delta3(ps, spec, p, qp);
  print_kv("l_bar", static_cast<double>(lb.l_bar));
  print_kv("l_bar_value", lb.value);
  print_kv("delta3", lb.delta3);
  const auto up = adaptive_upper_rate(ps, spec, in.A);
  print_kv("l_tilde", static_cast<double>(up.l_tilde));
  print_kv("Delta_n", up.delta_n);
  if (in.beta > 0.5) {
    print_kv("beta_rate", beta_example_rate(ps, in.beta));
    print_kv("beta_upper_rate", beta_example_upper_rate(ps, in.beta, in.A));
  }
}

struct PackingArgs {
  Index l = 32;
  Index r = 1;
  double n = 1e4;
  double rho = 1.0;
  double a = 1.0;
  double p = 0.0;
  std::string mode = "dense";
  std::uint64_t seed = 0;
  long max_draws = 10000;
  std::size_t max_codes = 32;
  std::string out = "packing";
};

void run_packing(const GraphArgs& g, const PackingArgs& in, bool verify) {
  const auto spec = g.spectrum();
  const Index m = spec.size();
  ProblemSize ps{in.n, m, in.r, in.rho, in.a};
  const double p = in.p > 0.0 ? in.p : std::max(2.0, std::log(static_cast<double>(m)));
  const auto set = build_packing(ps, spec, in.l, p, parse_packing_mode(in.mode), in.seed, in.max_draws, in.max_codes);
  write_packing(set, in.out);
  print_kv("kappa", set.kappa);
  print_kv("cardinality", static_cast<double>(set.codes.size()));
  print_kv("filter_rate", set.filter_rate());
  if (!verify) return;
  const auto rep = verify_packing(set, ps, spec, in.n);
  write_packing_pairs_csv(rep, in.out + "/pairs.csv");
  print_kv("entry_violations", rep.entry_violations);
  print_kv("rank_violations", rep.rank_violations);
  print_kv("sobolev_violations", rep.sobolev_violations);
  print_kv("hamming_violations", rep.hamming_violations);
  print_kv("kl_violations", rep.kl_violations);
  print_kv("separation_violations", rep.separation_violations);
  print_kv("mean_kl", rep.mean_kl);
  print_kv("fano_level", rep.fano_level);
}

void run_experiment_cmd(const std::string& config, int threads) {
  const auto cfg = ExperimentConfig::from_file(ConfigFile::load(config));
  const auto rep = run_experiment(cfg, threads);
  write_rate_report(rep, cfg.output);
  int failed = 0;
  for (const auto& r : rep.rows) failed += !r.failure.empty();
  print_kv("rows", static_cast<double>(rep.rows.size()));
  print_kv("failed_rows", failed);
  print_kv("slope", rep.slope.slope);
  print_kv("slope_stderr", rep.slope.stderr_);
  std::cout << "output=" << cfg.output << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank estimation of graph-smooth kernels"};
  app.require_subcommand(1);

  GraphArgs spectra_graph;
  double gamma = 0.5;
  std::string spectra_out;
  auto* spectra = app.add_subcommand("spectra", "spectrum summary of the smoothing operator");
  spectra_graph.attach(spectra);
  spectra->add_option("--gamma", gamma, "regularity exponent of the majorant")->check(CLI::Range(0.0, 1.0));
  spectra->add_option("--out", spectra_out, "CSV with k,lambda,F,F_bar");

  auto* kernel = app.add_subcommand("kernel", "kernel utilities");
  kernel->require_subcommand(1);
  std::string info_path;
  GraphArgs info_graph;
  auto* info = kernel->add_subcommand("info", "print kernel norms as key=value lines");
  info->add_option("path", info_path)->required();
  info_graph.attach(info, false);
  GraphArgs gen_graph;
  Index gen_r = 1;
  double gen_rho = 1e9, gen_a = 1.0;
  std::string gen_profile = "smooth", gen_out;
  std::uint64_t gen_seed = 1;
  auto* gen = kernel->add_subcommand("generate", "random low-rank smooth oracle kernel");
  gen_graph.attach(gen);
  gen->add_option("--r", gen_r)->check(CLI::PositiveNumber);
  gen->add_option("--rho", gen_rho, "Sobolev radius");
  gen->add_option("--a", gen_a, "entry bound");
  gen->add_option("--profile", gen_profile, "smooth | flat | power:<s>");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--out", gen_out)->required();

  std::string sample_kernel, sample_noise = "none", sample_out;
  Index sample_n = 1000;
  double sample_a = 1.0;
  std::uint64_t sample_seed = 0;
  auto* sample = app.add_subcommand("sample", "draw a dataset from a kernel");
  sample->add_option("--kernel", sample_kernel)->required();
  sample->add_option("--n", sample_n)->check(CLI::PositiveNumber);
  sample->add_option("--noise", sample_noise, "none | uniform:<s> | sign:<s> | binary_packing");
  sample->add_option("--a", sample_a);
  sample->add_option("--seed", sample_seed);
  sample->add_option("--out", sample_out)->required();

  auto* fit = app.add_subcommand("fit", "fit an estimator to a dataset");
  fit->require_subcommand(1);
  GraphArgs cv_graph;
  std::string cv_data, cv_eps = "auto", cv_epsbar = "0", cv_out;
  double cv_a = 1.0, cv_big_d = 32.0;
  auto* convex = fit->add_subcommand("convex", "nuclear plus Sobolev penalized least squares");
  cv_graph.attach(convex);
  convex->add_option("--data", cv_data)->required();
  convex->add_option("--eps", cv_eps, "trace-norm weight or auto");
  convex->add_option("--epsbar", cv_epsbar, "Sobolev weight or grid (sample-split aggregation)");
  convex->add_option("--a", cv_a);
  convex->add_option("--bigD", cv_big_d, "constant of the automatic trace-norm weight");
  convex->add_option("--out", cv_out)->required();
  GraphArgs rs_graph;
  std::string rs_data, rs_r = "1", rs_l = "1", rs_out;
  double rs_a = 1.0, rs_K = 1.0, rs_A = 1.0;
  int rs_restarts = 16;
  std::uint64_t rs_seed = 0;
  auto* restricted = fit->add_subcommand("restricted", "rank and eigenbasis restricted least squares");
  rs_graph.attach(restricted);
  restricted->add_option("--data", rs_data)->required();
  restricted->add_option("--r", rs_r, "rank cap, comma list, or grid");
  restricted->add_option("--l", rs_l, "eigenbasis cut, comma list, or grid");
  restricted->add_option("--a", rs_a);
  restricted->add_option("--K", rs_K);
  restricted->add_option("--A", rs_A);
  restricted->add_option("--restarts", rs_restarts);
  restricted->add_option("--seed", rs_seed);
  restricted->add_option("--out", rs_out)->required();

  GraphArgs rates_graph;
  RatesArgs rates_args;
  auto* rates = app.add_subcommand("rates", "upper and lower rate calculators");
  rates_graph.attach(rates);
  rates->add_option("--n", rates_args.n)->required();
  rates->add_option("--r", rates_args.r);
  rates->add_option("--rho", rates_args.rho);
  rates->add_option("--a", rates_args.a);
  auto* p_opt = rates->add_option("--p", rates_args.p, "moment order for the coherence term (default log m)");
  rates->add_option("--sparse-d", rates_args.sparse_d, "override the support count d")->excludes(p_opt);
  rates->add_option("--A", rates_args.A);
  rates->add_option("--beta", rates_args.beta, "also print the power-spectrum example rates");

  GraphArgs packing_graph;
  PackingArgs packing_args;
  auto* packing = app.add_subcommand("packing", "lower-bound packing sets");
  packing->require_subcommand(1);
  auto* build = packing->add_subcommand("build", "construct and write a packing set");
  auto* verify = packing->add_subcommand("verify", "construct, write and verify a packing set");
  for (auto* sub : {build, verify}) {
    packing_graph.attach(sub);
    sub->add_option("--l", packing_args.l);
    sub->add_option("--r", packing_args.r);
    sub->add_option("--n", packing_args.n);
    sub->add_option("--rho", packing_args.rho);
    sub->add_option("--a", packing_args.a);
    sub->add_option("--p", packing_args.p);
    sub->add_option("--mode", packing_args.mode, "dense | sparse");
    sub->add_option("--seed", packing_args.seed);
    sub->add_option("--max-draws", packing_args.max_draws);
    sub->add_option("--max-codes", packing_args.max_codes);
    sub->add_option("--out", packing_args.out);
  }

  std::string exp_config;
  int exp_threads = 0;
  auto* experiment = app.add_subcommand("experiment", "Monte Carlo rate experiments");
  experiment->require_subcommand(1);
  auto* run = experiment->add_subcommand("run", "run an experiment from a config file");
  run->add_option("--config", exp_config)->required()->check(CLI::ExistingFile);
  run->add_option("--threads", exp_threads, "worker threads (default RANDKIT_THREADS or 1)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (spectra->parsed()) {
      run_spectra(spectra_graph, gamma, spectra_out);
    } else if (info->parsed()) {
      run_kernel_info(info_path, info_graph);
    } else if (gen->parsed()) {
      const auto spec = gen_graph.spectrum();
      const auto [s, profile] = generate_oracle(spec, gen_r, gen_rho, gen_a, SmoothnessProfile::parse(gen_profile), gen_seed);
      write_kernel(s, gen_out);
      print_kv("rank", static_cast<double>(profile.r));
      print_kv("sobolev_l2_pi2", sobolev_norm_l2_pi2(s, spec));
      print_kv("sup", s.cwiseAbs().maxCoeff());
    } else if (sample->parsed()) {
      const Matrix s = read_kernel(sample_kernel);
      write_dataset_csv(draw_dataset(s, sample_a, NoiseModel::parse(sample_noise), sample_n, sample_seed), sample_out);
      print_kv("n", static_cast<double>(sample_n));
    } else if (convex->parsed()) {
      run_fit_convex(cv_data, cv_graph, cv_eps, cv_epsbar, cv_a, cv_big_d, cv_out);
    } else if (restricted->parsed()) {
      run_fit_restricted(rs_data, rs_graph, rs_r, rs_l, rs_a, rs_K, rs_A, rs_restarts, rs_seed, rs_out);
    } else if (rates->parsed()) {
      run_rates(rates_graph, rates_args);
    } else if (build->parsed() || verify->parsed()) {
      run_packing(packing_graph, packing_args, verify->parsed());
    } else if (run->parsed()) {
      run_experiment_cmd(exp_config, exp_threads);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
