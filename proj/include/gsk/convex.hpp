#pragma once

#include "gsk/common.hpp"
#include "gsk/kernel.hpp"
#include "gsk/lowrank.hpp"
#include "gsk/sampling.hpp"
#include "gsk/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

namespace gsk {

struct ConvexConfig {
  double epsilon = 0.0;      // trace-norm weight
  double epsilon_bar = 0.0;  // Sobolev weight
  double a = 1.0;            // box radius
  int max_iters = 50000;
  double rel_tol = 1e-10;
  double opt_tol = 1e-6;
  bool certify = true;  // compute the subgradient certificate at the end

  void validate() const {
    require(epsilon >= 0.0 && std::isfinite(epsilon), "convex: epsilon must be finite and >= 0");
    require(epsilon_bar >= 0.0 && std::isfinite(epsilon_bar),
            "convex: epsilon_bar must be finite and >= 0");
    require(a > 0.0, "convex: box radius must be positive");
    require(max_iters >= 1, "convex: max_iters must be positive");
    require(rel_tol > 0.0 && opt_tol > 0.0, "convex: tolerances must be positive");
  }
};

struct SolveReport {
  std::vector<double> objective;  // running minimum of the objective per iteration
  double residual = kInf;         // certificate residual (fixed-point residual if not certified)
  double fixed_point_residual = kInf;
  int iterations = 0;
  bool converged = false;
  bool box_active = false;
};

/// Objective pieces for n^-1 sum (y - S(X))^2 + eps ||S||_1 + epsbar m^-2 tr(W S^2).
class ConvexProblem {
public:
  ConvexProblem(const CellSummary& cells, const SpectralDecomposition& spec, const ConvexConfig& cfg)
      : cells_(cells), spec_(spec), cfg_(cfg) {
    cfg.validate();
    require(cells.m() == spec.size(), "convex: dataset and operator dimensions differ");
    const double m = static_cast<double>(spec.size());
    sob_scale_ = cfg.epsilon_bar / (m * m);
  }

  double smooth_value(const Matrix& s) const {
    return cells_.loss(s) + sob_scale_ * sobolev_energy(s, spec_);
  }

  double value(const Matrix& s) const {
    return smooth_value(s) + (cfg_.epsilon > 0.0 ? cfg_.epsilon * nuclear_norm(s) : 0.0);
  }

  /// Gradient of data fit plus Sobolev term. tr(W S^2) differentiates to
  /// WS + SW, which agrees with 2WS on symmetric directions.
  Matrix smooth_gradient(const Matrix& s) const {
    Matrix g = cells_.gradient(s);
    if (sob_scale_ > 0.0) {
      const Matrix& phi = spec_.eigenvectors();
      const Matrix ws = phi * spec_.eigenvalues().asDiagonal() * (phi.transpose() * s);
      g += sob_scale_ * (ws + ws.transpose());
    }
    return g;
  }

  const CellSummary& cells() const { return cells_; }
  const SpectralDecomposition& spec() const { return spec_; }
  const ConvexConfig& config() const { return cfg_; }
  double sobolev_scale() const { return sob_scale_; }

private:
  const CellSummary& cells_;
  const SpectralDecomposition& spec_;
  ConvexConfig cfg_;
  double sob_scale_ = 0.0;
};

struct Certificate {
  Matrix subgradient;  // V in the trace-norm subdifferential at S
  Matrix normal;       // N in the normal cone of the box at S
  double stationarity = 0.0;      // ||grad f + eps V + N||_F
  double complementarity = 0.0;   // eps (||S||_1 - <V, S>)
  double residual() const { return stationarity + complementarity; }
};

namespace detail {

// For fixed V, the best box multiplier: cancels the gradient where the sign
// is admissible, zero elsewhere. Returns the multiplier.
inline Matrix best_normal(const Matrix& s, const Matrix& r, double a) {
  Matrix n = Matrix::Zero(s.rows(), s.cols());
  for (Index j = 0; j < s.cols(); ++j)
    for (Index i = 0; i < s.rows(); ++i) {
      if (s(i, j) >= a) n(i, j) = std::max(-r(i, j), 0.0);
      else if (s(i, j) <= -a) n(i, j) = std::min(-r(i, j), 0.0);
    }
  return n;
}

}  // namespace detail

/// Builds V = sign(S) + P_perp M P_perp with ||P_perp M P_perp|| <= 1 and a box
/// multiplier N, alternating between the two to reduce the stationarity gap. Any
/// such pair is a valid witness, so the smallest residual over a few support
/// cutoffs is reported.
inline Certificate certify_solution(const ConvexProblem& problem, const Matrix& s,
                                    const std::optional<Matrix>& hint = std::nullopt) {
  const double eps = problem.config().epsilon;
  const double a = problem.config().a;
  const Matrix g = problem.smooth_gradient(s);
  const Index m = s.rows();

  if (eps == 0.0) {
    Certificate c;
    c.subgradient = Matrix::Zero(m, m);
    c.normal = detail::best_normal(s, g, a);
    c.stationarity = (g + c.normal).norm();
    return c;
  }

  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s));
  const Vector& mu = es.eigenvalues();
  const Matrix& psi = es.eigenvectors();
  const double top = mu.cwiseAbs().maxCoeff();
  const double nuclear = mu.cwiseAbs().sum();

  std::vector<double> cutoffs{0.0};
  for (int k = 14; k >= 4; k -= 2) cutoffs.push_back(top * std::pow(10.0, -k));

  Certificate best;
  bool have = false;
  std::vector<std::size_t> seen;
  for (double cutoff : cutoffs) {
    std::vector<Index> on, off;
    for (Index j = 0; j < m; ++j) (std::abs(mu(j)) > cutoff ? on : off).push_back(j);
    // Cutoffs are nested, so equal support sizes mean equal splits.
    if (std::find(seen.begin(), seen.end(), on.size()) != seen.end()) continue;
    seen.push_back(on.size());
    Matrix sign_part = Matrix::Zero(m, m);
    for (Index j : on) sign_part.noalias() += (mu(j) > 0 ? 1.0 : -1.0) * psi.col(j) * psi.col(j).transpose();
    Matrix perp(m, static_cast<Index>(off.size()));
    for (std::size_t c = 0; c < off.size(); ++c) perp.col(static_cast<Index>(c)) = psi.col(off[c]);

    Matrix target = hint ? *hint : Matrix(-g / eps);
    double previous = kInf;
    // Exact block minimization in (V, N) of a convex least-squares gap.
    for (int round = 0; round < 400; ++round) {
      Certificate c;
      Matrix v = sign_part;
      if (perp.cols() > 0) {
        Matrix inner = perp.transpose() * target * perp;
        Eigen::SelfAdjointEigenSolver<Matrix> ies(symmetrize(inner));
        const Vector clipped = ies.eigenvalues().cwiseMax(-1.0).cwiseMin(1.0);
        v.noalias() += perp * (ies.eigenvectors() * clipped.asDiagonal() *
                               ies.eigenvectors().transpose()) * perp.transpose();
      }
      const Matrix r = g + eps * v;
      c.subgradient = v;
      c.normal = detail::best_normal(s, r, a);
      c.stationarity = (r + c.normal).norm();
      c.complementarity = std::max(0.0, eps * (nuclear - v.cwiseProduct(s).sum()));
      const double value = c.residual();
      const Matrix next_target = -(g + c.normal) / eps;
      if (!have || value < best.residual()) {
        best = std::move(c);
        have = true;
      }
      if (value > (1.0 - 1e-3) * previous) break;
      previous = value;
      target = next_target;
    }
  }
  return best;
}

namespace detail {

struct ObjectiveTracker {
  std::vector<double>& trace;
  double rel_tol;
  int calm = 0;
  double last = kInf;

  bool push(double value) {
    const double shown = trace.empty() ? value : std::min(trace.back(), value);
    trace.push_back(shown);
    const double change = std::abs(value - last) / std::max(1.0, std::abs(value));
    calm = change < rel_tol ? calm + 1 : 0;
    last = value;
    return calm >= 10;
  }
};

// Davis-Yin on the box-free problem, carried out in the eigenbasis of W where
// the Sobolev prox is diagonal:
//   g = Sobolev quadratic (prox), h = trace norm (prox), f = data fit (gradient).
// The h-point is exactly low rank and is what gets reported.
class BoxFreeSplitting {
public:
  BoxFreeSplitting(const ConvexProblem& problem, const Matrix& start)
      : problem_(problem), phi_(problem.spec().eigenvectors()), lam_(problem.spec().eigenvalues()) {
    const Index m = phi_.rows();
    const double lip = problem.cells().lipschitz();
    step_ = lip > 0.0 ? 1.5 / lip : 1.0;
    shrink_.resize(m, m);
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < m; ++i)
        shrink_(i, j) = 1.0 / (1.0 + step_ * problem.sobolev_scale() * (lam_(i) + lam_(j)));
    // Start so that the Sobolev prox of z returns the starting point.
    h_coords_ = phi_.transpose() * start * phi_;
    z_ = h_coords_.cwiseQuotient(shrink_);
    y_ = h_coords_;
  }

  /// Iterates until the objective is calm and the fixed-point residual is at
  /// most `target`, or `budget` iterations pass. Returns iterations used.
  int run(int budget, double target, ObjectiveTracker& tracker) {
    const ConvexConfig& cfg = problem_.config();
    for (int it = 1; it <= budget; ++it) {
      const Matrix g_coords = z_.cwiseProduct(shrink_);
      const Matrix g_point = phi_ * g_coords * phi_.transpose();
      const Matrix grad_coords = phi_.transpose() * problem_.cells().gradient(g_point) * phi_;
      y_ = 2.0 * g_coords - z_ - step_ * grad_coords;
      const ThresholdedEigen h = nuclear_prox_factored(symmetrize(y_), step_ * cfg.epsilon);
      h_coords_ = expand(h);
      z_ += h_coords_ - g_coords;

      // Objective at the h-point from its factors; tr(W U D^2 U') needs only
      // the diagonal of U' Lambda U.
      const Matrix h_vecs = phi_ * h.vectors;
      const Matrix h_point = h_vecs * h.values.asDiagonal() * h_vecs.transpose();
      double sob = 0.0;
      for (Index k = 0; k < h.values.size(); ++k)
        sob += h.values(k) * h.values(k) * (lam_.array() * h.vectors.col(k).array().square()).sum();
      const double value = problem_.cells().loss(h_point) + problem_.sobolev_scale() * sob +
                           cfg.epsilon * h.values.cwiseAbs().sum();

      fixed_point_residual_ = (h_coords_ - g_coords).norm() / step_;
      const bool calm = tracker.push(value);
      if (calm && fixed_point_residual_ <= target) return it;
    }
    return budget;
  }

  Matrix solution() const { return symmetrize(phi_ * h_coords_ * phi_.transpose()); }

  /// (y - h) / (step eps): a trace-norm subgradient at the h-point.
  Matrix dual_hint() const {
    const double eps = problem_.config().epsilon;
    return symmetrize(phi_ * ((y_ - h_coords_) / (step_ * eps)) * phi_.transpose());
  }

  double fixed_point_residual() const { return fixed_point_residual_; }

private:
  const ConvexProblem& problem_;
  const Matrix& phi_;
  const Vector& lam_;
  double step_ = 1.0;
  Matrix shrink_;
  Matrix z_, y_, h_coords_;
  double fixed_point_residual_ = kInf;
};

// Generalized forward-backward with the data fit as smooth part and three
// proximal terms (trace norm, Sobolev quadratic, box), equal weights.
class BoxedSplitting {
public:
  BoxedSplitting(const ConvexProblem& problem, const Matrix& start)
      : problem_(problem), phi_(problem.spec().eigenvectors()) {
    const Index m = phi_.rows();
    const Vector& lam = problem.spec().eigenvalues();
    const double lip = problem.cells().lipschitz();
    step_ = lip > 0.0 ? 1.0 / lip : 1.0;
    shrink_.resize(m, m);
    for (Index j = 0; j < m; ++j)
      for (Index i = 0; i < m; ++i)
        shrink_(i, j) = 1.0 / (1.0 + (step_ / kWeight) * problem.sobolev_scale() * (lam(i) + lam(j)));
    x_ = truncate(start, problem.config().a);
    z_nuc_ = z_sob_ = z_box_ = x_;
  }

  int run(int budget, double target, ObjectiveTracker& tracker) {
    const ConvexConfig& cfg = problem_.config();
    for (int it = 1; it <= budget; ++it) {
      const Matrix base = 2.0 * x_ - step_ * problem_.cells().gradient(x_);
      z_nuc_ += expand(nuclear_prox_factored(symmetrize(base - z_nuc_), (step_ / kWeight) * cfg.epsilon)) - x_;
      z_sob_ += phi_ * (phi_.transpose() * (base - z_sob_) * phi_).cwiseProduct(shrink_) *
                    phi_.transpose() - x_;
      z_box_ += truncate(base - z_box_, cfg.a) - x_;
      const Matrix next = symmetrize(kWeight * (z_nuc_ + z_sob_ + z_box_));
      fixed_point_residual_ = (next - x_).norm() / step_;
      x_ = next;
      const bool calm = tracker.push(problem_.value(truncate(x_, cfg.a)));
      if (calm && fixed_point_residual_ <= target) return it;
    }
    return budget;
  }

  /// Clamped iterate, with entries within one step's movement of the box
  /// boundary placed on it so the box multiplier can see them.
  Matrix solution() const {
    const double a = problem_.config().a;
    const double width = std::max(1e-12 * a, step_ * fixed_point_residual_);
    Matrix s = truncate(x_, a);
    for (Index j = 0; j < s.cols(); ++j)
      for (Index i = 0; i < s.rows(); ++i)
        if (std::abs(s(i, j)) >= a - width) s(i, j) = std::copysign(a, s(i, j));
    return s;
  }
  double fixed_point_residual() const { return fixed_point_residual_; }

private:
  static constexpr double kWeight = 1.0 / 3.0;
  const ConvexProblem& problem_;
  const Matrix& phi_;
  double step_ = 1.0;
  Matrix shrink_;
  Matrix x_, z_nuc_, z_sob_, z_box_;
  double fixed_point_residual_ = kInf;
};

// Runs a splitting, certifying at each stop and tightening the stopping
// target until the certificate passes or the budget runs out.
template <class Splitting, class HintFn>
bool drive(Splitting& split, const ConvexProblem& problem, int& budget, ObjectiveTracker& tracker,
           SolveReport& report, HintFn hint_of) {
  const ConvexConfig& cfg = problem.config();
  double target = cfg.opt_tol;
  while (budget > 0) {
    const int used = split.run(budget, target, tracker);
    budget -= used;
    report.iterations += used;
    report.fixed_point_residual = split.fixed_point_residual();
    const bool stopped = split.fixed_point_residual() <= target && tracker.calm >= 10;
    if (!stopped) return false;
    if (!cfg.certify) {
      report.residual = split.fixed_point_residual();
      return true;
    }
    const Matrix s = truncate(split.solution(), cfg.a);
    report.residual = certify_solution(problem, s, hint_of(split)).residual();
    if (report.residual <= cfg.opt_tol) return true;
    target *= 0.25;
    if (target < 1e-16) return false;
  }
  return false;
}

}  // namespace detail

/// Minimizes n^-1 sum (y_j - S(X_j))^2 + eps ||S||_1 + epsbar m^-2 tr(W S^2)
/// over symmetric S with |S(u,v)| <= a.
///
/// The box-free problem is solved first; if its minimizer already lies in the
/// box it is the constrained minimizer too. Otherwise a second splitting that
/// carries the box as a fourth term takes over from that point.
inline std::pair<Matrix, SolveReport> solve_convex(const CellSummary& cells,
                                                   const SpectralDecomposition& spec,
                                                   const ConvexConfig& cfg,
                                                   const Matrix* warm_start = nullptr) {
  const ConvexProblem problem(cells, spec, cfg);
  const Index m = spec.size();
  const Matrix start = warm_start ? truncate(*warm_start, cfg.a) : Matrix::Zero(m, m);

  SolveReport report;
  detail::ObjectiveTracker tracker{report.objective, cfg.rel_tol};
  int budget = cfg.max_iters;

  detail::BoxFreeSplitting free_split(problem, start);
  const auto free_hint = [&](const detail::BoxFreeSplitting& sp) -> std::optional<Matrix> {
    if (cfg.epsilon > 0.0) return sp.dual_hint();
    return std::nullopt;
  };
  // Solve box-free first; certification only makes sense once the box is known inactive.
  ConvexConfig probe = cfg;
  probe.certify = false;
  const ConvexProblem probe_problem(cells, spec, probe);
  report.converged = detail::drive(free_split, probe_problem, budget, tracker, report, free_hint);
  Matrix s;
  if (free_split.solution().cwiseAbs().maxCoeff() <= cfg.a) {
    if (cfg.certify && report.converged)
      report.converged = detail::drive(free_split, problem, budget, tracker, report, free_hint);
    s = truncate(free_split.solution(), cfg.a);
    if (cfg.certify && !report.converged)
      report.residual = certify_solution(problem, s, free_hint(free_split)).residual();
  } else {
    report.box_active = true;
    detail::BoxedSplitting boxed(problem, free_split.solution());
    tracker.calm = 0;
    const auto no_hint = [](const detail::BoxedSplitting&) -> std::optional<Matrix> {
      return std::nullopt;
    };
    report.converged = detail::drive(boxed, problem, budget, tracker, report, no_hint);
    s = boxed.solution();
    if (cfg.certify && !report.converged) report.residual = certify_solution(problem, s).residual();
  }
  if (!std::isfinite(s.sum())) throw NumericalError("convex solver produced non-finite values");
  return {std::move(s), std::move(report)};
}

inline std::pair<Matrix, SolveReport> solve_convex(const Dataset& data,
                                                   const SpectralDecomposition& spec,
                                                   const ConvexConfig& cfg) {
  data.validate();
  require(data.m == spec.size(), "convex: dataset and operator dimensions differ");
  return solve_convex(CellSummary(data), spec, cfg);
}

/// Objective value of the convex program at S (no feasibility check).
inline double convex_objective(const Dataset& data, const SpectralDecomposition& spec,
                               const ConvexConfig& cfg, const Matrix& s) {
  CellSummary cells(data);
  return ConvexProblem(cells, spec, cfg).value(s);
}

/// t + 3 log(2 log2 n + log2(lambda_m / lambda_tilde) / 2 + 2).
inline double union_bound_level(double t, Index n, double lambda_max, double lambda_tilde) {
  require(n >= 1, "n must be positive");
  require(lambda_tilde > 0.0 && lambda_max >= lambda_tilde, "need 0 < lambda_tilde <= lambda_max");
  return t + 3.0 * std::log(2.0 * std::log2(static_cast<double>(n)) +
                            0.5 * std::log2(lambda_max / lambda_tilde) + 2.0);
}

struct OracleBoundInputs {
  double epsilon = 0.0;
  double epsilon_bar = 0.0;
  double C = 1.0;
  double t = 1.0;
  Index n = 1;
  double a = 1.0;
  double lambda_tilde = 0.0;
};

/// Right-hand side of the oracle inequality for the doubly penalized estimator.
inline double convex_oracle_bound(const Matrix& s_oracle, const Matrix& s_star,
                                  const SpectralDecomposition& spec, const MajorantFunction& fbar,
                                  const OracleBoundInputs& in) {
  const Index m = spec.size();
  require_kernel(s_oracle, m, "oracle bound");
  require_kernel(s_star, m, "oracle bound");
  require(spec.k0() <= m, "oracle bound: W has no positive eigenvalue");
  require(in.lambda_tilde > 0.0 && in.lambda_tilde <= spec.lambda(spec.k0()),
          "oracle bound: lambda_tilde must lie in (0, lambda_k0]");
  require(in.epsilon_bar >= 0.0 && in.epsilon_bar <= 1.0 / in.lambda_tilde,
          "oracle bound: epsilon_bar must lie in [0, 1/lambda_tilde]");
  const double md = static_cast<double>(m);
  const double level = union_bound_level(in.t, in.n, spec.lambda_max(), in.lambda_tilde);
  double out = l2_pi2_distance_sq(s_oracle, s_star) +
               in.C * in.a * in.a * level / static_cast<double>(in.n);
  const SignSupport support = sign_and_support(s_oracle);
  if (support.rank == 0) return out;
  double coherence = 0.0;
  if (in.epsilon_bar == 0.0) {
    coherence = static_cast<double>(support.rank);
  } else {
    const CoherenceMajorant phibar(CoherenceFunction(support, spec),
                                   [&fbar](double x) { return fbar(x); });
    coherence = phibar(1.0 / in.epsilon_bar);
  }
  out += in.C * md * md * in.epsilon * in.epsilon * coherence;
  out += in.epsilon_bar * sobolev_energy(s_oracle, spec) / (md * md);
  return out;
}

/// Grid of Sobolev weights 1/lambda_l for l = k0..m, then 0 (l = m + 1).
struct EpsbarGrid {
  std::vector<Index> l;
  std::vector<double> epsilon_bar;
};

inline EpsbarGrid epsbar_grid(const SpectralDecomposition& spec) {
  EpsbarGrid grid;
  for (Index l = spec.k0(); l <= spec.size() + 1; ++l) {
    grid.l.push_back(l);
    grid.epsilon_bar.push_back(l <= spec.size() ? 1.0 / spec.lambda(l) : 0.0);
  }
  return grid;
}

struct AggregateResult {
  Matrix kernel;
  Index chosen_l = 0;
  std::vector<Index> l;
  std::vector<double> validation_loss;
  std::vector<Matrix> fits;  // one per grid entry, only when requested
};

/// Sample-split selection of the Sobolev weight: fit on the first floor(n/2)+1
/// observations for each grid value, keep the fit with the smallest empirical
/// loss on the rest (ties to the smallest l). Equal grid values share one fit.
/// Fits run along the grid with warm starts.
inline AggregateResult aggregate_epsbar(const Dataset& data, const SpectralDecomposition& spec,
                                        const ConvexConfig& base, bool keep_fits = false) {
  data.validate();
  require(data.n() >= 4, "aggregate: needs at least 4 observations");
  require(data.m == spec.size(), "aggregate: dataset and operator dimensions differ");
  const Index n_train = data.n() / 2 + 1;
  require(n_train < data.n(), "aggregate: degenerate split");

  Dataset train{{data.samples.begin(), data.samples.begin() + n_train}, data.m, data.a};
  Dataset valid{{data.samples.begin() + n_train, data.samples.end()}, data.m, data.a};
  const CellSummary cells(train);
  const EpsbarGrid grid = epsbar_grid(spec);

  AggregateResult out;
  out.l = grid.l;
  Matrix current = Matrix::Zero(data.m, data.m);
  double current_bar = -1.0;
  double current_loss = kInf;
  double best_loss = kInf;
  for (std::size_t i = 0; i < grid.l.size(); ++i) {
    if (grid.epsilon_bar[i] != current_bar) {
      ConvexConfig cfg = base;
      cfg.epsilon_bar = grid.epsilon_bar[i];
      auto fit = solve_convex(cells, spec, cfg, &current);
      current = std::move(fit.first);
      current_bar = grid.epsilon_bar[i];
      current_loss = empirical_loss(current, valid);
    }
    out.validation_loss.push_back(current_loss);
    if (keep_fits) out.fits.push_back(current);
    if (current_loss < best_loss) {
      best_loss = current_loss;
      out.kernel = current;
      out.chosen_l = grid.l[i];
    }
  }
  return out;
}

}  // namespace gsk
