#pragma once

#include "gsk/common.hpp"
#include "gsk/kernel.hpp"
#include "gsk/random.hpp"
#include "gsk/sampling.hpp"
#include "gsk/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace gsk {

struct RestrictedConfig {
  Index r = 1;
  Index l = 1;
  double a = 1.0;
  int restarts = 16;
  int max_iters = 5000;
  double tol = 1e-13;  // relative loss decrease that counts as progress
  std::uint64_t seed = 0;

  void validate(Index m) const {
    require(r >= 1 && r <= m, "restricted: rank cap must lie in [1, m]");
    require(l >= 1 && l <= m, "restricted: eigenbasis cut must lie in [1, m]");
    require(a > 0.0, "restricted: bound a must be positive");
    require(restarts >= 1, "restricted: need at least one restart");
    require(max_iters >= 1 && tol > 0.0, "restricted: invalid iteration controls");
  }
};

struct RestrictedResult {
  Matrix kernel;        // truncated estimate T^a
  Matrix untruncated;   // T, supported on the leading l x l block of the eigenbasis
  Matrix coefficients;  // T in the eigenbasis (l x l)
  double loss = kInf;
  int best_restart = 0;
};

namespace detail {

/// Least squares through the entrywise clamp, as a function of the eigenbasis
/// coefficients C with T = Phi_l C Phi_l'.
class ClampedLoss {
public:
  ClampedLoss(const CellSummary& cells, const Matrix& basis, double a)
      : cells_(cells), basis_(basis), a_(a) {}

  Matrix expand(const Matrix& c) const { return basis_ * c * basis_.transpose(); }

  double value(const Matrix& c) const { return cells_.loss(truncate(expand(c), a_)); }

  // Clamp derivative is taken as 1 on the closed box and 0 outside.
  Matrix gradient(const Matrix& c) const {
    const Matrix t = expand(c);
    Matrix g = cells_.gradient(truncate(t, a_));
    for (Index j = 0; j < t.cols(); ++j)
      for (Index i = 0; i < t.rows(); ++i)
        if (std::abs(t(i, j)) > a_) g(i, j) = 0.0;
    return symmetrize(basis_.transpose() * g * basis_);
  }

private:
  const CellSummary& cells_;
  const Matrix& basis_;
  double a_;
};

/// Keep the `rank` eigenvalues of largest magnitude, then scale into the
/// Frobenius ball of the given radius.
inline Matrix project_rank_ball(const Matrix& c, Index rank, double radius) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(symmetrize(c));
  const Vector& mu = eig.eigenvalues();
  std::vector<Index> order(mu.size());
  for (Index i = 0; i < mu.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](Index x, Index y) { return std::abs(mu(x)) > std::abs(mu(y)); });
  const Index keep = std::min<Index>(rank, mu.size());
  Matrix out = Matrix::Zero(c.rows(), c.cols());
  double norm_sq = 0.0;
  for (Index k = 0; k < keep; ++k) {
    const Index i = order[k];
    out.noalias() += mu(i) * eig.eigenvectors().col(i) * eig.eigenvectors().col(i).transpose();
    norm_sq += mu(i) * mu(i);
  }
  const double norm = std::sqrt(norm_sq);
  if (norm > radius) out *= radius / norm;
  return symmetrize(out);
}

/// Monotone projected gradient with an adaptive step (grow on success,
/// halve until the quadratic upper model holds).
inline std::pair<Matrix, double> projected_descent(const ClampedLoss& f, Matrix c, Index rank,
                                                   double radius, double step0,
                                                   const RestrictedConfig& cfg) {
  c = project_rank_ball(c, rank, radius);
  double value = f.value(c);
  double step = step0;
  int calm = 0;
  for (int it = 0; it < cfg.max_iters; ++it) {
    const Matrix g = f.gradient(c);
    bool moved = false;
    step *= 2.0;
    for (int tries = 0; tries < 60; ++tries) {
      const Matrix next = project_rank_ball(c - step * g, rank, radius);
      const Matrix d = next - c;
      const double dist_sq = d.squaredNorm();
      if (dist_sq == 0.0) break;
      const double next_value = f.value(next);
      if (next_value <= value + (g.array() * d.array()).sum() + 0.5 / step * dist_sq &&
          next_value <= value) {
        const double drop = value - next_value;
        c = next;
        value = next_value;
        moved = true;
        calm = drop <= cfg.tol * std::max(1.0, std::abs(value)) ? calm + 1 : 0;
        break;
      }
      step *= 0.5;
    }
    if (!moved || calm >= 5) break;
  }
  return {c, value};
}

// Unbiased cellwise estimate of S from the pooled observations.
inline Matrix moment_estimate(const CellSummary& cells) {
  const double m = static_cast<double>(cells.m());
  const double scale = m * m / static_cast<double>(cells.n);
  Matrix est = cells.sums * (0.5 * scale);
  est.diagonal() = cells.sums.diagonal() * scale;
  return est;
}

}  // namespace detail

/// Least squares over truncations of rank-capped kernels supported on the
/// first l eigenvectors, with ||T||_{L2(Pi^2)} <= a. Best of several local
/// searches: a moment-based start, any caller-supplied starts (l x l
/// coefficient matrices), then seeded random starts.
inline RestrictedResult restricted_ls(const CellSummary& cells, const SpectralDecomposition& spec,
                                      const RestrictedConfig& cfg,
                                      const std::vector<Matrix>& extra_starts = {}) {
  const Index m = spec.size();
  cfg.validate(m);
  require(cells.m() == m, "restricted: dataset and operator dimensions differ");
  const Matrix basis = spec.eigenvectors().leftCols(cfg.l);
  const detail::ClampedLoss f(cells, basis, cfg.a);
  const Index rank = std::min(cfg.r, cfg.l);
  const double radius = cfg.a * static_cast<double>(m);
  const double lip = cells.lipschitz();
  const double step0 = lip > 0.0 ? 1.0 / lip : 1.0;

  std::vector<Matrix> starts;
  starts.push_back(basis.transpose() * detail::moment_estimate(cells) * basis);
  for (const Matrix& s : extra_starts) {
    require(s.rows() == cfg.l && s.cols() == cfg.l, "restricted: start must be l x l");
    starts.push_back(s);
  }
  // The clamp makes larger coefficients attractive once entries saturate, so
  // restarts also cover inflated moment starts and log-uniform scales up to the radius.
  const Matrix moment = starts.front();
  for (double inflate : {2.0, 4.0})
    if (moment.norm() * inflate <= radius) starts.push_back(inflate * moment);
  CounterRng rng(cfg.seed);
  const double start_scale = std::max(moment.norm(), 1e-3 * radius);
  const double span = std::log(std::max(radius / (0.25 * start_scale), 1.0));
  for (int k = 1; k < cfg.restarts; ++k) {
    CounterRng local = rng.split(static_cast<std::uint64_t>(k));
    Matrix g(cfg.l, cfg.l);
    for (Index j = 0; j < cfg.l; ++j)
      for (Index i = 0; i < cfg.l; ++i) g(i, j) = local.normal();
    g = symmetrize(g);
    const double scale = 0.25 * start_scale * std::exp(span * local.uniform());
    starts.push_back(g * (scale / std::max(g.norm(), 1e-300)));
  }

  RestrictedResult best;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    auto [c, value] = detail::projected_descent(f, starts[k], rank, radius, step0, cfg);
    if (value < best.loss) {
      best.loss = value;
      best.coefficients = c;
      best.best_restart = static_cast<int>(k);
    }
  }
  best.untruncated = symmetrize(f.expand(best.coefficients));
  best.kernel = truncate(best.untruncated, cfg.a);
  best.loss = cells.loss(best.kernel);
  return best;
}

inline RestrictedResult restricted_ls(const Dataset& data, const SpectralDecomposition& spec,
                                      const RestrictedConfig& cfg) {
  data.validate();
  return restricted_ls(CellSummary(data), spec, cfg);
}

struct ModelCell {
  Index r = 1;
  Index l = 1;
};

struct SelectionConfig {
  double K = 1.0;
  double A = 1.0;
  double a = 1.0;
  std::vector<ModelCell> grid;
  int restarts = 16;
  int max_iters = 5000;
  std::uint64_t seed = 0;

  void validate() const {
    require(K > 0.0 && A > 0.0, "selection: K and A must be positive");
    require(a > 0.0, "selection: a must be positive");
    require(!grid.empty(), "selection: grid is empty");
  }
};

/// K a^2 (r^l) l / n log(A n m / ((r^l) l)).
inline double selection_penalty(double K, double A, double a, Index r, Index l, Index n, Index m) {
  const double x = static_cast<double>(std::min(r, l) * l);
  return K * a * a * x / static_cast<double>(n) *
         std::log(A * static_cast<double>(n) * static_cast<double>(m) / x);
}

struct SelectionEntry {
  Index r = 1;  // effective rank cap r ^ l
  Index l = 1;
  double loss = 0.0;
  double penalty = 0.0;
};

struct SelectionResult {
  Index r_hat = 1;
  Index l_hat = 1;
  Matrix kernel;
  std::vector<SelectionEntry> table;  // one entry per distinct (r ^ l, l), in (l, r ^ l) order
};

/// Penalized choice of (r, l). Cells sharing (r ^ l, l) are fitted once; ties
/// go to the lexicographically smallest (l, r ^ l). Each fit is also started
/// from the best fit of the nested smaller classes with the same l.
inline SelectionResult select_model(const Dataset& data, const SpectralDecomposition& spec,
                                    const SelectionConfig& cfg) {
  cfg.validate();
  data.validate();
  const Index m = spec.size();
  std::vector<ModelCell> cells;
  for (const ModelCell& c : cfg.grid) {
    require(c.r >= 1 && c.l >= 1 && c.r <= m && c.l <= m, "selection: grid cell out of range");
    cells.push_back({std::min(c.r, c.l), c.l});
  }
  std::sort(cells.begin(), cells.end(), [](const ModelCell& x, const ModelCell& y) {
    return x.l != y.l ? x.l < y.l : x.r < y.r;
  });
  cells.erase(std::unique(cells.begin(), cells.end(),
                          [](const ModelCell& x, const ModelCell& y) {
                            return x.l == y.l && x.r == y.r;
                          }),
              cells.end());

  const CellSummary summary(data);
  SelectionResult out;
  double best = kInf;
  Matrix previous;
  Index previous_l = -1;
  for (const ModelCell& c : cells) {
    RestrictedConfig rc;
    rc.r = c.r;
    rc.l = c.l;
    rc.a = cfg.a;
    rc.restarts = cfg.restarts;
    rc.max_iters = cfg.max_iters;
    rc.seed = CounterRng::derive(cfg.seed, static_cast<std::uint64_t>(c.r),
                                 static_cast<std::uint64_t>(c.l));
    std::vector<Matrix> warm;
    if (previous_l == c.l) warm.push_back(previous);
    RestrictedResult fit = restricted_ls(summary, spec, rc, warm);
    previous = fit.coefficients;
    previous_l = c.l;

    SelectionEntry e{c.r, c.l, fit.loss, selection_penalty(cfg.K, cfg.A, cfg.a, c.r, c.l, data.n(), m)};
    out.table.push_back(e);
    if (e.loss + e.penalty < best) {
      best = e.loss + e.penalty;
      out.r_hat = c.r;
      out.l_hat = c.l;
      out.kernel = fit.kernel;
    }
  }
  return out;
}

struct RestrictedRate {
  double oracle;   // variance-with-log term maxed with the approximation term
  double trivial;  // 4 a^2 l^2 / m^2 + 2 rho^2 / lambda_{l+1}
};

/// Error level of the restricted estimator at a fixed (r, l), without the
/// confidence term a^2 t / n.
inline RestrictedRate restricted_rate_bound(Index r, Index l, double rho, double a, Index n, Index m,
                                            double A, const SpectralDecomposition& spec) {
  require(l >= 1 && l <= m && r >= 1, "rate: need 1 <= l <= m and r >= 1");
  require(spec.size() == m, "rate: spectrum size differs from m");
  require(n >= 1 && a > 0.0 && rho >= 0.0 && A > 0.0, "rate: invalid parameters");
  const double x = static_cast<double>(std::min(r, l) * l);
  const double variance = a * a * x / static_cast<double>(n) *
                          std::log(A * static_cast<double>(n) * static_cast<double>(m) / x);
  const double lam = spec.lambda(l + 1);
  const double bias = rho == 0.0 ? 0.0 : (lam == 0.0 ? kInf : ratio_or_zero(rho * rho, lam));
  const double ll = static_cast<double>(l) / static_cast<double>(m);
  return {vee(variance, bias), 4.0 * a * a * ll * ll + 2.0 * bias};
}

}  // namespace gsk
