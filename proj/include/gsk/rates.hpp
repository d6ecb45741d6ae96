#pragma once

#include "gsk/common.hpp"
#include "gsk/spectra.hpp"

#include <algorithm>
#include <cmath>

namespace gsk {

/// Size parameters of the estimation problem: sample count, vertex count,
/// rank budget, Sobolev radius and response bound.
struct ProblemSize {
  double n = 1.0;
  Index m = 1;
  Index r = 1;
  double rho = 1.0;
  double a = 1.0;

  void validate() const {
    require(n > 0.0 && m > 0 && r > 0 && rho >= 0.0 && a > 0.0,
            "problem size: n, m, r, a must be positive and rho nonnegative");
    require(r <= m, "problem size: rank budget exceeds m");
  }
};

namespace detail {

// rho^2 / lambda with 0 / 0 = 0 and x / 0 = inf, x / inf = 0.
inline double bias_term(double rho, double lambda) {
  const double num = rho * rho;
  if (num == 0.0) return 0.0;
  if (lambda == 0.0) return kInf;
  return ratio_or_zero(num, lambda);
}

inline double variance_term(const ProblemSize& ps, Index l) {
  return ps.a * ps.a * static_cast<double>(std::min(ps.r, l) * l) / ps.n;
}

inline double log_variance_term(const ProblemSize& ps, Index l, double A) {
  const double x = static_cast<double>(std::min(ps.r, l) * l);
  return ps.a * ps.a * x / ps.n * std::log(A * ps.n * static_cast<double>(ps.m) / x);
}

inline Index lower_start(const SpectralDecomposition& spec) { return std::min<Index>(spec.k0(), 32); }

inline void check_size(const ProblemSize& ps, const SpectralDecomposition& spec) {
  ps.validate();
  require(ps.m == spec.size(), "rates: problem size m does not match the spectrum");
}

}  // namespace detail

/// Q_p = max_j || sqrt(m) phi_j ||^2 in L_p of the uniform measure; p may be +inf.
inline double q_p(const SpectralDecomposition& spec, double p) {
  require(p >= 2.0, "Q_p: p must be at least 2");
  const Matrix& phi = spec.eigenvectors();
  const double m = static_cast<double>(spec.size());
  double best = 0.0;
  for (Index j = 0; j < phi.cols(); ++j) {
    double value;
    if (std::isinf(p)) {
      value = m * phi.col(j).cwiseAbs2().maxCoeff();
    } else {
      const double s = phi.col(j).cwiseAbs().array().pow(p).sum();
      value = std::pow(std::pow(m, p / 2.0 - 1.0) * s, 2.0 / p);
    }
    best = std::max(best, value);
  }
  return best;
}

/// Q_p(l) = || (1/l) sum_{j<=l} m phi_j^2 || in L_{p/2} of the uniform measure.
inline double q_p_partial(const SpectralDecomposition& spec, double p, Index l) {
  require(p >= 2.0, "Q_p(l): p must be at least 2");
  require(l >= 1 && l <= spec.size(), "Q_p(l): l out of range");
  const double m = static_cast<double>(spec.size());
  const Vector profile =
      spec.eigenvectors().leftCols(l).cwiseAbs2().rowwise().sum() * (m / static_cast<double>(l));
  if (std::isinf(p)) return profile.maxCoeff();
  const double half = p / 2.0;
  return std::pow(profile.array().pow(half).sum() / m, 1.0 / half);
}

/// d = max over vertices of the number of eigenvectors not vanishing there.
inline Index sparsity_d(const SpectralDecomposition& spec, double tol = 1e-12) {
  const Matrix& phi = spec.eigenvectors();
  Index best = 0;
  for (Index v = 0; v < phi.rows(); ++v)
    best = std::max<Index>(best, (phi.row(v).array().abs() > tol).count());
  return best;
}

/// Dense-case minimax lower bound. With `log_variant` the third term uses
/// 1 / log m in place of m^(-4/p) / (p - 1), the form obtained at p = log m.
inline double lower_dense(const ProblemSize& ps, const SpectralDecomposition& spec, double p,
                          double Qp, bool log_variant = false) {
  detail::check_size(ps, spec);
  require(Qp > 0.0, "lower bound: Q_p must be positive");
  const double m = static_cast<double>(ps.m);
  double coherence;
  if (log_variant) {
    require(ps.m >= 2, "lower bound: log variant needs m >= 2");
    coherence = 1.0 / (Qp * Qp * std::log(m));
  } else {
    require(p > 1.0, "lower bound: p must exceed 1");
    coherence = std::pow(m, -4.0 / p) / ((p - 1.0) * Qp * Qp);
  }
  double best = 0.0;
  for (Index l = detail::lower_start(spec); l <= ps.m; ++l) {
    const double third =
        coherence * ps.a * ps.a * static_cast<double>(std::min(ps.r, l)) / static_cast<double>(l);
    const double value = wedge(wedge(detail::variance_term(ps, l),
                                     detail::bias_term(ps.rho, spec.lambda(l))),
                               third);
    best = vee(best, value);
  }
  return best;
}

/// Sparse-case lower bound with sparsity d of the eigenbasis.
inline double lower_sparse(const ProblemSize& ps, const SpectralDecomposition& spec, Index d) {
  detail::check_size(ps, spec);
  require(d >= 1, "lower bound: d must be positive");
  require(ps.m >= 2, "lower bound: sparse case needs m >= 2");
  const double m = static_cast<double>(ps.m);
  const double scale = ps.a * ps.a / (static_cast<double>(d) * std::log(m));
  double best = 0.0;
  for (Index l = detail::lower_start(spec); l <= ps.m; ++l) {
    const double ll = static_cast<double>(l);
    const double value = wedge(wedge(detail::variance_term(ps, l),
                                     detail::bias_term(ps.rho, spec.lambda(l))),
                               scale * ll * ll / (m * m));
    best = vee(best, value);
  }
  return best;
}

struct LBarResult {
  Index l_bar = 0;           ///< l0 - 1 when the defining set is empty
  bool found = false;
  double value = 0.0;        ///< closed form at l_bar, or the grid maximum when not found
  double grid_max = 0.0;     ///< max over l0 <= l <= m of the variance/bias minimum
  Index upper_l = 0;         ///< L, the coherence cutoff
  double delta3 = 0.0;       ///< max over l0 <= l <= L; 0 when the range is empty
};

/// Cutoff l_bar where the variance term stops being below the bias term,
/// together with the restricted lower bound delta3.
inline LBarResult l_bar_and_delta3(const ProblemSize& ps, const SpectralDecomposition& spec,
                                   double p, double Qp) {
  detail::check_size(ps, spec);
  require(p > 1.0 && Qp > 0.0, "l_bar: need p > 1 and Q_p > 0");
  const Index l0 = detail::lower_start(spec);
  LBarResult out;
  out.l_bar = l0 - 1;
  const double budget = ps.rho * ps.rho * ps.n / (ps.a * ps.a);
  for (Index l = l0; l <= ps.m; ++l) {
    const double lhs = static_cast<double>(std::min(ps.r, l) * l) * spec.lambda(l);
    if (lhs <= budget) {
      out.l_bar = l;
      out.found = true;
    }
  }
  const double m = static_cast<double>(ps.m);
  const double cut = std::floor(std::sqrt(ps.n / (p - 1.0)) / (Qp * std::pow(m, 2.0 / p)));
  out.upper_l = cut >= m ? ps.m : static_cast<Index>(std::max(0.0, cut));

  for (Index l = l0; l <= ps.m; ++l) {
    const double v = wedge(detail::variance_term(ps, l), detail::bias_term(ps.rho, spec.lambda(l)));
    out.grid_max = vee(out.grid_max, v);
    if (l <= out.upper_l) out.delta3 = vee(out.delta3, v);
  }
  out.value = out.found ? vee(detail::variance_term(ps, out.l_bar),
                              detail::bias_term(ps.rho, spec.lambda(out.l_bar + 1)))
                        : out.grid_max;
  return out;
}

struct AdaptiveRate {
  Index l_tilde = 0;          ///< m + 1 when the defining set is empty
  bool found = false;
  double delta_n = 0.0;       ///< grid minimum over 1 <= l <= m
  Index l_argmin = 1;         ///< smallest grid minimizer
  double characterization = 0.0;  ///< value read off l_tilde (grid value when not found)
};

/// Adaptive upper rate Delta_n and its crossing index l_tilde.
///
/// Below l_tilde the bias term dominates and decreases, from l_tilde on the
/// log-variance term dominates and increases, so the minimum is the smaller of
/// the variance term at l_tilde and the bias term at l_tilde - 1.
inline AdaptiveRate adaptive_upper_rate(const ProblemSize& ps, const SpectralDecomposition& spec,
                                        double A) {
  detail::check_size(ps, spec);
  require(A > 0.0, "adaptive rate: A must be positive");
  AdaptiveRate out;
  out.l_tilde = ps.m + 1;
  out.delta_n = kInf;
  for (Index l = 1; l <= ps.m; ++l) {
    const double var = detail::log_variance_term(ps, l, A);
    const double bias = detail::bias_term(ps.rho, spec.lambda(l + 1));
    const double v = vee(var, bias);
    if (v < out.delta_n) {
      out.delta_n = v;
      out.l_argmin = l;
    }
    if (!out.found && var >= bias) {
      out.l_tilde = l;
      out.found = true;
    }
  }
  if (!out.found) {
    out.characterization = out.delta_n;
  } else {
    const double var = detail::log_variance_term(ps, out.l_tilde, A);
    out.characterization =
        out.l_tilde == 1 ? var : wedge(var, detail::bias_term(ps.rho, spec.lambda(out.l_tilde)));
  }
  return out;
}

/// Minimax rate for spectra growing like l^(2 beta).
inline double beta_example_rate(const ProblemSize& ps, double beta) {
  ps.validate();
  require(beta > 0.5, "beta rate: beta must exceed 1/2");
  const double a2 = ps.a * ps.a;
  const double r = static_cast<double>(ps.r);
  const double m = static_cast<double>(ps.m);
  const double first = std::pow(a2 * std::pow(ps.rho, 1.0 / beta) * r / ps.n,
                                2.0 * beta / (2.0 * beta + 1.0));
  const double second =
      std::pow(a2 * std::pow(ps.rho, 2.0 / beta) / ps.n, beta / (beta + 1.0));
  const double third = a2 * r * m / ps.n;
  return vee(wedge(wedge(first, second), third), a2 / ps.n);
}

/// Upper-bound counterpart of beta_example_rate with the log factors of the
/// adaptive estimator (the t term is left out).
inline double beta_example_upper_rate(const ProblemSize& ps, double beta, double A) {
  ps.validate();
  require(beta > 0.5 && A > 0.0, "beta rate: need beta > 1/2 and A > 0");
  const double a2 = ps.a * ps.a;
  const double r = static_cast<double>(ps.r);
  const double m = static_cast<double>(ps.m);
  const double log_full = std::log(A * ps.n * m);
  const double first = std::pow(a2 * std::pow(ps.rho, 1.0 / beta) * r / ps.n *
                                    std::log(A * ps.n * m / r),
                                2.0 * beta / (2.0 * beta + 1.0));
  const double second =
      std::pow(a2 * std::pow(ps.rho, 2.0 / beta) * log_full / ps.n, beta / (beta + 1.0));
  const double third = a2 * r * m * log_full / ps.n;
  return wedge(wedge(first, second), third);
}

}  // namespace gsk
