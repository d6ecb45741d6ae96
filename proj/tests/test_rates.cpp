#include "gsk/rates.hpp"
#include "gsk/graph.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace gsk;

namespace {

SpectralDecomposition power_spectrum(Index m, double exponent, const Matrix& basis) {
  Vector ev(m);
  for (Index l = 1; l <= m; ++l) ev(l - 1) = std::pow(static_cast<double>(l), exponent);
  return {ev, basis};
}

SpectralDecomposition power_spectrum(Index m, double exponent) {
  return power_spectrum(m, exponent, Matrix::Identity(m, m));
}

Matrix hadamard(Index m) {
  Matrix h = Matrix::Ones(1, 1);
  while (h.rows() < m) {
    const Index k = h.rows();
    Matrix next(2 * k, 2 * k);
    next << h, h, h, -h;
    h = next;
  }
  return h / std::sqrt(static_cast<double>(m));
}

// Independent evaluations straight from the displayed definitions.
double lam(const Vector& ev, Index l) { return l > ev.size() ? kInf : ev(l - 1); }
double var(const ProblemSize& ps, Index l) { return ps.a * ps.a * std::min(ps.r, l) * l / ps.n; }
double bias(const ProblemSize& ps, double lambda) {
  if (ps.rho == 0.0) return 0.0;
  if (lambda == 0.0) return kInf;
  return std::isinf(lambda) ? 0.0 : ps.rho * ps.rho / lambda;
}
double logvar(const ProblemSize& ps, Index l, double A) {
  const double x = static_cast<double>(std::min(ps.r, l) * l);
  return ps.a * ps.a * x / ps.n * std::log(A * ps.n * ps.m / x);
}

ProblemSize random_size(Index m, CounterRng& rng) {
  ProblemSize ps;
  ps.m = m;
  ps.n = 3.0 * m * std::pow(10.0, 4.0 * rng.uniform());
  ps.r = 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(m)));
  ps.rho = std::pow(10.0, -2.0 + 3.0 * rng.uniform());
  ps.a = 0.5 + 1.5 * rng.uniform();
  return ps;
}

}  // namespace

TEST(Coherence, CanonicalBasis) {
  const auto spec = power_spectrum(16, 2.0);
  EXPECT_EQ(sparsity_d(spec), 1);
  for (double p : {2.0, 3.0, 8.0})
    EXPECT_NEAR(q_p(spec, p), std::pow(16.0, 1.0 - 2.0 / p), 1e-12);
  EXPECT_NEAR(q_p(spec, kInf), 16.0, 1e-12);
  EXPECT_NEAR(q_p_partial(spec, 4.0, 16), 1.0, 1e-12);
}

TEST(Coherence, FlatBasis) {
  const auto spec = power_spectrum(8, 2.0, hadamard(8));
  for (double p : {2.0, 2.5, 4.0, 10.0, kInf}) EXPECT_NEAR(q_p(spec, p), 1.0, 1e-12);
  EXPECT_EQ(sparsity_d(spec), 8);
  for (Index l = 1; l <= 8; ++l) EXPECT_NEAR(q_p_partial(spec, 4.0, l), 1.0, 1e-12);
  EXPECT_THROW(q_p(spec, 1.5), Error);
}

TEST(Coherence, PartialBoundedByMOverL) {
  CounterRng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    const Index m = 5 + static_cast<Index>(rng.below(20));
    const auto spec = power_spectrum(m, 2.0, oracle::random_orthonormal(m, rng));
    for (Index l = 1; l <= m; ++l)
      for (double p : {2.0, 3.0, 6.0, kInf})
        EXPECT_LE(q_p_partial(spec, p, l), static_cast<double>(m) / l * (1 + 1e-12));
  }
}

TEST(LowerBounds, ZeroRadius) {
  const auto spec = power_spectrum(30, 2.0);
  ProblemSize ps{1e4, 30, 2, 0.0, 1.0};
  EXPECT_EQ(lower_dense(ps, spec, std::log(30.0), 1.0), 0.0);
  EXPECT_EQ(lower_sparse(ps, spec, 1), 0.0);
}

TEST(LowerBounds, DenseMatchesGridLoop) {
  const Index m = 64;
  const auto spec = power_spectrum(m, 2.0);
  const ProblemSize ps{1e4, m, 2, 1.0, 1.0};
  const double p = std::log(64.0);
  double plain = 0.0, logged = 0.0;
  for (Index l = 1; l <= m; ++l) {
    const double base = std::min(var(ps, l), bias(ps, l * l));
    const double ratio = static_cast<double>(std::min<Index>(2, l)) / l;
    plain = std::max(plain, std::min(base, std::exp(-4.0) / (p - 1.0) * ratio));
    logged = std::max(logged, std::min(base, ratio / std::log(64.0)));
  }
  EXPECT_NEAR(lower_dense(ps, spec, p, 1.0), plain, 1e-15);
  EXPECT_NEAR(lower_dense(ps, spec, p, 1.0, true), logged, 1e-15);
}

TEST(LowerBounds, SparseMatchesGridLoop) {
  const Index m = 50;
  const auto spec = power_spectrum(m, 2.0);
  const ProblemSize ps{5e3, m, 3, 0.5, 1.2};
  double expect = 0.0;
  for (Index l = 1; l <= m; ++l)
    expect = std::max(expect, std::min({var(ps, l), bias(ps, l * l),
                                        1.44 / (2.0 * std::log(50.0)) * l * l / (50.0 * 50.0)}));
  EXPECT_NEAR(lower_sparse(ps, spec, 2), expect, 1e-15);
}

TEST(LowerBounds, StartIndexCappedAt32) {
  Vector ev = Vector::Zero(40);
  for (Index l = 36; l <= 40; ++l) ev(l - 1) = 1.0;
  const auto spec = SpectralDecomposition::diagonal(ev);
  ASSERT_EQ(spec.k0(), 36);
  // l = 32 has lambda = 0, so the bias term is infinite and the variance term decides.
  const ProblemSize ps{1e6, 40, 1, 1.0, 1.0};
  EXPECT_GE(lower_sparse(ps, spec, 1), std::min(var(ps, 32), 32.0 * 32.0 / (1600.0 * std::log(40.0))));
}

TEST(LowerBounds, MonotoneInNAndA) {
  CounterRng rng(2);
  for (int trial = 0; trial < 30; ++trial) {
    const Index m = 40;
    const auto spec = SpectralDecomposition::diagonal(oracle::random_monotone_spectrum(m, rng));
    ProblemSize ps = random_size(m, rng);
    double prev_d = kInf, prev_s = kInf, prev_u = kInf, prev_b = kInf;
    for (double n = 3.0 * m; n < 1e8; n *= 1.7) {
      ps.n = n;
      const double d1 = lower_dense(ps, spec, 4.0, 2.0);
      const double d4 = lower_sparse(ps, spec, 3);
      const double up = adaptive_upper_rate(ps, spec, 1.0).delta_n;
      const double beta = beta_example_rate(ps, 1.0);
      EXPECT_LE(d1, prev_d * (1 + 1e-12));
      EXPECT_LE(d4, prev_s * (1 + 1e-12));
      EXPECT_LE(up, prev_u * (1 + 1e-12));
      EXPECT_LE(beta, prev_b * (1 + 1e-12));
      prev_d = d1, prev_s = d4, prev_u = up, prev_b = beta;
    }
    ps.n = 1e5;
    double pa = 0.0, ps4 = 0.0, pu = 0.0;
    for (double a = 0.1; a < 10.0; a *= 1.5) {
      ps.a = a;
      EXPECT_GE(lower_dense(ps, spec, 4.0, 2.0), pa * (1 - 1e-12));
      EXPECT_GE(lower_sparse(ps, spec, 3), ps4 * (1 - 1e-12));
      EXPECT_GE(adaptive_upper_rate(ps, spec, 1.0).delta_n, pu * (1 - 1e-12));
      pa = lower_dense(ps, spec, 4.0, 2.0);
      ps4 = lower_sparse(ps, spec, 3);
      pu = adaptive_upper_rate(ps, spec, 1.0).delta_n;
    }
  }
}

TEST(LBar, CharacterizationMatchesGrid) {
  CounterRng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const Index m = 5 + static_cast<Index>(rng.below(60));
    const Vector ev = oracle::random_monotone_spectrum(m, rng);
    const auto spec = SpectralDecomposition::diagonal(ev);
    const ProblemSize ps = random_size(m, rng);
    const auto res = l_bar_and_delta3(ps, spec, 4.0, 1.5);
    double best = -1.0;
    Index arg = 0;
    bool unique = true;
    // These spectra have exactly one zero eigenvalue, so the range starts at l = 2.
    for (Index l = 2; l <= m; ++l) {
      const double v = std::min(var(ps, l), bias(ps, lam(ev, l)));
      if (v > best) {
        best = v;
        arg = l;
        unique = true;
      } else if (v == best) {
        unique = false;
      }
    }
    EXPECT_NEAR(res.value, best, 1e-12 * std::max(1.0, best)) << trial;
    EXPECT_NEAR(res.grid_max, best, 1e-12 * std::max(1.0, best));
    if (unique && res.found) {
      const Index from_char = var(ps, res.l_bar) >= bias(ps, lam(ev, res.l_bar + 1)) ? res.l_bar : res.l_bar + 1;
      EXPECT_EQ(from_char, arg) << trial;
    }
  }
}

TEST(LBar, LargeNGivesM) {
  const auto spec = power_spectrum(20, 2.0);
  const auto res = l_bar_and_delta3({1e12, 20, 3, 1.0, 1.0}, spec, 4.0, 1.0);
  EXPECT_TRUE(res.found);
  EXPECT_EQ(res.l_bar, 20);
}

TEST(LBar, SquareSpectrumExample) {
  // lambda_l = l^2, r = 1: condition l^3 <= rho^2 n / a^2 = 64, so l_bar = 4.
  const auto spec = power_spectrum(30, 2.0);
  const auto res = l_bar_and_delta3({64.0, 30, 1, 1.0, 1.0}, spec, 4.0, 1.0);
  EXPECT_EQ(res.l_bar, 4);
  EXPECT_NEAR(res.value, std::max(4.0 / 64.0, 1.0 / 25.0), 1e-15);
}

TEST(LBar, EmptySetSentinel) {
  const auto spec = power_spectrum(10, 2.0);
  const auto res = l_bar_and_delta3({1e-3, 10, 1, 1.0, 1.0}, spec, 4.0, 1.0);
  EXPECT_FALSE(res.found);
  EXPECT_EQ(res.l_bar, 0);
  EXPECT_EQ(res.value, res.grid_max);
}

TEST(LBar, RestrictedBoundBelowDense) {
  CounterRng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    const Index m = 5 + static_cast<Index>(rng.below(60));
    const auto spec = SpectralDecomposition::diagonal(oracle::random_monotone_spectrum(m, rng));
    const ProblemSize ps = random_size(m, rng);
    const double p = 2.0 + 6.0 * rng.uniform();
    const double q = 1.0 + 3.0 * rng.uniform();
    const auto res = l_bar_and_delta3(ps, spec, p, q);
    EXPECT_LE(res.delta3, lower_dense(ps, spec, p, q) * (1 + 1e-12) + 1e-300);
    EXPECT_LE(res.upper_l, m);
  }
}

TEST(AdaptiveRate, CharacterizationMatchesGrid) {
  CounterRng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const Index m = 5 + static_cast<Index>(rng.below(60));
    const Vector ev = oracle::random_monotone_spectrum(m, rng);
    const auto spec = SpectralDecomposition::diagonal(ev);
    const ProblemSize ps = random_size(m, rng);
    const double A = 0.5 + 2.0 * rng.uniform();
    const auto res = adaptive_upper_rate(ps, spec, A);
    double best = kInf;
    Index arg = 0;
    bool unique = true;
    for (Index l = 1; l <= m; ++l) {
      const double v = std::max(logvar(ps, l, A), bias(ps, lam(ev, l + 1)));
      if (v < best) {
        best = v;
        arg = l;
        unique = true;
      } else if (v == best) {
        unique = false;
      }
    }
    EXPECT_NEAR(res.delta_n, best, 1e-12 * best) << trial;
    EXPECT_NEAR(res.characterization, best, 1e-12 * best) << trial;
    if (unique) EXPECT_EQ(res.l_argmin, arg);
    if (unique && res.found) {
      const Index from_char =
          res.l_tilde == 1 || logvar(ps, res.l_tilde, A) <= bias(ps, lam(ev, res.l_tilde)) ? res.l_tilde
                                                                                           : res.l_tilde - 1;
      EXPECT_EQ(from_char, arg) << trial;
    }
  }
}

TEST(AdaptiveRate, ZeroRadiusPicksFirstIndex) {
  const auto spec = power_spectrum(30, 2.0);
  const ProblemSize ps{1e4, 30, 3, 0.0, 1.0};
  const auto res = adaptive_upper_rate(ps, spec, 1.0);
  EXPECT_EQ(res.l_argmin, 1);
  EXPECT_EQ(res.l_tilde, 1);
  EXPECT_NEAR(res.delta_n, 1.0 / 1e4 * std::log(1e4 * 30.0), 1e-15);
}

TEST(AdaptiveRate, PowerSpectrumMatchesClosedFormWithinFactorFour) {
  const Index m = 1000;
  const auto spec = power_spectrum(m, 2.0);
  for (double n = 3e3; n <= 1e7; n *= 3.0) {
    const ProblemSize ps{n, m, 1, 1.0, 1.0};
    const double grid = adaptive_upper_rate(ps, spec, 1.0).delta_n;
    const double closed = beta_example_upper_rate(ps, 1.0, 1.0);
    EXPECT_LE(grid, 4.0 * closed) << n;
    EXPECT_GE(grid, closed / 4.0) << n;
  }
}

TEST(BetaRate, Examples) {
  const ProblemSize ps{1e4, 1000000, 1, 1.0, 1.0};
  EXPECT_NEAR(beta_example_rate(ps, 1.0), std::pow(1e-4, 2.0 / 3.0), 1e-15);
  EXPECT_NEAR(beta_example_rate(ps, 1.0), 2.154e-3, 5e-7);
  EXPECT_THROW(beta_example_rate(ps, 0.5), Error);

  // The floor a^2 / n takes over when the minimum drops below it.
  const ProblemSize tiny{1e4, 2, 1, 1e-9, 1.0};
  EXPECT_NEAR(beta_example_rate(tiny, 1.0), 1e-4, 1e-18);
}

TEST(BetaRate, RadiusHomogeneity) {
  for (double beta : {0.75, 1.0, 2.0}) {
    const ProblemSize ps{1e8, 1000000, 1, 1e-3, 1.0};
    ProblemSize twice = ps;
    twice.rho *= 2.0;
    const double first = std::pow(std::pow(ps.rho, 1.0 / beta) / ps.n, 2.0 * beta / (2.0 * beta + 1.0));
    ASSERT_NEAR(beta_example_rate(ps, beta), first, 1e-15);  // the first term is the active one here
    EXPECT_NEAR(beta_example_rate(twice, beta) / beta_example_rate(ps, beta),
                std::pow(2.0, (1.0 / beta) * (2.0 * beta / (2.0 * beta + 1.0))), 1e-12);
  }
}
