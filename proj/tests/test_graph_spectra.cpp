#include "gsk/graph.hpp"
#include "gsk/spectra.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace gsk;

namespace {

Matrix path3_laplacian() {
  Matrix l(3, 3);
  l << 1, -1, 0, -1, 2, -1, 0, -1, 1;
  return l;
}

std::vector<SpectralDecomposition> sample_spectra() {
  std::vector<SpectralDecomposition> out;
  out.push_back(smoothing_operator(WeightedGraph::path(3), 1.0));
  out.push_back(smoothing_operator(WeightedGraph::circle(12), 1.0));
  out.push_back(smoothing_operator(WeightedGraph::circle(30), 2.0));
  out.push_back(smoothing_operator(WeightedGraph::path(25), 0.7));
  out.push_back(smoothing_operator(WeightedGraph::complete(6), 1.0));
  CounterRng rng(17);
  for (int k = 0; k < 5; ++k)
    out.push_back(smoothing_operator(WeightedGraph(oracle::random_weights(15 + 3 * k, rng, 0.4)), 1.0 + 0.5 * k));
  Vector squares(8);
  for (Index k = 0; k < 8; ++k) squares(k) = static_cast<double>((k + 1) * (k + 1));
  out.push_back(SpectralDecomposition::diagonal(squares));
  return out;
}

}  // namespace

TEST(Laplacian, PathGraphOnThreeVertices) {
  EXPECT_TRUE(laplacian(WeightedGraph::path(3)).isApprox(path3_laplacian()));
}

TEST(Laplacian, EmptyGraphGivesZero) {
  EXPECT_EQ(laplacian(WeightedGraph::empty(4)), Matrix::Zero(4, 4));
}

TEST(Laplacian, CompleteGraphK4) {
  const Matrix l = laplacian(WeightedGraph::complete(4));
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) EXPECT_DOUBLE_EQ(l(i, j), i == j ? 3.0 : -1.0);
}

TEST(Laplacian, RejectsInvalidWeights) {
  Matrix asym = Matrix::Zero(3, 3);
  asym(0, 1) = 1.0;
  EXPECT_THROW(WeightedGraph{asym}, Error);
  Matrix neg = Matrix::Zero(3, 3);
  neg(0, 1) = neg(1, 0) = -1.0;
  EXPECT_THROW(WeightedGraph{neg}, Error);
  Matrix loop = Matrix::Zero(3, 3);
  loop(1, 1) = 1.0;
  EXPECT_THROW(WeightedGraph{loop}, Error);
}

TEST(Laplacian, QuadraticFormMatchesEdgeDifferences) {
  CounterRng rng(3);
  const Matrix w = oracle::random_weights(20, rng, 0.3);
  const Matrix l = laplacian(WeightedGraph(w));
  EXPECT_LT(l.rowwise().sum().cwiseAbs().maxCoeff(), 1e-12);
  for (int trial = 0; trial < 100; ++trial) {
    Vector f(20);
    for (Index i = 0; i < 20; ++i) f(i) = rng.normal();
    double direct = 0.0;
    for (Index u = 0; u < 20; ++u)
      for (Index v = 0; v < 20; ++v) direct += 0.5 * w(u, v) * (f(u) - f(v)) * (f(u) - f(v));
    const double form = f.dot(l * f);
    EXPECT_NEAR(form, direct, 1e-10 * std::max(1.0, std::abs(direct)));
    EXPECT_GE(form, -1e-12);
  }
}

TEST(SmoothingOperator, PathThreeAgainstJacobi) {
  const auto spec = smoothing_operator(path3_laplacian(), 1.0);
  const auto [values, vectors] = oracle::jacobi_eigen(path3_laplacian());
  for (Index k = 0; k < 3; ++k) EXPECT_NEAR(spec.eigenvalues()(k), values(k), 1e-12);
  EXPECT_NEAR(spec.eigenvalues()(1), 1.0, 1e-12);
  EXPECT_NEAR(spec.eigenvalues()(2), 3.0, 1e-12);
  EXPECT_EQ(spec.eigenvalues()(0), 0.0);
  EXPECT_EQ(spec.k0(), 2);
  EXPECT_NEAR(spec.growth_c(), 3.0, 1e-12);
}

TEST(SmoothingOperator, PathThreeSquared) {
  const auto spec = smoothing_operator(path3_laplacian(), 2.0);
  EXPECT_EQ(spec.eigenvalues()(0), 0.0);
  EXPECT_NEAR(spec.eigenvalues()(1), 1.0, 1e-12);
  EXPECT_NEAR(spec.eigenvalues()(2), 9.0, 1e-11);
}

TEST(SmoothingOperator, CompleteGraphSpectrum) {
  const auto spec = smoothing_operator(WeightedGraph::complete(4), 1.0);
  EXPECT_EQ(spec.eigenvalues()(0), 0.0);
  for (Index k = 1; k < 4; ++k) EXPECT_NEAR(spec.eigenvalues()(k), 4.0, 1e-12);
  EXPECT_EQ(spec.k0(), 2);
  EXPECT_NEAR(spec.growth_c(), 1.0, 1e-12);
}

TEST(SmoothingOperator, RandomGraphsAgainstJacobi) {
  CounterRng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix l = laplacian(WeightedGraph(oracle::random_weights(9, rng, 0.6)));
    const auto spec = smoothing_operator(l, 1.0);
    const auto [values, vectors] = oracle::jacobi_eigen(l);
    for (Index k = 0; k < 9; ++k)
      EXPECT_NEAR(spec.eigenvalues()(k), values(k) < 1e-10 ? 0.0 : values(k), 1e-10);
  }
}

TEST(SmoothingOperator, InvariantsAndIntegerPowers) {
  CounterRng rng(9);
  for (int trial = 0; trial < 6; ++trial) {
    const Matrix l = laplacian(WeightedGraph(oracle::random_weights(25, rng, 0.3)));
    for (int q : {1, 2, 3}) {
      const auto spec = smoothing_operator(l, q);
      const Index m = spec.size();
      const Matrix& phi = spec.eigenvectors();
      EXPECT_LT((phi.transpose() * phi - Matrix::Identity(m, m)).cwiseAbs().maxCoeff(), 1e-8);
      for (Index k = 0; k + 1 < m; ++k) EXPECT_LE(spec.eigenvalues()(k), spec.eigenvalues()(k + 1));
      EXPECT_GE(spec.eigenvalues()(0), 0.0);
      Matrix power = Matrix::Identity(m, m);
      for (int i = 0; i < q; ++i) power = power * l;
      EXPECT_LT((spec.reconstruct() - power).norm(), 1e-8 * power.norm());
      const Index first = spec.k0();
      EXPECT_GT(spec.lambda(first), 0.0);
      for (Index k = 1; k < first; ++k) EXPECT_EQ(spec.lambda(k), 0.0);
      for (Index k = first; k < m; ++k)
        EXPECT_LE(spec.lambda(k + 1), spec.growth_c() * spec.lambda(k) * (1 + 1e-12));
    }
  }
}

TEST(SmoothingOperator, TiesDoNotAffectSpectralFunction) {
  // The complete graph has a threefold eigenvalue; any basis of that
  // eigenspace gives the same eigenvalue list and counting function.
  const auto a = smoothing_operator(WeightedGraph::complete(5), 1.0);
  Matrix w = WeightedGraph::complete(5).weights();
  const std::vector<Index> perm{3, 0, 4, 1, 2};
  Matrix permuted(5, 5);
  for (Index i = 0; i < 5; ++i)
    for (Index j = 0; j < 5; ++j) permuted(i, j) = w(perm[i], perm[j]);
  const auto b = smoothing_operator(WeightedGraph(permuted), 1.0);
  for (Index k = 0; k < 5; ++k) EXPECT_NEAR(a.eigenvalues()(k), b.eigenvalues()(k), 1e-12);
  for (double x : {0.0, 1.0, 4.999, 5.0, 7.0})
    EXPECT_EQ(spectral_function(a, x), spectral_function(b, x));
}

TEST(SmoothingOperator, RejectsIndefiniteInput) {
  Matrix bad(2, 2);
  bad << 1, 0, 0, -1;
  EXPECT_THROW(smoothing_operator(bad, 1.0), Error);
  EXPECT_THROW(smoothing_operator(path3_laplacian(), 0.0), Error);
  Matrix asym(2, 2);
  asym << 1, 1, 0, 1;
  EXPECT_THROW(smoothing_operator(asym, 1.0), Error);
}

TEST(SmoothingOperator, ZeroEigenvalueThresholdIsScaleAware) {
  EXPECT_DOUBLE_EQ(zero_eigenvalue_threshold(1.0), 1e-10);
  EXPECT_DOUBLE_EQ(zero_eigenvalue_threshold(1e4), 1e-8);
  Vector v(3);
  v << 5e-11, 1.0, 2.0;
  const auto spec = SpectralDecomposition::diagonal(v);
  EXPECT_EQ(spec.k0(), 2);
  EXPECT_EQ(spec.lambda(1), 0.0);
  EXPECT_TRUE(std::isinf(spec.lambda(4)));
}

TEST(SpectralFunction, Examples) {
  const auto spec = smoothing_operator(path3_laplacian(), 1.0);
  EXPECT_EQ(spectral_function(spec, 0.0), 1);
  EXPECT_EQ(spectral_function(spec, 2.0), 2);
  EXPECT_EQ(spectral_function(spec, 100.0), 3);
  EXPECT_EQ(spectral_function(spec, 3.0), 3);
}

TEST(Majorant, PathThreeExample) {
  const auto spec = smoothing_operator(path3_laplacian(), 1.0);
  const auto fbar = regularized_majorant(spec, 0.5);
  EXPECT_NEAR(fbar(1.0), 2.0, 1e-12);
  EXPECT_NEAR(fbar(3.0), 3.0, 1e-12);
  // Just below lambda_3 the suffix term 3 sqrt(x/3) exceeds F = 2.
  EXPECT_NEAR(fbar(2.5), 3.0 * std::sqrt(2.5 / 3.0), 1e-12);
}

TEST(Majorant, CappedAtTop) {
  Vector squares(8);
  for (Index k = 0; k < 8; ++k) squares(k) = static_cast<double>((k + 1) * (k + 1));
  const auto fbar = regularized_majorant(SpectralDecomposition::diagonal(squares), 0.5);
  EXPECT_DOUBLE_EQ(fbar(64.0), 8.0);
  EXPECT_DOUBLE_EQ(fbar(1e6), 8.0);
}

TEST(Majorant, RejectsGammaOutsideUnitInterval) {
  const auto spec = smoothing_operator(path3_laplacian(), 1.0);
  EXPECT_THROW(regularized_majorant(spec, 0.0), Error);
  EXPECT_THROW(regularized_majorant(spec, 1.0), Error);
}

TEST(Majorant, DominatesAndIsRegular) {
  CounterRng rng(21);
  for (const auto& spec : sample_spectra()) {
    for (double gamma : {0.25, 0.5, 0.75}) {
      const auto fbar = regularized_majorant(spec, gamma);
      const double top = spec.lambda_max();
      std::vector<double> xs;
      for (int i = 0; i < 100; ++i) xs.push_back(1.2 * top * rng.uniform());
      for (Index k = 0; k < spec.size(); ++k) xs.push_back(spec.eigenvalues()(k));
      std::sort(xs.begin(), xs.end());
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const double x = xs[i];
        EXPECT_GE(fbar(x), static_cast<double>(spectral_function(spec, x)) - 1e-12);
        if (i > 0) {
          EXPECT_GE(fbar(x), fbar(xs[i - 1]) - 1e-12);
          if (xs[i - 1] > 0.0 && x < top)
            EXPECT_LE(fbar(x) / std::pow(x, 1 - gamma),
                      fbar(xs[i - 1]) / std::pow(xs[i - 1], 1 - gamma) * (1 + 1e-12));
        }
        if (x >= top) EXPECT_EQ(fbar(x), static_cast<double>(spec.size()));
      }
    }
  }
}

TEST(Majorant, MinimalAgainstGridFixedPoint) {
  for (const auto& spec : sample_spectra()) {
    for (double gamma : {0.25, 0.5, 0.75}) {
      const auto fbar = regularized_majorant(spec, gamma);
      const double top = spec.lambda_max();
      std::vector<double> xs;
      for (int i = 1; i <= 10000; ++i) xs.push_back(1.5 * top * i / 10000.0);
      for (Index k = 0; k < spec.size(); ++k)
        if (spec.eigenvalues()(k) > 0) xs.push_back(spec.eigenvalues()(k));
      std::sort(xs.begin(), xs.end());
      xs.erase(std::unique(xs.begin(), xs.end()), xs.end());
      const Vector ev = spec.eigenvalues();
      const auto ref = oracle::grid_minimal_majorant(
          xs, [&](double x) { return oracle::step_count(ev, x); }, gamma);
      for (std::size_t i = 0; i < xs.size(); ++i) {
        const double expect = xs[i] >= top ? static_cast<double>(spec.size()) : ref[i];
        EXPECT_NEAR(fbar(xs[i]), expect, 1e-6) << "x=" << xs[i];
      }
    }
  }
}

TEST(Majorant, TailSumBound) {
  for (const auto& spec : sample_spectra()) {
    for (double gamma : {0.25, 0.5, 0.75}) {
      const auto fbar = regularized_majorant(spec, gamma);
      const double c_gamma = (spec.growth_c() + gamma) / gamma;
      for (double x : fbar.breakpoints()) {
        double tail = 0.0;
        for (Index k = 0; k < spec.size(); ++k)
          if (spec.eigenvalues()(k) > x) tail += 1.0 / spec.eigenvalues()(k);
        EXPECT_LE(tail, c_gamma * fbar(x) / x * (1 + 1e-12));
      }
    }
  }
}

TEST(GraphIo, RoundTripsMatrixMarketAndDense) {
  CounterRng rng(2);
  const WeightedGraph g(oracle::random_weights(7, rng, 0.5));
  const auto dir = std::filesystem::temp_directory_path() / "gsk_graph_io";
  std::filesystem::create_directories(dir);
  const std::string mm = (dir / "g.mtx").string();
  write_graph_matrix_market(g, mm);
  EXPECT_LT((read_graph(mm).weights() - g.weights()).cwiseAbs().maxCoeff(), 1e-15);

  const std::string dense = (dir / "g.txt").string();
  {
    std::ofstream out(dense);
    out.precision(17);
    out << g.weights() << '\n';
  }
  EXPECT_LT((read_graph(dense).weights() - g.weights()).cwiseAbs().maxCoeff(), 1e-15);
}
