#include "gsk/packing.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace gsk;

namespace {

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

// lambda_l = l^2 on a given orthonormal basis.
SpectralDecomposition square_spectrum(const Matrix& basis) {
  Vector ev(basis.cols());
  for (Index l = 1; l <= ev.size(); ++l) ev(l - 1) = static_cast<double>(l * l);
  return SpectralDecomposition(ev, basis);
}

ProblemSize size(Index m, Index r, double n, double rho, double a) {
  ProblemSize ps;
  ps.m = m;
  ps.r = r;
  ps.n = n;
  ps.rho = rho;
  ps.a = a;
  return ps;
}

}  // namespace

TEST(KappaSchedule, FlatBasisExample) {
  const auto spec = square_spectrum(hadamard(64));
  const double p = std::log(64.0);
  const auto k = kappa_schedule(size(64, 2, 1e4, 1.0, 1.0), spec, 32, p, PackingMode::Dense);
  EXPECT_NEAR(k.information, 0.01, 1e-15);
  EXPECT_NEAR(k.coherence, 0.01364015927344489, 1e-14);
  EXPECT_NEAR(k.sobolev, 0.25, 1e-15);
  EXPECT_EQ(k.value, k.information);
}

TEST(KappaSchedule, UnboundedRadiusDropsSobolevCeiling) {
  const auto spec = square_spectrum(hadamard(64));
  const auto k = kappa_schedule(size(64, 2, 1e4, kInf, 1.0), spec, 32, 4.0, PackingMode::Dense);
  EXPECT_TRUE(std::isinf(k.sobolev));
  EXPECT_EQ(k.value, std::min(k.information, k.coherence));
}

TEST(KappaSchedule, LinearInEntryBound) {
  const auto spec = square_spectrum(hadamard(64));
  const auto one = kappa_schedule(size(64, 2, 1e4, kInf, 1.0), spec, 32, 4.0, PackingMode::Dense);
  const auto three = kappa_schedule(size(64, 2, 1e4, kInf, 3.0), spec, 32, 4.0, PackingMode::Dense);
  EXPECT_NEAR(three.value, 3.0 * one.value, 1e-15);
  EXPECT_NEAR(three.coherence, 3.0 * one.coherence, 1e-15);
}

TEST(KappaSchedule, SparseUsesSupportCount) {
  const auto spec = square_spectrum(Matrix::Identity(64, 64));
  const auto k = kappa_schedule(size(64, 2, 1e4, 1.0, 1.0), spec, 32, 4.0, PackingMode::Sparse);
  // d = 1 and Q_4(32) = sqrt(2) for the standard basis restricted to 32 coordinates.
  const double expect = std::pow(2.0, -1.5) / std::sqrt(3.0) / std::sqrt(2.0) * 2.0 * std::pow(64.0, -0.5);
  EXPECT_NEAR(k.coherence, expect, 1e-14);
}

TEST(KappaSchedule, ZeroEigenvalueThrows) {
  Vector ev = Vector::Zero(64);
  const SpectralDecomposition spec(ev, hadamard(64));
  EXPECT_THROW(kappa_schedule(size(64, 1, 1e4, 1.0, 1.0), spec, 32, 4.0, PackingMode::Dense), Error);
}

TEST(BuildPacking, FlatBasisGivesSeparatedCodes) {
  const auto spec = square_spectrum(hadamard(64));
  const auto ps = size(64, 1, 1e4, 1.0, 1.0);
  const auto set = build_packing(ps, spec, 32, std::log(64.0), PackingMode::Dense, 7, 2000, 16);
  EXPECT_GE(set.codes.size(), 3u);
  EXPECT_EQ(set.hamming_threshold, 1);
  EXPECT_EQ(set.l_prime, 16);
  EXPECT_EQ(set.l_double_prime, 16);
  for (std::size_t i = 0; i < set.codes.size(); ++i) {
    EXPECT_EQ(set.codes[i].rows(), 16);
    EXPECT_EQ(set.codes[i].cols(), 1);
    EXPECT_LE(set.kernels[i].cwiseAbs().maxCoeff(), ps.a);
    EXPECT_TRUE(is_symmetric(set.kernels[i], 1e-14));
    for (std::size_t j = i + 1; j < set.codes.size(); ++j)
      EXPECT_GE((set.codes[i].array() != set.codes[j].array()).count(), 2);
  }
}

TEST(BuildPacking, Deterministic) {
  const auto spec = square_spectrum(hadamard(64));
  const auto ps = size(64, 2, 1e4, 1.0, 1.0);
  const auto a = build_packing(ps, spec, 32, 4.0, PackingMode::Dense, 3, 500, 8);
  const auto b = build_packing(ps, spec, 32, 4.0, PackingMode::Dense, 3, 500, 8);
  ASSERT_EQ(a.codes.size(), b.codes.size());
  for (std::size_t i = 0; i < a.codes.size(); ++i) EXPECT_TRUE((a.codes[i].array() == b.codes[i].array()).all());
}

TEST(BuildPacking, RejectsSmallDenseL) {
  const auto spec = square_spectrum(hadamard(64));
  EXPECT_THROW(build_packing(size(64, 1, 1e4, 1.0, 1.0), spec, 16, 4.0, PackingMode::Dense, 1, 100), Error);
  EXPECT_NO_THROW(build_packing(size(64, 1, 1e4, 1.0, 1.0), spec, 16, 4.0, PackingMode::Sparse, 1, 100));
}

TEST(BuildPacking, TooFewDrawsFailsWithDiagnostics) {
  const auto spec = square_spectrum(hadamard(64));
  try {
    build_packing(size(64, 1, 1e4, 1.0, 1.0), spec, 32, 4.0, PackingMode::Dense, 1, 1);
    FAIL() << "expected a failure";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("1 draws"), std::string::npos) << e.what();
  }
}

TEST(BuildPacking, FullRegimeWhenRankExceedsHalf) {
  const auto spec = square_spectrum(hadamard(64));
  const auto ps = size(64, 20, 1e4, 1.0, 1.0);
  const auto set = build_packing(ps, spec, 32, 4.0, PackingMode::Dense, 5, 200, 4);
  EXPECT_FALSE(set.block_regime);
  EXPECT_EQ(set.codes.front().cols(), 16);
}

TEST(BuildPacking, KernelRankIsTwiceCodeRank) {
  // The kernel is half + half^T with half and half^T on disjoint eigenvector
  // blocks, so its rank is twice the rank of the coupling block.
  const auto spec = square_spectrum(hadamard(64));
  for (Index r : {1, 2, 3}) {
    const auto set = build_packing(size(64, r, 1e4, 1.0, 1.0), spec, 32, 4.0, PackingMode::Dense, 11, 200, 4);
    for (const Matrix& k : set.kernels) {
      EXPECT_LE(kernel_rank(k), 2 * r);
      EXPECT_GT(kernel_rank(k), r);
    }
  }
}

TEST(PackingDistributions, CellProbabilities) {
  PackingSet set;
  set.m = 2;
  set.a = 2.0;
  Matrix k(2, 2);
  k << 0.0, 2.0, 2.0, -2.0;
  set.kernels = {k};
  const auto probs = packing_distributions(set);
  EXPECT_EQ(probs[0](0, 0), 0.5);
  EXPECT_EQ(probs[0](0, 1), 0.625);
  EXPECT_EQ(probs[0](1, 1), 0.375);
  // E(Y) = a (2p - 1) = K / 4.
  for (Index u = 0; u < 2; ++u)
    for (Index v = 0; v < 2; ++v) EXPECT_NEAR(set.a * (2.0 * probs[0](u, v) - 1.0), k(u, v) / 4.0, 1e-15);

  set.kernels = {Matrix::Constant(2, 2, 2.5)};
  EXPECT_THROW(packing_distributions(set), Error);
}

TEST(PackingDistributions, MeanIdentityOnBuiltSet) {
  const auto spec = square_spectrum(hadamard(64));
  const auto set = build_packing(size(64, 2, 1e4, 1.0, 1.0), spec, 32, 4.0, PackingMode::Dense, 2, 300, 6);
  const auto probs = packing_distributions(set);
  for (std::size_t k = 0; k < probs.size(); ++k) {
    EXPECT_GE(probs[k].minCoeff(), 0.375);
    EXPECT_LE(probs[k].maxCoeff(), 0.625);
    const Matrix mean = (set.a * (2.0 * probs[k].array() - 1.0)).matrix();
    EXPECT_LT((mean - set.kernels[k] / 4.0).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(BernoulliKl, Basics) {
  EXPECT_EQ(bernoulli_kl(0.5, 0.5), 0.0);
  EXPECT_EQ(bernoulli_kl(0.625, 0.625), 0.0);
  EXPECT_NEAR(bernoulli_kl(0.625, 0.375), 0.25 * std::log(0.625 / 0.375), 1e-15);
  EXPECT_GT(bernoulli_kl(0.4, 0.6), 0.0);
}

TEST(VerifyPacking, ProofBoundsHold) {
  const auto spec = square_spectrum(hadamard(64));
  for (Index r : {1, 2}) {
    const auto ps = size(64, r, 1e4, 1.0, 1.0);
    const auto set = build_packing(ps, spec, 32, std::log(64.0), PackingMode::Dense, 17, 400, 6);
    const auto rep = verify_packing(set, ps, spec, ps.n);
    const std::size_t card = set.kernels.size();
    EXPECT_EQ(rep.pairs.size(), card * (card - 1) / 2);
    EXPECT_EQ(rep.entry_violations, 0);
    EXPECT_EQ(rep.sobolev_violations, 0);
    EXPECT_EQ(rep.hamming_violations, 0);
    EXPECT_EQ(rep.kl_violations, 0);
    EXPECT_EQ(rep.separation_violations, 0);
    // The rank check uses the cap r, which the symmetric construction exceeds.
    EXPECT_EQ(rep.rank_violations, static_cast<long>(card));
    for (const auto& c : rep.pairs) {
      EXPECT_NE(c.i, c.j);
      EXPECT_LE(c.kl, c.kl_quadratic);
      EXPECT_LE(c.kl_quadratic, c.kl_bound * (1 + 1e-12));
      EXPECT_GE(c.separation, c.separation_bound);
    }
    for (const auto& mem : rep.members) EXPECT_LE(mem.sobolev_sq, ps.rho * ps.rho);
  }
}

TEST(VerifyPacking, SeparationAtThresholdDistance) {
  const Index m = 64, l = 32, r = 1;
  const auto spec = square_spectrum(hadamard(m));
  const double kappa = 0.01;
  Matrix x = Matrix::Ones(l / 2, r);
  Matrix y = x;
  y(3, 0) = -1.0;  // distance l' r / 16 = 1
  const auto kx = detail::packing_kernel(spec, detail::packing_block(x, kappa, l / 2, true));
  const auto ky = detail::packing_kernel(spec, detail::packing_block(y, kappa, l / 2, true));
  const double md = static_cast<double>(m);
  const double separation = (kx - ky).squaredNorm() / (16.0 * md * md);
  // 2 (two off-diagonal blocks) * (2 kappa)^2 * 1 flipped entry * 16 tiles / 16.
  const double expect = 2.0 * 4.0 * kappa * kappa * 1.0 * 16.0 / (16.0 * md * md);
  EXPECT_NEAR(separation, expect, 1e-18);
  EXPECT_GE(separation, std::pow(2.0, -10.0) * kappa * kappa * l * l / (md * md));
}

TEST(PackingIo, WritesFiles) {
  const auto spec = square_spectrum(hadamard(64));
  const auto ps = size(64, 1, 1e4, 1.0, 1.0);
  const auto set = build_packing(ps, spec, 32, 4.0, PackingMode::Dense, 1, 100, 3);
  const auto dir = (std::filesystem::temp_directory_path() / "gsk_packing_test").string();
  write_packing(set, dir);
  write_packing_pairs_csv(verify_packing(set, ps, spec, ps.n), dir + "/pairs.csv");
  EXPECT_TRUE(std::filesystem::exists(dir + "/kernel_0.txt"));
  std::ifstream in(dir + "/pairs.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, "i,j,hamming,kl,kl_bound,kl_quadratic,separation,separation_bound");
}
