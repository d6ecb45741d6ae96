#pragma once

#include "gsk/common.hpp"
#include "gsk/kernel.hpp"
#include "gsk/random.hpp"
#include "gsk/rates.hpp"
#include "gsk/spectra.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <string>
#include <vector>

namespace gsk {

enum class PackingMode { Dense, Sparse };

inline PackingMode parse_packing_mode(const std::string& text) {
  if (text == "dense") return PackingMode::Dense;
  if (text == "sparse") return PackingMode::Sparse;
  throw Error("packing: mode must be dense or sparse, got '" + text + "'");
}

inline const char* to_string(PackingMode mode) {
  return mode == PackingMode::Dense ? "dense" : "sparse";
}

/// The three admissible ceilings on the packing amplitude and their minimum.
struct KappaSchedule {
  double information = 0.0;  // keeps the averaged KL below a tenth of the code entropy
  double coherence = 0.0;    // keeps the entry bound with probability >= 3/4
  double sobolev = 0.0;      // keeps the kernels inside the Sobolev ball
  double value = 0.0;
};

inline KappaSchedule kappa_schedule(const ProblemSize& ps, const SpectralDecomposition& spec,
                                    Index l, double p, PackingMode mode) {
  ps.validate();
  require(ps.m == spec.size(), "packing: problem size m does not match the spectrum");
  require(l >= 1 && l <= ps.m, "packing: l out of range");
  require(p >= 2.0, "packing: p must be at least 2");
  const double lam = spec.lambda(l);
  if (lam <= 0.0) throw Error("packing: lambda_l is zero, the Sobolev ceiling is undefined");
  const double m = static_cast<double>(ps.m);
  const double ll = static_cast<double>(l);
  const double r = static_cast<double>(std::min(ps.r, l));
  KappaSchedule k;
  k.information = ps.a * (m / ll) * std::sqrt(r * ll / ps.n) / 16.0;
  const double shape = mode == PackingMode::Dense
                           ? std::sqrt(r) / std::sqrt(ll)
                           : 1.0 / std::sqrt(static_cast<double>(sparsity_d(spec)));
  k.coherence = std::pow(2.0, -(1.0 + 2.0 / p)) / std::sqrt(p - 1.0) /
                q_p_partial(spec, p, l) * (m / ll) * ps.a * shape * std::pow(m, -2.0 / p);
  k.sobolev = (m / ll) * 4.0 * ps.rho / std::sqrt(lam);
  k.value = std::min({k.information, k.coherence, k.sobolev});
  return k;
}

struct PackingSet {
  Index m = 0;
  Index l = 0;
  Index l_prime = 0;
  Index l_double_prime = 0;
  Index r = 0;
  double a = 1.0;
  double kappa = 0.0;
  KappaSchedule schedule;
  PackingMode mode = PackingMode::Dense;
  bool block_regime = true;          // r <= l'': the code is l' x r and tiled across l''
  Index hamming_threshold = 0;       // required pairwise Hamming distance
  std::vector<Matrix> codes;         // entries +-1
  std::vector<Matrix> kernels;       // K_sigma, one per code
  long draws = 0;                    // candidate sign patterns drawn
  long filter_accepted = 0;          // of those, how many satisfied the entry bound
  double target_log2_cardinality = 0.0;  // l' r / 16, the size the existence argument promises

  double filter_rate() const {
    return draws > 0 ? static_cast<double>(filter_accepted) / static_cast<double>(draws) : 0.0;
  }
};

namespace detail {

inline Index hamming(const Matrix& x, const Matrix& y) { return (x.array() != y.array()).count(); }

/// Off-diagonal block coupling the first l' eigenvectors to the next l''.
inline Matrix packing_block(const Matrix& code, double kappa, Index l_double_prime, bool tiled) {
  const Index lp = code.rows();
  if (!tiled) return kappa * code;
  const Index r = code.cols();
  Matrix block = Matrix::Zero(lp, l_double_prime);
  for (Index k = 0; k < l_double_prime / r; ++k) block.middleCols(k * r, r) = kappa * code;
  return block;
}

inline Matrix packing_kernel(const SpectralDecomposition& spec, const Matrix& block) {
  const Index lp = block.rows();
  const Index lpp = block.cols();
  const Matrix& phi = spec.eigenvectors();
  const Matrix half = phi.leftCols(lp) * block * phi.middleCols(lp, lpp).transpose();
  return half + half.transpose();
}

}  // namespace detail

/// Sign-pattern packing for the minimax lower bound: random patterns are kept
/// when their kernel respects the entry bound and when they are far enough
/// in Hamming distance from every pattern kept so far.
inline PackingSet build_packing(const ProblemSize& ps, const SpectralDecomposition& spec, Index l,
                                double p, PackingMode mode, std::uint64_t seed, long max_draws,
                                std::size_t max_codes = 32) {
  const Index l0 = std::min<Index>(spec.k0(), 32);
  if (mode == PackingMode::Dense)
    require(l >= std::max<Index>(l0, 32), "packing: dense mode needs l >= max(l0, 32)");
  else
    require(l >= std::max<Index>(l0, 2), "packing: sparse mode needs l >= max(l0, 2)");
  require(max_draws >= 1 && max_codes >= 2, "packing: need max_draws >= 1 and max_codes >= 2");

  PackingSet set;
  set.schedule = kappa_schedule(ps, spec, l, p, mode);
  set.kappa = set.schedule.value;
  set.m = ps.m;
  set.l = l;
  set.l_prime = l / 2;
  set.l_double_prime = l - set.l_prime;
  set.r = ps.r;
  set.a = ps.a;
  set.mode = mode;
  set.block_regime = ps.r <= set.l_double_prime;
  const Index cols = set.block_regime ? ps.r : set.l_double_prime;
  const double entries = static_cast<double>(set.l_prime * cols);
  set.target_log2_cardinality = entries / 16.0;
  set.hamming_threshold = std::max<Index>(1, static_cast<Index>(std::ceil(entries / 16.0)));

  CounterRng rng(seed);
  Matrix code(set.l_prime, cols);
  while (set.draws < max_draws && set.codes.size() < max_codes) {
    ++set.draws;
    for (Index j = 0; j < cols; ++j)
      for (Index i = 0; i < set.l_prime; ++i) code(i, j) = rng.rademacher();
    const bool far = std::all_of(set.codes.begin(), set.codes.end(), [&](const Matrix& c) {
      return detail::hamming(c, code) >= set.hamming_threshold;
    });
    const Matrix kernel = detail::packing_kernel(
        spec, detail::packing_block(code, set.kappa, set.l_double_prime, set.block_regime));
    if (kernel.cwiseAbs().maxCoeff() > ps.a) continue;
    ++set.filter_accepted;
    if (!far) continue;
    set.codes.push_back(code);
    set.kernels.push_back(kernel);
  }
  if (set.codes.size() < 2)
    throw NumericalError("packing: found " + std::to_string(set.codes.size()) +
                         " admissible patterns in " + std::to_string(set.draws) +
                         " draws (filter acceptance " + std::to_string(set.filter_rate()) + ")");
  return set;
}

/// P(Y = +a | u, v) for each member; the conditional mean is K_sigma / 4.
inline std::vector<Matrix> packing_distributions(const PackingSet& set) {
  std::vector<Matrix> out;
  out.reserve(set.kernels.size());
  for (const Matrix& k : set.kernels) {
    require(k.cwiseAbs().maxCoeff() <= set.a * (1.0 + 1e-12),
            "packing: kernel violates the entry bound");
    out.push_back((0.5 + k.array() / (8.0 * set.a)).matrix());
  }
  return out;
}

/// Binary KL(Bern(p) || Bern(q)).
inline double bernoulli_kl(double p, double q) {
  double out = 0.0;
  if (p > 0.0) out += p * std::log(p / q);
  if (p < 1.0) out += (1.0 - p) * std::log((1.0 - p) / (1.0 - q));
  return out;
}

struct PackingMemberCheck {
  double sup = 0.0;
  Index rank = 0;
  double sobolev_sq = 0.0;        // ||W^{1/2} K/4||^2_{L2(Pi^2)}
  double kernel_sobolev_sq = 0.0; // ||W^{1/2} K||^2_{L2(Pi^2)}
  double kernel_sobolev_bound = 0.0;  // lambda_l kappa^2 l^2 / m^2
};

struct PackingPairCheck {
  std::size_t i = 0, j = 0;
  Index hamming = 0;
  double kl = 0.0;                 // n-fold, larger of the two directions
  double kl_bound = 0.0;           // 4 n kappa^2 l^2 / (10 a^2 m^2)
  double kl_quadratic = 0.0;       // n ||K - K'||_2^2 / (10 a^2 m^2)
  double separation = 0.0;         // ||S_P - S_P'||^2_{L2(Pi^2)}
  double separation_bound = 0.0;   // 2^-10 kappa^2 l^2 / m^2
};

struct PackingReport {
  std::vector<PackingMemberCheck> members;
  std::vector<PackingPairCheck> pairs;
  double rho = 0.0;
  Index rank_cap = 0;
  long entry_violations = 0;
  long rank_violations = 0;     // rank(K_sigma) > r
  long sobolev_violations = 0;
  long hamming_violations = 0;
  long kl_violations = 0;
  long separation_violations = 0;
  double mean_kl = 0.0;         // average n-fold KL from member 0 to the others
  double fano_level = 0.0;      // log(card - 1) / 10

  long violations() const {
    return entry_violations + rank_violations + sobolev_violations + hamming_violations +
           kl_violations + separation_violations;
  }
};

inline PackingReport verify_packing(const PackingSet& set, const ProblemSize& ps,
                                    const SpectralDecomposition& spec, double n) {
  require(n > 0.0, "packing: n must be positive");
  require(spec.size() == set.m, "packing: spectrum size differs from the set");
  const double m = static_cast<double>(set.m);
  const double ll = static_cast<double>(set.l);
  const double slack = 1e-12;
  PackingReport rep;
  rep.rho = ps.rho;
  rep.rank_cap = set.r;

  for (const Matrix& k : set.kernels) {
    PackingMemberCheck c;
    c.sup = k.cwiseAbs().maxCoeff();
    c.rank = kernel_rank(k);
    c.kernel_sobolev_sq = sobolev_energy(k, spec) / (m * m);
    c.kernel_sobolev_bound = spec.lambda(set.l) * set.kappa * set.kappa * ll * ll / (m * m);
    c.sobolev_sq = c.kernel_sobolev_sq / 16.0;
    if (c.sup > set.a * (1.0 + slack)) ++rep.entry_violations;
    if (c.rank > set.r) ++rep.rank_violations;
    if (c.sobolev_sq > ps.rho * ps.rho * (1.0 + 1e-9) ||
        c.kernel_sobolev_sq > c.kernel_sobolev_bound * (1.0 + 1e-9))
      ++rep.sobolev_violations;
    rep.members.push_back(c);
  }

  const std::vector<Matrix> probs = packing_distributions(set);
  const double kl_bound = 4.0 * n * set.kappa * set.kappa / (10.0 * set.a * set.a) * ll * ll / (m * m);
  const double sep_bound = std::pow(2.0, -10.0) * set.kappa * set.kappa * ll * ll / (m * m);
  double kl_from_first = 0.0;
  for (std::size_t i = 0; i < set.kernels.size(); ++i) {
    for (std::size_t j = i + 1; j < set.kernels.size(); ++j) {
      PackingPairCheck c;
      c.i = i;
      c.j = j;
      c.hamming = detail::hamming(set.codes[i], set.codes[j]);
      double forward = 0.0, backward = 0.0;
      const Matrix& p = probs[i];
      const Matrix& q = probs[j];
      for (Index v = 0; v < set.m; ++v)
        for (Index u = 0; u < set.m; ++u) {
          forward += bernoulli_kl(p(u, v), q(u, v));
          backward += bernoulli_kl(q(u, v), p(u, v));
        }
      c.kl = n * std::max(forward, backward) / (m * m);
      if (i == 0) kl_from_first += n * forward / (m * m);
      const double diff = (set.kernels[i] - set.kernels[j]).squaredNorm();
      c.kl_quadratic = n * diff / (10.0 * set.a * set.a * m * m);
      c.kl_bound = kl_bound;
      c.separation = diff / (16.0 * m * m);
      c.separation_bound = sep_bound;
      if (c.hamming < set.hamming_threshold) ++rep.hamming_violations;
      if (c.kl > c.kl_bound * (1.0 + slack) || c.kl > c.kl_quadratic * (1.0 + slack))
        ++rep.kl_violations;
      if (c.separation < c.separation_bound * (1.0 - slack)) ++rep.separation_violations;
      rep.pairs.push_back(c);
    }
  }
  const double card = static_cast<double>(set.kernels.size());
  rep.mean_kl = card > 1 ? kl_from_first / (card - 1.0) : 0.0;
  rep.fano_level = card > 2 ? std::log(card - 1.0) / 10.0 : 0.0;
  return rep;
}

inline void write_packing_pairs_csv(const PackingReport& rep, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("packing: cannot write " + path);
  out << std::setprecision(17);
  out << "i,j,hamming,kl,kl_bound,kl_quadratic,separation,separation_bound\n";
  for (const auto& c : rep.pairs)
    out << c.i << ',' << c.j << ',' << c.hamming << ',' << c.kl << ',' << c.kl_bound << ','
        << c.kl_quadratic << ',' << c.separation << ',' << c.separation_bound << '\n';
}

/// Writes kernel_<k>.txt per member and a key=value summary to `dir`.
inline void write_packing(const PackingSet& set, const std::string& dir) {
  std::filesystem::create_directories(dir);
  for (std::size_t k = 0; k < set.kernels.size(); ++k)
    write_kernel(set.kernels[k], dir + "/kernel_" + std::to_string(k) + ".txt");
  std::ofstream out(dir + "/packing.txt");
  if (!out) throw Error("packing: cannot write to " + dir);
  out << std::setprecision(17);
  out << "m=" << set.m << "\nl=" << set.l << "\nl_prime=" << set.l_prime
      << "\nl_double_prime=" << set.l_double_prime << "\nr=" << set.r << "\na=" << set.a
      << "\nkappa=" << set.kappa << "\nkappa_information=" << set.schedule.information
      << "\nkappa_coherence=" << set.schedule.coherence
      << "\nkappa_sobolev=" << set.schedule.sobolev << "\nmode=" << to_string(set.mode)
      << "\nregime=" << (set.block_regime ? "tiled" : "full")
      << "\nhamming_threshold=" << set.hamming_threshold << "\ncardinality=" << set.codes.size()
      << "\ntarget_log2_cardinality=" << set.target_log2_cardinality << "\ndraws=" << set.draws
      << "\nfilter_rate=" << set.filter_rate() << '\n';
  std::ofstream codes(dir + "/codes.txt");
  for (const Matrix& c : set.codes) {
    for (Index i = 0; i < c.rows(); ++i)
      for (Index j = 0; j < c.cols(); ++j) codes << (c(i, j) > 0 ? '+' : '-');
    codes << '\n';
  }
}

}  // namespace gsk
