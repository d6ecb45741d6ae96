#pragma once

#include "gsk/common.hpp"
#include "gsk/random.hpp"
#include "gsk/spectra.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

namespace gsk {

/// Symmetric kernels are plain m x m matrices; these helpers enforce symmetry
/// at the boundaries where kernels enter the library.
inline void require_kernel(const Matrix& s, Index m, const char* where) {
  require(s.rows() == m && s.cols() == m, std::string(where) + ": dimension mismatch");
  require(is_symmetric(s, 1e-12), std::string(where) + ": kernel must be symmetric");
}

struct KernelNorms {
  double nuclear = 0.0;
  double frobenius = 0.0;
  double op = 0.0;
  double l2_pi2 = 0.0;          // m^-1 ||S||_2
  double sobolev_l2_pi2 = 0.0;  // m^-1 ||W^{1/2} S||_2
  double sup = 0.0;
};

/// ||W^{1/2} S||_2^2 = sum_k lambda_k ||S phi_k||^2.
inline double sobolev_energy(const Matrix& s, const SpectralDecomposition& spec) {
  const Matrix coords = spec.eigenvectors().transpose() * s;
  return (spec.eigenvalues().array() * coords.rowwise().squaredNorm().array()).sum();
}

inline double sobolev_norm_l2_pi2(const Matrix& s, const SpectralDecomposition& spec) {
  return std::sqrt(std::max(0.0, sobolev_energy(s, spec))) / static_cast<double>(s.rows());
}

inline double l2_pi2_norm(const Matrix& s) { return s.norm() / static_cast<double>(s.rows()); }

inline double l2_pi2_distance_sq(const Matrix& a, const Matrix& b) {
  const double m = static_cast<double>(a.rows());
  return (a - b).squaredNorm() / (m * m);
}

inline double nuclear_norm(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  return es.eigenvalues().cwiseAbs().sum();
}

inline KernelNorms norms(const Matrix& s, const SpectralDecomposition& spec) {
  require_kernel(s, spec.size(), "norms");
  KernelNorms out;
  const double m = static_cast<double>(s.rows());
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s), Eigen::EigenvaluesOnly);
  const Vector mu = es.eigenvalues();
  out.nuclear = mu.cwiseAbs().sum();
  out.frobenius = std::sqrt(mu.squaredNorm());
  out.op = mu.cwiseAbs().maxCoeff();
  out.l2_pi2 = out.frobenius / m;
  out.sobolev_l2_pi2 = sobolev_norm_l2_pi2(s, spec);
  out.sup = s.cwiseAbs().maxCoeff();
  return out;
}

/// Entrywise clamp to [-a, a].
inline Matrix truncate(const Matrix& s, double a) {
  require(a > 0.0, "truncate: bound must be positive");
  return s.cwiseMax(-a).cwiseMin(a);
}

struct SignSupport {
  Matrix sign;       // sum sign(mu_j) psi_j (x) psi_j
  Matrix projector;  // P_L onto supp(S)
  Matrix basis;      // orthonormal basis of supp(S), one column per nonzero eigenvalue
  Index rank = 0;
};

/// Scale-aware cutoff below which eigenvalues of `s` count as zero.
inline double default_rank_tolerance(const Matrix& s) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(s, Eigen::EigenvaluesOnly);
  const double op = es.eigenvalues().cwiseAbs().maxCoeff();
  return std::max(1e-9 * op, std::numeric_limits<double>::min());
}

inline SignSupport sign_and_support(const Matrix& s, double zero_tol) {
  require(zero_tol > 0.0, "sign_and_support: tolerance must be positive");
  require(s.rows() == s.cols(), "sign_and_support: kernel must be square");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(s));
  const Index m = s.rows();
  SignSupport out;
  out.sign = Matrix::Zero(m, m);
  std::vector<Index> kept;
  for (Index j = 0; j < m; ++j) {
    const double mu = es.eigenvalues()(j);
    if (std::abs(mu) <= zero_tol) continue;
    kept.push_back(j);
    const auto psi = es.eigenvectors().col(j);
    out.sign.noalias() += (mu > 0 ? 1.0 : -1.0) * psi * psi.transpose();
  }
  out.rank = static_cast<Index>(kept.size());
  out.basis.resize(m, out.rank);
  for (Index c = 0; c < out.rank; ++c) out.basis.col(c) = es.eigenvectors().col(kept[c]);
  out.projector = out.basis * out.basis.transpose();
  return out;
}

inline SignSupport sign_and_support(const Matrix& s) {
  return sign_and_support(s, default_rank_tolerance(s));
}

inline Index kernel_rank(const Matrix& s) { return sign_and_support(s).rank; }

/// Coherence of supp(S) with the eigenbasis of W:
/// phi(S; lambda) = sum_{lambda_j <= lambda} ||P_L phi_j||^2.
class CoherenceFunction {
public:
  CoherenceFunction(const Matrix& s, const SpectralDecomposition& spec)
      : CoherenceFunction(sign_and_support(s), spec) {
    require_kernel(s, spec.size(), "coherence");
  }

  CoherenceFunction(const SignSupport& support, const SpectralDecomposition& spec)
      : eigenvalues_(spec.eigenvalues()), rank_(support.rank) {
    require(support.rank >= 1, "coherence: zero kernel has no support");
    weights_ = (support.basis.transpose() * spec.eigenvectors()).colwise().squaredNorm();
    cumulative_.resize(weights_.size());
    double acc = 0.0;
    for (Index j = 0; j < weights_.size(); ++j) cumulative_[j] = acc += weights_(j);
  }

  double operator()(double lambda) const {
    const Index count = std::upper_bound(eigenvalues_.data(),
                                         eigenvalues_.data() + eigenvalues_.size(), lambda) -
                        eigenvalues_.data();
    return count == 0 ? 0.0 : cumulative_[count - 1];
  }

  /// ||P_L phi_k||^2 for k = 1..m (stored 0-based).
  const Vector& weights() const { return weights_; }
  const Vector& eigenvalues() const { return eigenvalues_; }
  Index rank() const { return rank_; }

private:
  Vector eigenvalues_;
  Vector weights_;
  std::vector<double> cumulative_;
  Index rank_;
};

inline double coherence_function(const Matrix& s, const SpectralDecomposition& spec,
                                 double lambda) {
  return CoherenceFunction(s, spec)(lambda);
}

/// Smallest nondecreasing majorant of phi(S; .) whose ratio to F_bar is
/// nonincreasing:
///   phi_bar(x) = sup_{s <= x} F_bar(s) * sup_{t >= s} phi(t) / F_bar(t).
///
/// phi is a step function jumping only at eigenvalues of W and F_bar is
/// nondecreasing, so on each interval between eigenvalues phi/F_bar is
/// nonincreasing and F_bar(s) * (tail sup) is nondecreasing. Both suprema are
/// therefore attained on {eigenvalues} union {x}; left limits at a jump are
/// dominated by the value at the jump itself. `fbar` may be any admissible
/// nondecreasing majorant of F, not only the minimal one.
class CoherenceMajorant {
public:
  using Fbar = std::function<double(double)>;

  CoherenceMajorant(CoherenceFunction phi, Fbar fbar) : phi_(std::move(phi)), fbar_(std::move(fbar)) {
    const Vector& ev = phi_.eigenvalues();
    for (Index k = 0; k < ev.size(); ++k)
      if (points_.empty() || ev(k) > points_.back()) points_.push_back(ev(k));
    const std::size_t n = points_.size();
    tail_.assign(n + 1, 0.0);  // tail_[i] = max_{j >= i} phi/F_bar at points_[j]
    for (std::size_t i = n; i-- > 0;) tail_[i] = std::max(tail_[i + 1], ratio(points_[i]));
    prefix_.assign(n, 0.0);  // prefix_[i] = max_{j <= i} candidate value at points_[j]
    for (std::size_t i = 0; i < n; ++i) {
      const double here = std::max(phi_(points_[i]), fbar_(points_[i]) * tail_[i + 1]);
      prefix_[i] = i ? std::max(prefix_[i - 1], here) : here;
    }
  }

  double operator()(double lambda) const {
    require(lambda >= 0.0, "coherence majorant: argument must be nonnegative");
    const auto it = std::upper_bound(points_.begin(), points_.end(), lambda);
    const std::size_t next = static_cast<std::size_t>(it - points_.begin());
    double best = next ? prefix_[next - 1] : 0.0;
    best = std::max(best, phi_(lambda));
    best = std::max(best, fbar_(lambda) * tail_[next]);
    return best;
  }

  const CoherenceFunction& coherence() const { return phi_; }

private:
  double ratio(double x) const {
    const double f = fbar_(x);
    return f > 0.0 ? phi_(x) / f : 0.0;
  }

  CoherenceFunction phi_;
  Fbar fbar_;
  std::vector<double> points_;
  std::vector<double> tail_;
  std::vector<double> prefix_;
};

inline CoherenceMajorant make_coherence_majorant(const Matrix& s, const SpectralDecomposition& spec,
                                                 const MajorantFunction& fbar) {
  return CoherenceMajorant(CoherenceFunction(s, spec), [fbar](double x) { return fbar(x); });
}

inline double coherence_majorant(const Matrix& s, const SpectralDecomposition& spec,
                                 const MajorantFunction& fbar, double lambda) {
  return make_coherence_majorant(s, spec, fbar)(lambda);
}

/// S_{*,l}: compression of S onto span{phi_1..phi_l}.
inline Matrix eigenbasis_truncation(const Matrix& s, const SpectralDecomposition& spec, Index l) {
  require_kernel(s, spec.size(), "eigenbasis truncation");
  require(l >= 1 && l <= spec.size(), "eigenbasis truncation: l out of range");
  const auto basis = spec.eigenvectors().leftCols(l);
  const Matrix coords = basis.transpose() * s * basis;
  return symmetrize(basis * coords * basis.transpose());
}

/// Weighting of W-eigenvectors used to draw oracle eigenvectors.
struct SmoothnessProfile {
  enum class Kind { Smooth, Flat, Power };
  Kind kind = Kind::Smooth;
  double exponent = 1.0;  // Power only: weight lambda_j^-exponent

  static SmoothnessProfile smooth() { return {Kind::Smooth, 1.0}; }
  static SmoothnessProfile flat() { return {Kind::Flat, 0.0}; }
  static SmoothnessProfile power(double s) { return {Kind::Power, s}; }

  /// Accepts "smooth", "flat" or "power:<s>".
  static SmoothnessProfile parse(const std::string& text) {
    if (text == "smooth") return smooth();
    if (text == "flat") return flat();
    if (text.rfind("power:", 0) == 0) return power(std::stod(text.substr(6)));
    throw Error("unknown smoothness profile: " + text);
  }

  Vector weights(const SpectralDecomposition& spec) const {
    const Vector& lam = spec.eigenvalues();
    Vector w(lam.size());
    const double floor = spec.k0() <= spec.size() ? spec.lambda(spec.k0()) : 1.0;
    for (Index j = 0; j < lam.size(); ++j) {
      switch (kind) {
        case Kind::Smooth: w(j) = 1.0 / (1.0 + lam(j)); break;
        case Kind::Flat: w(j) = 1.0; break;
        case Kind::Power: w(j) = std::pow(std::max(lam(j), floor), -exponent); break;
      }
    }
    return w;
  }
};

struct OracleProfile {
  Index r = 0;
  double rho = 0.0;  // bound on ||W^{1/2} S||_{L2(Pi^2)}
  double a = 0.0;    // bound on max |S(u,v)|
  Matrix support_projector;
};

/// Draws a rank-r kernel with Sobolev norm <= rho and entries bounded by a.
///
/// Eigenvectors are orthonormalized Gaussian combinations of the W-eigenbasis
/// weighted by `profile`; the spectrum is rescaled so the tighter of the two
/// constraints is met at 95% of its bound.
inline std::pair<Matrix, OracleProfile> generate_oracle(const SpectralDecomposition& spec, Index r,
                                                        double rho, double a,
                                                        const SmoothnessProfile& profile,
                                                        std::uint64_t seed) {
  const Index m = spec.size();
  require(r >= 1 && r <= m, "generate_oracle: rank must lie in [1, m]");
  require(rho > 0.0 && a > 0.0, "generate_oracle: rho and a must be positive");
  CounterRng rng(seed);
  const Vector w = profile.weights(spec);

  Matrix coeffs(m, r);
  for (Index j = 0; j < m; ++j)
    for (Index k = 0; k < r; ++k) coeffs(j, k) = w(j) * rng.normal();
  Eigen::HouseholderQR<Matrix> qr(spec.eigenvectors() * coeffs);
  const Matrix psi = qr.householderQ() * Matrix::Identity(m, r);

  Vector mu(r);
  for (Index k = 0; k < r; ++k) mu(k) = (0.5 + 0.5 * rng.uniform()) * rng.rademacher();
  Matrix s = symmetrize(psi * mu.asDiagonal() * psi.transpose());

  const double sob = sobolev_norm_l2_pi2(s, spec);
  const double sup = s.cwiseAbs().maxCoeff();
  double scale = 0.95 * a / sup;
  if (sob > 0.0) scale = std::min(scale, 0.95 * rho / sob);
  if (!(scale > 0.0) || !std::isfinite(scale))
    throw NumericalError("generate_oracle: could not scale kernel into the constraint set");
  s *= scale;

  OracleProfile info;
  info.r = r;
  info.rho = rho;
  info.a = a;
  info.support_projector = psi * psi.transpose();
  return {std::move(s), std::move(info)};
}

/// Kernel text format: first line m, then m rows of m whitespace-separated values.
inline void write_kernel(const Matrix& s, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write kernel file: " + path);
  out << s.rows() << '\n';
  out.precision(17);
  for (Index i = 0; i < s.rows(); ++i) {
    for (Index j = 0; j < s.cols(); ++j) out << (j ? " " : "") << s(i, j);
    out << '\n';
  }
}

inline Matrix read_kernel(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open kernel file: " + path);
  long m = 0;
  require(static_cast<bool>(in >> m) && m > 0, "kernel file: bad header");
  Matrix s(m, m);
  for (long i = 0; i < m; ++i)
    for (long j = 0; j < m; ++j) require(static_cast<bool>(in >> s(i, j)), "kernel file: truncated");
  require(is_symmetric(s, 1e-12), "kernel file: matrix is not symmetric");
  return symmetrize(s);
}

}  // namespace gsk
