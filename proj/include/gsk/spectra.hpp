#pragma once

#include "gsk/common.hpp"
#include "gsk/graph.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace gsk {

/// Eigenvalues below this are treated as exact zeros of a PSD operator whose
/// largest eigenvalue is `top`.
inline double zero_eigenvalue_threshold(double top) { return std::max(1e-10, 1e-12 * top); }

/// Spectral decomposition W = sum_k lambda_k phi_k (x) phi_k of the smoothing operator.
///
/// Eigenvalues are ascending and nonnegative; eigenvectors are the columns of
/// `eigenvectors()`. Indices in the accessors below are 1-based (l = 1..m) to
/// match how the rate formulas are stated, with lambda(l) = +inf for l > m.
class SpectralDecomposition {
public:
  SpectralDecomposition(Vector eigenvalues, Matrix eigenvectors)
      : values_(std::move(eigenvalues)), vectors_(std::move(eigenvectors)) {
    const Index m = values_.size();
    require(m > 0, "spectrum: empty");
    require(vectors_.rows() == m && vectors_.cols() == m,
            "spectrum: eigenvector matrix must be m x m");
    require(values_.allFinite(), "spectrum: eigenvalues must be finite");
    for (Index k = 0; k + 1 < m; ++k)
      require(values_(k) <= values_(k + 1), "spectrum: eigenvalues must be ascending");
    require(values_(0) >= 0.0, "spectrum: eigenvalues must be nonnegative");
    const double orth = (vectors_.transpose() * vectors_ - Matrix::Identity(m, m))
                            .cwiseAbs()
                            .maxCoeff();
    require(orth <= 1e-8, "spectrum: eigenvectors must be orthonormal");

    const double cut = zero_eigenvalue_threshold(values_(m - 1));
    k0_ = m + 1;
    for (Index k = 0; k < m; ++k) {
      if (values_(k) > cut) {
        k0_ = k + 1;
        break;
      }
      values_(k) = 0.0;
    }
    growth_c_ = 1.0;
    for (Index k = k0_; k < m; ++k)  // 1-based k from k0 to m-1
      growth_c_ = std::max(growth_c_, values_(k) / values_(k - 1));
  }

  /// Spectrum with the canonical basis as eigenvectors.
  static SpectralDecomposition diagonal(const Vector& eigenvalues) {
    return {eigenvalues, Matrix::Identity(eigenvalues.size(), eigenvalues.size())};
  }

  Index size() const { return values_.size(); }
  const Vector& eigenvalues() const { return values_; }
  const Matrix& eigenvectors() const { return vectors_; }

  /// lambda_l for l >= 1; +inf beyond m.
  double lambda(Index l) const { return l > size() ? kInf : values_(l - 1); }
  double lambda_max() const { return values_(size() - 1); }

  /// Index (1-based) of the first strictly positive eigenvalue; m + 1 if none.
  Index k0() const { return k0_; }

  /// Smallest c >= 1 with lambda_{k+1} <= c lambda_k for all k >= k0.
  double growth_c() const { return growth_c_; }

  Matrix reconstruct() const {
    return vectors_ * values_.asDiagonal() * vectors_.transpose();
  }

private:
  Vector values_;
  Matrix vectors_;
  Index k0_ = 1;
  double growth_c_ = 1.0;
};

/// Eigendecomposition of Delta^q for a symmetric PSD `laplacian`.
inline SpectralDecomposition smoothing_operator(const Matrix& laplacian, double q) {
  require(q > 0.0 && std::isfinite(q), "smoothing operator: power q must be positive");
  require(laplacian.rows() > 0 && is_symmetric(laplacian, 1e-8),
          "smoothing operator: input must be symmetric");
  Eigen::SelfAdjointEigenSolver<Matrix> solver(symmetrize(laplacian));
  if (solver.info() != Eigen::Success)
    throw NumericalError("smoothing operator: eigensolver did not converge");

  Vector mu = solver.eigenvalues();
  const Index m = mu.size();
  const double top = std::max(0.0, mu(m - 1));
  require(mu(0) >= -1e-8 * std::max(1.0, top),
          "smoothing operator: input has a negative eigenvalue (not PSD)");
  const double cut = zero_eigenvalue_threshold(top);
  Vector lambda(m);
  for (Index k = 0; k < m; ++k) lambda(k) = mu(k) <= cut ? 0.0 : std::pow(mu(k), q);

  // x -> x^q is increasing, so the order is kept; a stable sort guards against
  // rounding in pow producing a local inversion between near-equal values.
  std::vector<Index> order(m);
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return lambda(a) < lambda(b); });
  Vector sorted(m);
  Matrix vectors(m, m);
  for (Index k = 0; k < m; ++k) {
    sorted(k) = lambda(order[k]);
    vectors.col(k) = solver.eigenvectors().col(order[k]);
  }
  return {std::move(sorted), std::move(vectors)};
}

inline SpectralDecomposition smoothing_operator(const WeightedGraph& graph, double q) {
  return smoothing_operator(laplacian(graph), q);
}

/// F(lambda): number of eigenvalues <= lambda.
inline Index spectral_function(const SpectralDecomposition& spec, double lambda) {
  const auto& v = spec.eigenvalues();
  return std::upper_bound(v.data(), v.data() + v.size(), lambda) - v.data();
}

/// Minimal regularized majorant of the spectral function for exponent gamma:
/// the smallest F_bar >= F that is nondecreasing with F_bar(x) / x^(1-gamma)
/// nonincreasing, capped at m from lambda_m on.
///
/// Closed form: F_bar(x) = x^(1-gamma) * sup_{s >= x} F(s) / s^(1-gamma). On
/// each interval between eigenvalues F is constant, so s -> F(s)/s^(1-gamma)
/// decreases there and the supremum is attained at x itself or at a larger
/// eigenvalue. Evaluation is exact at every query point.
class MajorantFunction {
public:
  MajorantFunction(const SpectralDecomposition& spec, double gamma)
      : gamma_(gamma), eigenvalues_(spec.eigenvalues()) {
    require(gamma > 0.0 && gamma < 1.0, "majorant: gamma must lie in (0, 1)");
    m_ = static_cast<double>(spec.size());
    lambda_max_ = spec.lambda_max();
    for (Index k = 0; k < eigenvalues_.size(); ++k) {
      const double b = eigenvalues_(k);
      if (b > 0.0 && (breakpoints_.empty() || b > breakpoints_.back()))
        breakpoints_.push_back(b);
    }
    suffix_.assign(breakpoints_.size(), 0.0);
    for (std::size_t i = breakpoints_.size(); i-- > 0;) {
      const double b = breakpoints_[i];
      const double here = count(b) / std::pow(b, 1.0 - gamma_);
      suffix_[i] = i + 1 < breakpoints_.size() ? std::max(here, suffix_[i + 1]) : here;
    }
  }

  double gamma() const { return gamma_; }

  /// Distinct positive eigenvalues, ascending.
  const std::vector<double>& breakpoints() const { return breakpoints_; }

  std::vector<double> values() const {
    std::vector<double> out;
    out.reserve(breakpoints_.size());
    for (double b : breakpoints_) out.push_back((*this)(b));
    return out;
  }

  double operator()(double lambda) const {
    require(lambda >= 0.0, "majorant: argument must be nonnegative");
    if (lambda >= lambda_max_) return m_;
    const double f = count(lambda);
    if (lambda == 0.0) return f;
    const auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), lambda);
    if (it == breakpoints_.end()) return f;
    const double tail = suffix_[static_cast<std::size_t>(it - breakpoints_.begin())];
    return std::max(f, std::pow(lambda, 1.0 - gamma_) * tail);
  }

private:
  double count(double lambda) const {
    return static_cast<double>(
        std::upper_bound(eigenvalues_.data(), eigenvalues_.data() + eigenvalues_.size(),
                         lambda) -
        eigenvalues_.data());
  }

  double gamma_;
  Vector eigenvalues_;
  double m_ = 0.0;
  double lambda_max_ = 0.0;
  std::vector<double> breakpoints_;
  std::vector<double> suffix_;
};

inline MajorantFunction regularized_majorant(const SpectralDecomposition& spec, double gamma) {
  return MajorantFunction(spec, gamma);
}

}  // namespace gsk
