#pragma once

#include "gsk/common.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <vector>

namespace gsk {

/// Eigenpairs of a symmetric matrix with |mu| > tau; columns of `vectors`
/// are orthonormal.
struct ThresholdedEigen {
  Vector values;
  Matrix vectors;
};

namespace detail {

inline ThresholdedEigen outer_eigenpairs_dense(const Matrix& z, double tau) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(z);
  if (es.info() != Eigen::Success) throw NumericalError("eigensolver failed");
  std::vector<Index> keep;
  for (Index j = 0; j < z.rows(); ++j)
    if (std::abs(es.eigenvalues()(j)) > tau) keep.push_back(j);
  ThresholdedEigen out;
  out.values.resize(static_cast<Index>(keep.size()));
  out.vectors.resize(z.rows(), static_cast<Index>(keep.size()));
  for (std::size_t c = 0; c < keep.size(); ++c) {
    out.values(static_cast<Index>(c)) = es.eigenvalues()(keep[c]);
    out.vectors.col(static_cast<Index>(c)) = es.eigenvectors().col(keep[c]);
  }
  return out;
}

/// Solves (T - shift I) x = b for symmetric tridiagonal T by Gaussian
/// elimination with partial pivoting; tiny pivots are nudged to `floor`.
inline void tridiagonal_shifted_solve(const Vector& diag, const Vector& sub, double shift,
                                      double floor, Vector& x) {
  const Index n = diag.size();
  // Row i of the factor holds u0 (diagonal), u1, u2 (two superdiagonals).
  std::vector<double> u0(n), u1(n, 0.0), u2(n, 0.0), lower(n, 0.0);
  std::vector<char> swapped(n, 0);
  double cur_d = diag(0) - shift;
  double cur_e = n > 1 ? sub(0) : 0.0;
  double cur_f = 0.0;
  for (Index i = 0; i + 1 < n; ++i) {
    const double below = sub(i);
    const double next_d = diag(i + 1) - shift;
    const double next_e = i + 2 < n ? sub(i + 1) : 0.0;
    if (std::abs(cur_d) >= std::abs(below)) {
      const double piv = std::abs(cur_d) < floor ? std::copysign(floor, cur_d == 0 ? 1.0 : cur_d) : cur_d;
      const double l = below / piv;
      u0[i] = piv;
      u1[i] = cur_e;
      u2[i] = cur_f;
      lower[i] = l;
      cur_d = next_d - l * cur_e;
      cur_e = next_e;
      cur_f = 0.0;
    } else {
      const double l = cur_d / below;
      u0[i] = below;
      u1[i] = next_d;
      u2[i] = next_e;
      lower[i] = l;
      swapped[i] = 1;
      cur_d = cur_e - l * next_d;
      cur_e = -l * next_e;
      cur_f = 0.0;
    }
  }
  u0[n - 1] = std::abs(cur_d) < floor ? std::copysign(floor, cur_d == 0 ? 1.0 : cur_d) : cur_d;
  for (Index i = 0; i + 1 < n; ++i) {
    if (swapped[i]) std::swap(x(i), x(i + 1));
    x(i + 1) -= lower[i] * x(i);
  }
  for (Index i = n - 1; i >= 0; --i) {
    double acc = x(i);
    if (i + 1 < n) acc -= u1[i] * x(i + 1);
    if (i + 2 < n) acc -= u2[i] * x(i + 2);
    x(i) = acc / u0[i];
  }
}

// Tridiagonalize, compute all eigenvalues of the tridiagonal form, obtain the
// selected eigenvectors by inverse iteration (re-orthogonalized inside
// clusters), then apply the Householder sequence to those vectors only.
// Returns false when the result fails its residual or orthogonality check.
inline bool outer_eigenpairs_tridiagonal(const Matrix& z, double tau, ThresholdedEigen& out) {
  const Index m = z.rows();
  Eigen::Tridiagonalization<Matrix> tri(z);
  const Vector diag = tri.diagonal();
  const Vector sub = tri.subDiagonal();
  Eigen::SelfAdjointEigenSolver<Matrix> values_only;
  values_only.computeFromTridiagonal(diag, sub, Eigen::EigenvaluesOnly);
  if (values_only.info() != Eigen::Success) return false;
  const Vector& all = values_only.eigenvalues();

  std::vector<Index> keep;
  for (Index j = 0; j < m; ++j)
    if (std::abs(all(j)) > tau) keep.push_back(j);
  const Index k = static_cast<Index>(keep.size());
  out.values.resize(k);
  if (k == 0) {
    out.vectors.resize(m, 0);
    return true;
  }
  if (k > m / 3) return false;  // dense path is cheaper

  double scale = 0.0;
  for (Index i = 0; i < m; ++i)
    scale = std::max(scale, std::abs(diag(i)) + (i > 0 ? std::abs(sub(i - 1)) : 0.0) +
                                (i + 1 < m ? std::abs(sub(i)) : 0.0));
  scale = std::max(scale, std::numeric_limits<double>::min());
  const double eps = std::numeric_limits<double>::epsilon();
  const double floor = eps * scale;
  const double cluster = 1e-3 * scale;

  Matrix t_vecs(m, k);
  for (Index c = 0; c < k; ++c) {
    const double mu = all(keep[c]);
    out.values(c) = mu;
    Vector x(m);
    for (Index i = 0; i < m; ++i) x(i) = 1.0 + 0.1 * std::sin(0.7 * static_cast<double>(i + 3 * c) + 1.3);
    for (int round = 0; round < 4; ++round) {
      tridiagonal_shifted_solve(diag, sub, mu, floor, x);
      for (Index p = c - 1; p >= 0 && std::abs(all(keep[p]) - mu) < cluster; --p)
        x -= t_vecs.col(p).dot(x) * t_vecs.col(p);
      const double norm = x.norm();
      if (!(norm > 0.0) || !std::isfinite(norm)) return false;
      x /= norm;
    }
    t_vecs.col(c) = x;
  }

  // Accept only if every pair is accurate.
  Matrix residual(m, k);
  for (Index c = 0; c < k; ++c)
    for (Index i = 0; i < m; ++i) {
      double tv = diag(i) * t_vecs(i, c);
      if (i > 0) tv += sub(i - 1) * t_vecs(i - 1, c);
      if (i + 1 < m) tv += sub(i) * t_vecs(i + 1, c);
      residual(i, c) = tv - out.values(c) * t_vecs(i, c);
    }
  const double gram = (t_vecs.transpose() * t_vecs - Matrix::Identity(k, k)).cwiseAbs().maxCoeff();
  if (residual.colwise().norm().maxCoeff() > 1e-10 * scale || gram > 1e-10) return false;

  out.vectors = tri.matrixQ() * t_vecs;
  return true;
}

}  // namespace detail

/// Eigenpairs of symmetric `z` whose eigenvalue magnitude exceeds tau.
inline ThresholdedEigen outer_eigenpairs(const Matrix& z, double tau) {
  require(z.rows() == z.cols(), "outer_eigenpairs: matrix must be square");
  require(tau >= 0.0, "outer_eigenpairs: threshold must be nonnegative");
  if (z.rows() >= 24 && tau > 0.0) {
    ThresholdedEigen out;
    if (detail::outer_eigenpairs_tridiagonal(z, tau, out)) return out;
  }
  return detail::outer_eigenpairs_dense(z, tau);
}

/// Proximal map of t * ||.||_1 (trace norm): soft-threshold eigenvalues by t.
/// Returns the factored result U diag(mu) U'.
inline ThresholdedEigen nuclear_prox_factored(const Matrix& z, double t) {
  ThresholdedEigen eig = outer_eigenpairs(z, t);
  for (Index k = 0; k < eig.values.size(); ++k)
    eig.values(k) -= std::copysign(t, eig.values(k));
  return eig;
}

inline Matrix expand(const ThresholdedEigen& f) {
  if (f.values.size() == 0) return Matrix::Zero(f.vectors.rows(), f.vectors.rows());
  return f.vectors * f.values.asDiagonal() * f.vectors.transpose();
}

}  // namespace gsk
