#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace gsk {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Raised for violated preconditions and malformed inputs.
class Error : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an iterative numerical routine fails to produce a result.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw Error(message);
}

// Min/max with the convention that +inf is absorbing for max and neutral for min.
inline double wedge(double x, double y) { return x < y ? x : y; }
inline double vee(double x, double y) { return x > y ? x : y; }

/// x / y with x / inf = 0 for finite x.
inline double ratio_or_zero(double x, double y) {
  if (std::isinf(y) && std::isfinite(x)) return 0.0;
  return x / y;
}

inline bool is_symmetric(const Matrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  return (a - a.transpose()).cwiseAbs().maxCoeff() <= tol * scale;
}

inline Matrix symmetrize(const Matrix& a) { return 0.5 * (a + a.transpose()); }

}  // namespace gsk
