#pragma once

#include "gsk/common.hpp"
#include "gsk/random.hpp"

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace gsk {

struct Sample {
  Index u = 0;
  Index v = 0;
  double y = 0.0;
};

struct Dataset {
  std::vector<Sample> samples;
  Index m = 0;
  double a = 0.0;

  Index n() const { return static_cast<Index>(samples.size()); }

  void validate() const {
    require(m >= 1, "dataset: vertex count must be positive");
    require(a > 0.0, "dataset: response bound must be positive");
    require(!samples.empty(), "dataset: needs at least one sample");
    for (const Sample& s : samples) {
      require(s.u >= 0 && s.u < m && s.v >= 0 && s.v < m, "dataset: vertex index out of range");
      require(std::isfinite(s.y), "dataset: non-finite response");
      require(std::abs(s.y) <= a + 1e-12, "dataset: response exceeds bound");
    }
  }
};

struct NoiseModel {
  enum class Kind { None, Uniform, Sign, BinaryPacking };
  Kind kind = Kind::None;
  double level = 0.0;

  static NoiseModel none() { return {Kind::None, 0.0}; }
  static NoiseModel uniform(double s) { return {Kind::Uniform, s}; }
  static NoiseModel sign(double s) { return {Kind::Sign, s}; }
  static NoiseModel binary_packing() { return {Kind::BinaryPacking, 0.0}; }

  /// Accepts "none", "uniform:<s>", "sign:<s>" or "binary_packing".
  static NoiseModel parse(const std::string& text) {
    if (text == "none") return none();
    if (text == "binary_packing" || text == "binary") return binary_packing();
    const auto colon = text.find(':');
    if (colon != std::string::npos) {
      const std::string head = text.substr(0, colon);
      const double level = std::stod(text.substr(colon + 1));
      require(level >= 0.0, "noise level must be nonnegative");
      if (head == "uniform") return uniform(level);
      if (head == "sign") return sign(level);
    }
    throw Error("unknown noise model: " + text);
  }

  std::string describe() const {
    switch (kind) {
      case Kind::None: return "none";
      case Kind::Uniform: return "uniform:" + std::to_string(level);
      case Kind::Sign: return "sign:" + std::to_string(level);
      case Kind::BinaryPacking: return "binary_packing";
    }
    return "?";
  }
};

/// Draws n i.i.d. observations: (u, v) uniform on V x V, E(y | u, v) = S_star(u, v).
inline Dataset draw_dataset(const Matrix& s_star, double a, const NoiseModel& noise, Index n,
                            std::uint64_t seed) {
  require(n >= 1, "draw_dataset: n must be at least 1");
  require(a > 0.0, "draw_dataset: a must be positive");
  require(s_star.rows() == s_star.cols() && s_star.rows() >= 1, "draw_dataset: kernel must be square");
  const Index m = s_star.rows();
  const double sup = s_star.cwiseAbs().maxCoeff();
  if (noise.kind == NoiseModel::Kind::BinaryPacking)
    require(sup <= 0.5 * a + 1e-12, "draw_dataset: binary responses need sup|S| <= a/2");
  else
    require(sup + noise.level <= a + 1e-12, "draw_dataset: sup|S| + noise level exceeds a");

  CounterRng rng(seed);
  Dataset data;
  data.m = m;
  data.a = a;
  data.samples.resize(static_cast<std::size_t>(n));
  const auto mu = static_cast<std::uint64_t>(m);
  for (Sample& s : data.samples) {
    s.u = static_cast<Index>(rng.below(mu));
    s.v = static_cast<Index>(rng.below(mu));
    const double mean = s_star(s.u, s.v);
    switch (noise.kind) {
      case NoiseModel::Kind::None: s.y = mean; break;
      case NoiseModel::Kind::Uniform: s.y = mean + noise.level * (2.0 * rng.uniform() - 1.0); break;
      case NoiseModel::Kind::Sign: s.y = mean + noise.level * rng.rademacher(); break;
      case NoiseModel::Kind::BinaryPacking: {
        const double p_up = 0.5 + mean / (2.0 * a);
        s.y = rng.uniform() < p_up ? a : -a;
        break;
      }
    }
    s.y = std::clamp(s.y, -a, a);
  }
  return data;
}

/// n^-1 sum (y_j - S(u_j, v_j))^2.
inline double empirical_loss(const Matrix& s, const Dataset& data) {
  require(s.rows() == data.m && s.cols() == data.m, "empirical_loss: dimension mismatch");
  double acc = 0.0;
  for (const Sample& x : data.samples) {
    const double r = x.y - s(x.u, x.v);
    acc += r * r;
  }
  return acc / static_cast<double>(data.n());
}

/// Observations pooled by unordered cell {u, v}. Both matrices are symmetric.
struct CellSummary {
  Matrix counts;   // number of samples landing on {u, v}
  Matrix sums;     // sum of their responses
  double sum_sq = 0.0;
  Index n = 0;

  explicit CellSummary(const Dataset& data)
      : counts(Matrix::Zero(data.m, data.m)), sums(Matrix::Zero(data.m, data.m)), n(data.n()) {
    for (const Sample& x : data.samples) {
      counts(x.u, x.v) += 1.0;
      sums(x.u, x.v) += x.y;
      if (x.u != x.v) {
        counts(x.v, x.u) += 1.0;
        sums(x.v, x.u) += x.y;
      }
      sum_sq += x.y * x.y;
    }
  }

  Index m() const { return counts.rows(); }

  /// Data-fit value for a symmetric S.
  double loss(const Matrix& s) const {
    const Matrix quad = counts.cwiseProduct(s.cwiseProduct(s)) - 2.0 * sums.cwiseProduct(s);
    // Off-diagonal cells appear twice in the full matrix sum.
    const double off = 0.5 * (quad.sum() - quad.diagonal().sum());
    return (sum_sq + off + quad.diagonal().sum()) / static_cast<double>(n);
  }

  /// Frobenius gradient of the data fit on symmetric matrices:
  /// -(2/n) sum (y_j - S(X_j)) E_{X_j} with E_uv = (e_u e_v' + e_v e_u') / 2.
  Matrix gradient(const Matrix& s) const {
    Matrix g = -(sums - counts.cwiseProduct(s)) / static_cast<double>(n);
    g.diagonal() *= 2.0;
    return g;
  }

  /// Lipschitz constant of the gradient in the Frobenius metric.
  double lipschitz() const {
    const double diag = counts.diagonal().size() ? 2.0 * counts.diagonal().maxCoeff() : 0.0;
    Matrix off = counts;
    off.diagonal().setZero();
    return std::max(diag, off.maxCoeff()) / static_cast<double>(n);
  }
};

/// n^-1 sum xi_j E_{X_j} with Rademacher xi.
inline Matrix rademacher_noise_matrix(const Dataset& data, CounterRng& rng) {
  Matrix out = Matrix::Zero(data.m, data.m);
  for (const Sample& x : data.samples) {
    const double w = 0.5 * rng.rademacher();
    out(x.u, x.v) += w;
    out(x.v, x.u) += w;
  }
  return out / static_cast<double>(data.n());
}

/// n^-1 sum (y_j - S(X_j)) E_{X_j} - (S_star - S) / m^2: a centred residual matrix.
inline Matrix residual_noise_matrix(const Dataset& data, const Matrix& s, const Matrix& s_star) {
  Matrix out = Matrix::Zero(data.m, data.m);
  for (const Sample& x : data.samples) {
    const double w = 0.5 * (x.y - s(x.u, x.v));
    out(x.u, x.v) += w;
    out(x.v, x.u) += w;
  }
  const double m = static_cast<double>(data.m);
  return out / static_cast<double>(data.n()) - (s_star - s) / (m * m);
}

namespace detail {
inline double bernstein_scale(Index n, Index m) {
  require(n >= 1 && m >= 1, "n and m must be positive");
  const double logm = std::log(2.0 * static_cast<double>(m));
  const double nd = static_cast<double>(n);
  return std::max(std::sqrt(logm / (nd * static_cast<double>(m))), logm / nd);
}
}  // namespace detail

/// High-probability bound on the operator norm of the empirical noise matrix.
inline double epsilon_star(Index n, Index m, double a) {
  require(a > 0.0, "epsilon_star: a must be positive");
  return 16.0 * a * detail::bernstein_scale(n, m);
}

/// Nuclear penalty level D a (sqrt(log 2m / nm) v log 2m / n).
inline double default_epsilon(Index n, Index m, double a, double big_d) {
  require(big_d > 0.0, "default_epsilon: D must be positive");
  require(a > 0.0, "default_epsilon: a must be positive");
  return big_d * a * detail::bernstein_scale(n, m);
}

inline void write_dataset_csv(const Dataset& data, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write dataset: " + path);
  out << "u,v,y\n";
  out.precision(17);
  for (const Sample& s : data.samples) out << s.u << ',' << s.v << ',' << s.y << '\n';
}

inline Dataset read_dataset_csv(const std::string& path, Index m, double a) {
  std::ifstream in(path);
  require(in.good(), "cannot open dataset: " + path);
  std::string line;
  require(static_cast<bool>(std::getline(in, line)), "dataset: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  require(line == "u,v,y", "dataset: header must be u,v,y");
  Dataset data;
  data.m = m;
  data.a = a;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream row(line);
    Sample s;
    require(static_cast<bool>(row >> s.u >> s.v >> s.y), "dataset: malformed row: " + line);
    data.samples.push_back(s);
  }
  data.validate();
  return data;
}

}  // namespace gsk
