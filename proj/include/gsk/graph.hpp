#pragma once

#include "gsk/common.hpp"

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace gsk {

/// Undirected weighted graph on vertices 0..m-1 given by its weight matrix.
class WeightedGraph {
public:
  explicit WeightedGraph(Matrix weights) : weights_(std::move(weights)) {
    require(weights_.rows() > 0 && weights_.rows() == weights_.cols(),
            "graph: weight matrix must be square and nonempty");
    require(weights_.allFinite(), "graph: weights must be finite");
    require((weights_.array() >= 0.0).all(), "graph: weights must be nonnegative");
    require(is_symmetric(weights_, 1e-12), "graph: weights must be symmetric");
    require(weights_.diagonal().cwiseAbs().maxCoeff() == 0.0,
            "graph: self-loops (nonzero diagonal) are not allowed");
    weights_ = symmetrize(weights_);
  }

  Index size() const { return weights_.rows(); }
  const Matrix& weights() const { return weights_; }
  Vector degrees() const { return weights_.rowwise().sum(); }

  static WeightedGraph empty(Index m) { return WeightedGraph(Matrix::Zero(m, m)); }

  static WeightedGraph path(Index m) {
    Matrix w = Matrix::Zero(m, m);
    for (Index i = 0; i + 1 < m; ++i) w(i, i + 1) = w(i + 1, i) = 1.0;
    return WeightedGraph(std::move(w));
  }

  /// Cycle C_m. Its Laplacian spectrum is 2 - 2cos(2*pi*k/m), k = 0..m-1.
  static WeightedGraph circle(Index m) {
    require(m >= 3, "graph: circle needs at least 3 vertices");
    Matrix w = Matrix::Zero(m, m);
    for (Index i = 0; i < m; ++i) {
      const Index j = (i + 1) % m;
      w(i, j) = w(j, i) = 1.0;
    }
    return WeightedGraph(std::move(w));
  }

  static WeightedGraph complete(Index m) {
    Matrix w = Matrix::Ones(m, m);
    w.diagonal().setZero();
    return WeightedGraph(std::move(w));
  }

private:
  Matrix weights_;
};

/// Graph Laplacian D - A.
inline Matrix laplacian(const WeightedGraph& graph) {
  Matrix lap = -graph.weights();
  lap.diagonal() += graph.degrees();
  return lap;
}

namespace detail {

inline std::string strip_comment(const std::string& line, char mark) {
  const auto pos = line.find(mark);
  return pos == std::string::npos ? line : line.substr(0, pos);
}

inline Matrix read_matrix_market(std::istream& in) {
  std::string header;
  std::getline(in, header);
  std::istringstream hs(header);
  std::string banner, object, format, field, symmetry;
  hs >> banner >> object >> format >> field >> symmetry;
  for (auto* s : {&object, &format, &field, &symmetry})
    for (auto& c : *s) c = static_cast<char>(std::tolower(c));
  require(object == "matrix" && format == "coordinate",
          "matrix market: only 'matrix coordinate' files are supported");
  require(field == "real" || field == "integer" || field == "pattern",
          "matrix market: field must be real, integer or pattern");
  require(symmetry == "symmetric" || symmetry == "general",
          "matrix market: symmetry must be symmetric or general");

  std::string line;
  do {
    if (!std::getline(in, line)) throw Error("matrix market: missing size line");
  } while (line.empty() || line[0] == '%');
  std::istringstream sizes(line);
  long rows = 0, cols = 0, nnz = 0;
  require(static_cast<bool>(sizes >> rows >> cols >> nnz), "matrix market: bad size line");
  require(rows == cols && rows > 0, "matrix market: matrix must be square");

  Matrix w = Matrix::Zero(rows, cols);
  for (long k = 0; k < nnz; ++k) {
    long i = 0, j = 0;
    double v = 1.0;
    require(static_cast<bool>(in >> i >> j), "matrix market: truncated entry list");
    if (field != "pattern") require(static_cast<bool>(in >> v), "matrix market: missing value");
    require(i >= 1 && i <= rows && j >= 1 && j <= cols, "matrix market: index out of range");
    w(i - 1, j - 1) = v;
    if (symmetry == "symmetric") w(j - 1, i - 1) = v;
  }
  return w;
}

inline Matrix read_dense(std::istream& in) {
  std::vector<std::vector<double>> rows;
  std::string line;
  while (std::getline(in, line)) {
    line = strip_comment(line, '#');
    std::istringstream ls(line);
    std::vector<double> row;
    double v;
    while (ls >> v) row.push_back(v);
    if (!ls.eof()) throw Error("dense matrix: non-numeric token");
    if (!row.empty()) rows.push_back(std::move(row));
  }
  require(!rows.empty(), "dense matrix: no data");
  const Index m = static_cast<Index>(rows.size());
  Matrix out(m, static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m; ++i) {
    require(static_cast<Index>(rows[i].size()) == out.cols(), "dense matrix: ragged rows");
    for (Index j = 0; j < out.cols(); ++j) out(i, j) = rows[i][j];
  }
  return out;
}

}  // namespace detail

/// Reads a weight matrix from a Matrix Market coordinate file (detected by its
/// %%MatrixMarket banner) or from whitespace-delimited dense text.
inline WeightedGraph read_graph(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), "cannot open graph file: " + path);
  const int first = in.peek();
  if (first == '%') return WeightedGraph(detail::read_matrix_market(in));
  return WeightedGraph(detail::read_dense(in));
}

inline void write_graph_matrix_market(const WeightedGraph& graph, const std::string& path) {
  std::ofstream out(path);
  require(out.good(), "cannot write graph file: " + path);
  const Matrix& w = graph.weights();
  long nnz = 0;
  for (Index j = 0; j < w.cols(); ++j)
    for (Index i = j; i < w.rows(); ++i) nnz += w(i, j) != 0.0;
  out << "%%MatrixMarket matrix coordinate real symmetric\n";
  out << w.rows() << ' ' << w.cols() << ' ' << nnz << '\n';
  out.precision(17);
  for (Index j = 0; j < w.cols(); ++j)
    for (Index i = j; i < w.rows(); ++i)
      if (w(i, j) != 0.0) out << i + 1 << ' ' << j + 1 << ' ' << w(i, j) << '\n';
}

}  // namespace gsk
