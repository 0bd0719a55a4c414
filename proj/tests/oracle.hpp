// Test-side reference implementations ("oracles"). Everything here is built
// directly from edge lists with dense matrices and plain loops, on purpose
// not reusing the library's sparse code paths, so the two sides of every
// comparison are independent.

#pragma once

#include <cmath>
#include <random>
#include <utility>
#include <vector>

#include "a2dug/common.hpp"
#include "a2dug/sparse.hpp"

namespace oracle {

using a2dug::CsrMatrix;
using a2dug::Index;
using a2dug::Mat;
using a2dug::Vec;

using Edges = std::vector<std::pair<Index, Index>>;

inline Mat<double> dense_from_edges(Index n, const Edges& edges) {
  Mat<double> a = Mat<double>::Zero(n, n);
  for (const auto& [s, t] : edges) a(s, t) = 1.0;
  return a;
}

inline Mat<double> dense_undirected(const Mat<double>& a) {
  Mat<double> u = Mat<double>::Zero(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      u(i, j) = (a(i, j) != 0.0 || a(j, i) != 0.0) ? 1.0 : 0.0;
  return u;
}

inline Mat<double> dense_self_loops(const Mat<double>& a) {
  Mat<double> out = a;
  for (Index i = 0; i < a.rows(); ++i) out(i, i) = 1.0;
  return out;
}

inline Vec<double> dense_degrees(const Mat<double>& a) { return a.rowwise().sum(); }

// D^(-1/2) A D^(-1/2) with zero-degree nodes contributing zero.
inline Mat<double> dense_normalize(const Mat<double>& a_und) {
  const Vec<double> deg = dense_degrees(a_und);
  Mat<double> s = Mat<double>::Zero(a_und.rows(), a_und.cols());
  for (Index i = 0; i < a_und.rows(); ++i)
    for (Index j = 0; j < a_und.cols(); ++j)
      if (a_und(i, j) != 0.0 && deg[i] > 0.0 && deg[j] > 0.0)
        s(i, j) = a_und(i, j) / std::sqrt(deg[i] * deg[j]);
  return s;
}

// M^hop * X by repeated dense multiplication.
inline Mat<double> dense_power_times(const Mat<double>& m, const Mat<double>& x, int hop) {
  Mat<double> r = x;
  for (int i = 0; i < hop; ++i) r = m * r;
  return r;
}

inline bool csr_equals_dense(const CsrMatrix<double>& a, const Mat<double>& d) {
  return a.rows == d.rows() && a.cols == d.cols() && a2dug::to_dense(a) == d;
}

inline bool rel_close(double a, double b, double tol, double floor = 1e-12) {
  return std::abs(a - b) <= tol * std::max({std::abs(a), std::abs(b), floor});
}

inline bool rel_close(const Mat<double>& a, const Mat<double>& b, double tol,
                      double floor = 1e-12) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      if (!rel_close(a(i, j), b(i, j), tol, floor)) return false;
  return true;
}

// Random directed graph for property tests; self-loops and duplicates
// allowed in the raw edge list.
struct RandomGraph {
  Index n = 0;
  Edges edges;
  Mat<double> dense;
};

inline RandomGraph random_graph(std::mt19937_64& g, Index max_n, double edge_factor = 2.5) {
  RandomGraph r;
  r.n = 2 + Index(g() % std::uint64_t(max_n - 1));
  const int m = int(double(r.n) * edge_factor * std::uniform_real_distribution<>(0.2, 1.0)(g));
  for (int e = 0; e < m; ++e)
    r.edges.push_back({Index(g() % std::uint64_t(r.n)), Index(g() % std::uint64_t(r.n))});
  r.dense = dense_from_edges(r.n, r.edges);
  return r;
}

inline Mat<double> random_dense(std::mt19937_64& g, Index rows, Index cols) {
  std::normal_distribution<double> nd(0.0, 1.0);
  Mat<double> x(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) x(i, j) = nd(g);
  return x;
}

// Central finite difference of a scalar-valued callable w.r.t. one scalar
// slot, for gradient checking against analytic backward passes.
template <class F>
double fd_grad(double& slot, double eps, F&& loss) {
  const double keep = slot;
  slot = keep + eps;
  const double up = loss();
  slot = keep - eps;
  const double down = loss();
  slot = keep;
  return (up - down) / (2.0 * eps);
}

}  // namespace oracle
