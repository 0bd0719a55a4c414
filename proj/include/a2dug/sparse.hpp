// Compressed sparse row matrices and the structural graph transforms:
// transpose, undirected symmetrization, self-loop augmentation, degrees,
// symmetric degree normalization, sparse-dense products, and row gathering.
//
// CSR invariants maintained by every constructor and operation here:
//   * row_ptr has rows+1 nondecreasing entries, row_ptr[0] = 0,
//     row_ptr[rows] = nnz = col_idx.size() = values.size()
//   * column indices strictly increase within each row (no duplicates)
//   * binary adjacency matrices store 1 for every entry

#pragma once

#include <algorithm>
#include <cmath>
#include <tuple>
#include <utility>
#include <vector>

#include "a2dug/common.hpp"

namespace a2dug {

template <class Scalar>
struct CsrMatrix {
  Index rows = 0;
  Index cols = 0;
  std::vector<Index> row_ptr = {0};
  std::vector<Index> col_idx;
  std::vector<Scalar> values;

  Index nnz() const { return Index(col_idx.size()); }

  static CsrMatrix zero(Index rows, Index cols) {
    CsrMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.row_ptr.assign(std::size_t(rows) + 1, 0);
    return m;
  }

  // Builds from (row, col, value) triplets. Entries are sorted and duplicate
  // coordinates collapse to the first value seen.
  static CsrMatrix from_triplets(Index rows, Index cols,
                                 std::vector<std::tuple<Index, Index, Scalar>> entries) {
    for (const auto& [r, c, v] : entries) {
      if (r < 0 || r >= rows || c < 0 || c >= cols)
        throw IndexError("from_triplets: entry (" + std::to_string(r) + "," +
                         std::to_string(c) + ") outside " + shape_str(rows, cols));
    }
    std::stable_sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
      return std::get<0>(a) != std::get<0>(b) ? std::get<0>(a) < std::get<0>(b)
                                              : std::get<1>(a) < std::get<1>(b);
    });
    CsrMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.row_ptr.assign(std::size_t(rows) + 1, 0);
    Index prev_r = -1, prev_c = -1;
    for (const auto& [r, c, v] : entries) {
      if (r == prev_r && c == prev_c) continue;  // duplicate edge
      m.col_idx.push_back(c);
      m.values.push_back(v);
      ++m.row_ptr[std::size_t(r) + 1];
      prev_r = r;
      prev_c = c;
    }
    for (Index r = 0; r < rows; ++r) m.row_ptr[std::size_t(r) + 1] += m.row_ptr[std::size_t(r)];
    return m;
  }

  static CsrMatrix from_edges(Index n, const std::vector<std::pair<Index, Index>>& edges) {
    std::vector<std::tuple<Index, Index, Scalar>> trip;
    trip.reserve(edges.size());
    for (const auto& [s, t] : edges) trip.emplace_back(s, t, Scalar(1));
    return from_triplets(n, n, std::move(trip));
  }

  template <class T>
  CsrMatrix<T> cast() const {
    CsrMatrix<T> out;
    out.rows = rows;
    out.cols = cols;
    out.row_ptr = row_ptr;
    out.col_idx = col_idx;
    out.values.resize(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out.values[i] = T(values[i]);
    return out;
  }

  bool operator==(const CsrMatrix& o) const {
    return rows == o.rows && cols == o.cols && row_ptr == o.row_ptr &&
           col_idx == o.col_idx && values == o.values;
  }
};

// Validates the CSR invariants; throws ContractError on violation.
template <class Scalar>
void check_csr(const CsrMatrix<Scalar>& a) {
  if (a.rows < 0 || a.cols < 0) throw ContractError("csr: negative shape");
  if (Index(a.row_ptr.size()) != a.rows + 1) throw ContractError("csr: row_ptr length");
  if (a.row_ptr.front() != 0 || a.row_ptr.back() != a.nnz())
    throw ContractError("csr: row_ptr endpoints");
  if (a.values.size() != a.col_idx.size()) throw ContractError("csr: values length");
  for (Index r = 0; r < a.rows; ++r) {
    if (a.row_ptr[std::size_t(r)] > a.row_ptr[std::size_t(r) + 1])
      throw ContractError("csr: row_ptr not nondecreasing");
    for (Index k = a.row_ptr[std::size_t(r)]; k < a.row_ptr[std::size_t(r) + 1]; ++k) {
      if (a.col_idx[std::size_t(k)] < 0 || a.col_idx[std::size_t(k)] >= a.cols)
        throw ContractError("csr: column index out of range");
      if (k > a.row_ptr[std::size_t(r)] &&
          a.col_idx[std::size_t(k)] <= a.col_idx[std::size_t(k) - 1])
        throw ContractError("csr: columns not strictly increasing within row");
    }
  }
}

template <class Scalar>
CsrMatrix<Scalar> transpose(const CsrMatrix<Scalar>& a) {
  CsrMatrix<Scalar> t;
  t.rows = a.cols;
  t.cols = a.rows;
  t.row_ptr.assign(std::size_t(a.cols) + 1, 0);
  t.col_idx.resize(a.col_idx.size());
  t.values.resize(a.values.size());
  for (Index c : a.col_idx) ++t.row_ptr[std::size_t(c) + 1];
  for (Index r = 0; r < t.rows; ++r) t.row_ptr[std::size_t(r) + 1] += t.row_ptr[std::size_t(r)];
  std::vector<Index> cursor(t.row_ptr.begin(), t.row_ptr.end() - 1);
  // Row-ascending scan keeps each output row's columns sorted.
  for (Index r = 0; r < a.rows; ++r) {
    for (Index k = a.row_ptr[std::size_t(r)]; k < a.row_ptr[std::size_t(r) + 1]; ++k) {
      const Index c = a.col_idx[std::size_t(k)];
      const Index dst = cursor[std::size_t(c)]++;
      t.col_idx[std::size_t(dst)] = r;
      t.values[std::size_t(dst)] = a.values[std::size_t(k)];
    }
  }
  return t;
}

// A_und[i][j] = 1 iff A[i][j] = 1 or A[j][i] = 1.
template <class Scalar>
CsrMatrix<Scalar> to_undirected(const CsrMatrix<Scalar>& a) {
  if (a.rows != a.cols)
    throw ShapeError("to_undirected: matrix must be square (got " +
                     shape_str(a.rows, a.cols) + ")");
  const CsrMatrix<Scalar> t = transpose(a);
  CsrMatrix<Scalar> u;
  u.rows = a.rows;
  u.cols = a.cols;
  u.row_ptr.assign(std::size_t(a.rows) + 1, 0);
  for (Index r = 0; r < a.rows; ++r) {
    Index i = a.row_ptr[std::size_t(r)], iend = a.row_ptr[std::size_t(r) + 1];
    Index j = t.row_ptr[std::size_t(r)], jend = t.row_ptr[std::size_t(r) + 1];
    while (i < iend || j < jend) {
      Index c;
      if (j >= jend || (i < iend && a.col_idx[std::size_t(i)] <= t.col_idx[std::size_t(j)])) {
        c = a.col_idx[std::size_t(i)];
        if (j < jend && t.col_idx[std::size_t(j)] == c) ++j;
        ++i;
      } else {
        c = t.col_idx[std::size_t(j)];
        ++j;
      }
      u.col_idx.push_back(c);
      u.values.push_back(Scalar(1));
    }
    u.row_ptr[std::size_t(r) + 1] = Index(u.col_idx.size());
  }
  return u;
}

// Logical OR with the identity: values stay binary even when a diagonal
// entry already exists.
template <class Scalar>
CsrMatrix<Scalar> add_self_loops(const CsrMatrix<Scalar>& a) {
  if (a.rows != a.cols)
    throw ShapeError("add_self_loops: matrix must be square (got " +
                     shape_str(a.rows, a.cols) + ")");
  CsrMatrix<Scalar> out;
  out.rows = a.rows;
  out.cols = a.cols;
  out.row_ptr.assign(std::size_t(a.rows) + 1, 0);
  for (Index r = 0; r < a.rows; ++r) {
    bool placed = false;
    for (Index k = a.row_ptr[std::size_t(r)]; k < a.row_ptr[std::size_t(r) + 1]; ++k) {
      const Index c = a.col_idx[std::size_t(k)];
      if (!placed && c >= r) {
        out.col_idx.push_back(r);
        out.values.push_back(Scalar(1));
        placed = true;
        if (c == r) continue;  // existing loop absorbed
      }
      out.col_idx.push_back(c);
      out.values.push_back(a.values[std::size_t(k)]);
    }
    if (!placed) {
      out.col_idx.push_back(r);
      out.values.push_back(Scalar(1));
    }
    out.row_ptr[std::size_t(r) + 1] = Index(out.col_idx.size());
  }
  return out;
}

// Row sums; for a binary adjacency this is the (out-)degree per node.
template <class Scalar>
Vec<Scalar> degrees(const CsrMatrix<Scalar>& a) {
  Vec<Scalar> d = Vec<Scalar>::Zero(a.rows);
  for (Index r = 0; r < a.rows; ++r) {
    Scalar s = 0;
    for (Index k = a.row_ptr[std::size_t(r)]; k < a.row_ptr[std::size_t(r) + 1]; ++k)
      s += a.values[std::size_t(k)];
    d[r] = s;
  }
  return d;
}

// S[i][j] = A[i][j] / sqrt(deg[i] * deg[j]); zero-degree nodes contribute 0
// rather than NaN, so isolated nodes yield all-zero rows and columns.
template <class Scalar>
CsrMatrix<Scalar> degree_normalize(const CsrMatrix<Scalar>& a_und, const Vec<Scalar>& deg) {
  if (deg.size() != a_und.rows)
    throw ShapeError("degree_normalize: degree vector length " + std::to_string(deg.size()) +
                     " != rows " + std::to_string(a_und.rows));
  Vec<Scalar> inv_sqrt = Vec<Scalar>::Zero(deg.size());
  for (Index i = 0; i < deg.size(); ++i)
    inv_sqrt[i] = deg[i] > Scalar(0) ? Scalar(1) / std::sqrt(deg[i]) : Scalar(0);
  CsrMatrix<Scalar> s = a_und;
  for (Index r = 0; r < s.rows; ++r)
    for (Index k = s.row_ptr[std::size_t(r)]; k < s.row_ptr[std::size_t(r) + 1]; ++k)
      s.values[std::size_t(k)] *= inv_sqrt[r] * inv_sqrt[s.col_idx[std::size_t(k)]];
  return s;
}

// Sparse-dense product a * x. Accumulation order within a row is fixed by
// the CSR layout, so results do not depend on any parallel schedule.
template <class Scalar>
Mat<Scalar> spmm(const CsrMatrix<Scalar>& a, const Mat<Scalar>& x) {
  if (a.cols != x.rows())
    throw ShapeError("spmm: inner dimensions " + shape_str(a.rows, a.cols) + " * " +
                     shape_str(x.rows(), x.cols()));
  Mat<Scalar> out = Mat<Scalar>::Zero(a.rows, x.cols());
  for (Index r = 0; r < a.rows; ++r)
    for (Index k = a.row_ptr[std::size_t(r)]; k < a.row_ptr[std::size_t(r) + 1]; ++k)
      out.row(r) += a.values[std::size_t(k)] * x.row(a.col_idx[std::size_t(k)]);
  return out;
}

template <class Scalar>
Mat<Scalar> gather_rows(const Mat<Scalar>& x, const std::vector<Index>& idx) {
  Mat<Scalar> out(Index(idx.size()), x.cols());
  for (Index r = 0; r < Index(idx.size()); ++r) {
    const Index src = idx[std::size_t(r)];
    if (src < 0 || src >= x.rows())
      throw IndexError("gather_rows: index " + std::to_string(src) + " out of range [0," +
                       std::to_string(x.rows()) + ")");
    out.row(r) = x.row(src);
  }
  return out;
}

template <class Scalar>
CsrMatrix<Scalar> gather_rows(const CsrMatrix<Scalar>& a, const std::vector<Index>& idx) {
  CsrMatrix<Scalar> out;
  out.rows = Index(idx.size());
  out.cols = a.cols;
  out.row_ptr.assign(idx.size() + 1, 0);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const Index src = idx[r];
    if (src < 0 || src >= a.rows)
      throw IndexError("gather_rows: index " + std::to_string(src) + " out of range [0," +
                       std::to_string(a.rows) + ")");
    for (Index k = a.row_ptr[std::size_t(src)]; k < a.row_ptr[std::size_t(src) + 1]; ++k) {
      out.col_idx.push_back(a.col_idx[std::size_t(k)]);
      out.values.push_back(a.values[std::size_t(k)]);
    }
    out.row_ptr[r + 1] = Index(out.col_idx.size());
  }
  return out;
}

template <class Scalar>
Mat<Scalar> to_dense(const CsrMatrix<Scalar>& a) {
  Mat<Scalar> d = Mat<Scalar>::Zero(a.rows, a.cols);
  for (Index r = 0; r < a.rows; ++r)
    for (Index k = a.row_ptr[std::size_t(r)]; k < a.row_ptr[std::size_t(r) + 1]; ++k)
      d(r, a.col_idx[std::size_t(k)]) = a.values[std::size_t(k)];
  return d;
}

}  // namespace a2dug
