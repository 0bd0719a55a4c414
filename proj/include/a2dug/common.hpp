// Shared matrix aliases and error types used across the library.
//
// Dense storage is row-major throughout: node-aligned matrices are gathered
// and serialized by row, and the on-disk layout is row-major little-endian.

#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace a2dug {

using Index = Eigen::Index;

template <class Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatF = Mat<float>;
using MatD = Mat<double>;
using VecD = Vec<double>;
using Labels = Eigen::VectorXi;

static_assert(std::endian::native == std::endian::little,
              "binary file formats assume a little-endian host");

// Shape mismatch between operands (non-square input, misaligned rows, ...).
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Row/column index outside the addressed range.
struct IndexError : std::out_of_range {
  using std::out_of_range::out_of_range;
};

// Invalid parameter value (k = 0, empty mask, bad probability, ...).
struct ParamError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// A call violated an inter-module contract (stale cache, mismatched bundle).
struct ContractError : std::logic_error {
  using std::logic_error::logic_error;
};

// File missing, malformed, or failed checksum; message names the file.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite value where a finite one is required (diverged loss).
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Metric undefined on the given inputs (ROC-AUC with a single class).
struct MetricError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

template <class Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& m) {
  return m.allFinite();
}

inline std::string shape_str(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace a2dug
