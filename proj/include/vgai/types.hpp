#pragma once

#include <algorithm>
#include <vector>

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace vgai {

using Vec2 = Eigen::Vector2d;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using MatrixN2 = Eigen::Matrix<double, Eigen::Dynamic, 2>;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity reached an input that requires finite values.
class NonFiniteError : public Error {
 public:
  using Error::Error;
};

/// Two agents share a position where a pairwise term is singular.
class SingularityError : public Error {
 public:
  using Error::Error;
};

/// File could not be parsed or carries an unsupported format version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Configuration values violate a documented range.
class ConfigError : public Error {
 public:
  using Error::Error;
};

namespace detail {

inline void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols,
                          const char* what) {
  if (m.rows() != rows || m.cols() != cols) {
    throw DimensionError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                         std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                         std::to_string(m.cols()));
  }
}

/// Sum whose result does not depend on the order of `terms`: they are
/// sorted before being added, so relabelling agents cannot change a bit.
inline double order_free_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += t;
  return acc;
}

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

}  // namespace detail
}  // namespace vgai
