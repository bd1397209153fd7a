#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace mvclust {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Error taxonomy. Everything derives from Error so callers can catch the
// whole family at the CLI boundary while tests pin the specific kind.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LoadError : Error { using Error::Error; };          // missing/unreadable file
struct ParseError : Error { using Error::Error; };         // malformed cell/record
struct ShapeError : Error { using Error::Error; };         // dimension mismatch
struct RangeError : Error { using Error::Error; };         // out-of-range label/index
struct ConfigError : Error { using Error::Error; };        // invalid hyperparameter
struct NumericError : Error { using Error::Error; };       // NaN/zero-norm guards
struct VersionError : Error { using Error::Error; };       // checkpoint version mismatch
struct IntegrityError : Error { using Error::Error; };     // truncated/corrupt checkpoint
struct StageError : Error { using Error::Error; };         // wrong checkpoint stage

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace mvclust
