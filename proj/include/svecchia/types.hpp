#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>

namespace svecchia {

using Index = std::ptrdiff_t;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
// n x d, one input point per row.
using Points = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::span<const double> row_span(const Points& X, Index i) {
  return {X.data() + i * X.cols(), static_cast<std::size_t>(X.cols())};
}

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A conditioning block whose covariance could not be factorized even after
/// jitter. Usually means duplicated inputs with a zero nugget.
class SingularBlockError : public Error {
 public:
  SingularBlockError(Index block, const std::string& what)
      : Error(what), block_(block) {}
  Index block() const { return block_; }

 private:
  Index block_;
};

/// Responses and inputs used for estimation and prediction.
struct Dataset {
  Points inputs;
  Vector responses;

  Index size() const { return inputs.rows(); }
  Index dim() const { return inputs.cols(); }
  /// Rejects NaN/Inf cells and shape mismatches.
  void validate() const;
};

}  // namespace svecchia
