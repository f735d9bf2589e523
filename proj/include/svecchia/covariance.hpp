#pragma once

#include "svecchia/types.hpp"

#include <limits>
#include <span>
#include <string>
#include <vector>

namespace svecchia {

inline constexpr double kInfiniteRange = std::numeric_limits<double>::infinity();

/// Anisotropic Matern covariance: variance * M_nu(q) + nugget * [i == j], where
/// q is the Euclidean distance between inputs divided coordinate-wise by the
/// ranges. A range of +inf removes that input dimension entirely.
struct CovarianceConfig {
  double smoothness = 3.5;
  double variance = 1.0;
  std::vector<double> ranges;
  double nugget = 0.0;

  Index dim() const { return static_cast<Index>(ranges.size()); }
  bool eliminated(Index l) const { return ranges[l] == kInfiniteRange; }
  /// Dimensions with a finite range, in increasing order.
  std::vector<Index> active_dims() const;
  void validate() const;
};

/// Smoothness values with closed-form correlation: 0.5, 1.5, 2.5, 3.5, 4.5.
bool is_supported_smoothness(double nu);

double scaled_distance(std::span<const double> xi, std::span<const double> xj,
                       std::span<const double> ranges);

/// Matern correlation at scaled distance q, normalized so that M(0) = 1 and
/// M_{1/2}(q) = exp(-q). Throws for smoothness outside the supported set.
double matern_correlation(double q, double smoothness);

inline double matern(double q, double smoothness, double variance) {
  return variance * matern_correlation(q, smoothness);
}

/// M'(q) / q, which stays finite at q = 0 for smoothness >= 1.5. For
/// smoothness 0.5 the caller must handle q = 0 (the range derivative is 0).
double matern_derivative_over_q(double q, double smoothness);

/// Divides each finite-range column by its range and drops eliminated columns.
Points scale_inputs(const Points& X, std::span<const double> ranges);

Matrix cov_matrix(const Points& X, const CovarianceConfig& config, bool include_nugget);

// ---------------------------------------------------------------------------
// Mean model

enum class MeanBasis { none, constant, linear };

MeanBasis parse_basis(const std::string& name);
std::string to_string(MeanBasis basis);
Index basis_size(MeanBasis basis, Index dim);
/// One row of features per input point; n x basis_size.
Matrix design_matrix(MeanBasis basis, const Points& X);

struct MeanModel {
  MeanBasis basis = MeanBasis::none;
  Vector coefficients;

  Vector features(std::span<const double> x) const;
  double mean(std::span<const double> x) const;
  Vector means(const Points& X) const;
};

// ---------------------------------------------------------------------------
// Unconstrained parameterization

/// theta = (log variance, log range_1 .. log range_d, log nugget). Entries
/// with non-finite logs (eliminated ranges, zero nugget) are always fixed.
class ParameterVector {
 public:
  ParameterVector() = default;
  ParameterVector(const CovarianceConfig& config, bool fix_nugget);

  Index size() const { return theta_.size(); }
  Index dim() const { return theta_.size() - 2; }
  static constexpr Index variance_index() { return 0; }
  static Index range_index(Index l) { return 1 + l; }
  Index nugget_index() const { return theta_.size() - 1; }

  const Vector& values() const { return theta_; }
  bool is_fixed(Index k) const { return fixed_[k] != 0; }
  void fix(Index k) { fixed_[k] = 1; }

  std::vector<Index> free_indices() const;
  Index num_free() const;
  Vector free_values() const;
  /// Copy with the free entries replaced; fixed entries are untouched.
  ParameterVector with_free(const Vector& free) const;

  CovarianceConfig to_config(double smoothness) const;

 private:
  Vector theta_;
  std::vector<char> fixed_;
};

/// Derivative of the covariance matrix with respect to each free entry of
/// the log parameterization, in free_indices() order.
std::vector<Matrix> cov_gradients(const Points& X, const CovarianceConfig& config,
                                  const ParameterVector& params);

// ---------------------------------------------------------------------------
// Block evaluation on pre-scaled coordinates

/// Evaluates covariance blocks (and their parameter derivatives) for subsets
/// of rows of a pre-scaled coordinate matrix, as produced by scale_inputs.
/// This is the inner kernel of the likelihood and prediction loops.
class BlockKernel {
 public:
  /// With no parameter vector only covariance() may be used.
  explicit BlockKernel(const CovarianceConfig& config);
  BlockKernel(const CovarianceConfig& config, const ParameterVector& params);

  Index num_free() const { return static_cast<Index>(free_.size()); }
  double nugget() const { return nugget_; }
  double variance() const { return variance_; }

  void covariance(const Points& Z, std::span<const Index> rows, Matrix& K,
                  bool include_nugget = true) const;
  /// Cross covariance between two row sets (no nugget).
  void cross_covariance(const Points& Za, std::span<const Index> rows_a, const Points& Zb,
                        std::span<const Index> rows_b, Matrix& K) const;
  /// Fills dK[k] (resized as needed) with the derivative for free parameter k.
  void gradients(const Points& Z, std::span<const Index> rows, std::vector<Matrix>& dK) const;

 private:
  enum class Kind { variance, range, nugget };
  struct FreeParam {
    Kind kind;
    Index active_column;  // column in the scaled matrix, for ranges
  };

  double smoothness_;
  double variance_;
  double nugget_;
  std::vector<FreeParam> free_;
};

}  // namespace svecchia
