#pragma once

#include "svecchia/estimation.hpp"
#include "svecchia/types.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace svecchia {

/// Gaussian predictive distribution over n* prediction points, held as
/// marginal summaries plus a sparse triangular factor W of the joint.
/// With the prediction points permuted into plan order, the centered
/// vector e = y* - mean satisfies W e ~ N(0, I).
class PredictiveDistribution {
 public:
  PredictiveDistribution() = default;
  PredictiveDistribution(Vector means, std::vector<Index> order, std::vector<Index> offsets,
                         std::vector<Index> cols, std::vector<double> values, double correction);

  Index size() const { return means_.size(); }
  const Vector& means() const { return means_; }
  /// Marginal variances before the correction factor.
  const Vector& variances() const { return variances_; }
  double correction() const { return correction_; }
  void set_correction(double b);
  /// correction() * variances().
  Vector corrected_variances() const;

  /// order()[k] is the prediction index at plan position k.
  const std::vector<Index>& order() const { return order_; }
  /// Column positions (< k, ascending) of row k of W, then k itself.
  std::span<const Index> row_cols(Index k) const {
    return {cols_.data() + offsets_[k], static_cast<std::size_t>(offsets_[k + 1] - offsets_[k])};
  }
  std::span<const double> row_values(Index k) const {
    return {values_.data() + offsets_[k], static_cast<std::size_t>(offsets_[k + 1] - offsets_[k])};
  }
  Index nonzeros() const { return static_cast<Index>(cols_.size()); }

  /// Dense W in plan order, for tests and small problems.
  Matrix dense_factor() const;
  /// Dense joint covariance in prediction-index order, including the correction.
  Matrix joint_covariance() const;

 private:
  void compute_variances();

  Vector means_;
  Vector variances_;
  std::vector<Index> order_;
  std::vector<Index> offsets_{0};
  std::vector<Index> cols_;
  std::vector<double> values_;
  double correction_ = 1.0;
};

inline constexpr Index kDefaultMPred = 140;

/// Joint prediction at the rows of X_pred given all of fit.training. The
/// targets are noisy responses (the nugget is part of their variance).
/// The fit's variance correction is attached to the result.
PredictiveDistribution predict(const FitResult& fit, const Points& X_pred,
                               Index m_pred = kDefaultMPred);

/// n_samples x n* joint draws; deviations from the mean are scaled by
/// sqrt(correction).
Matrix sample_joint(const PredictiveDistribution& dist, Index n_samples, std::uint64_t seed);

inline constexpr Index kMinCorrectionTest = 30;

/// Closed-form log-score optimal b from a random split of the training data
/// into an inner training set (split_fraction) and an inner test set.
double variance_correction(const FitResult& fit, double split_fraction = 0.9,
                           std::uint64_t seed = 0, Index m_pred = kDefaultMPred);

struct Interval {
  double lo;
  double hi;
};

/// mean -/+ z_{(1+level)/2} * sqrt(b * variance).
std::vector<Interval> prediction_intervals(const PredictiveDistribution& dist, double level);

}  // namespace svecchia
