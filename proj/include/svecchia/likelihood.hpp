#pragma once

#include "svecchia/covariance.hpp"
#include "svecchia/geometry.hpp"
#include "svecchia/types.hpp"

#include <vector>

namespace svecchia {

/// Profiled log-likelihood together with its derivatives with respect to
/// the free entries of a ParameterVector (in free_indices() order).
struct LikelihoodEvaluation {
  double loglik = 0.0;
  Vector gradient;
  Matrix fisher_info;
  Vector beta_hat;
  Index jittered_blocks = 0;
};

/// Vecchia log-density of the responses under a fixed mean:
/// sum over positions of log p(y_i, y_c(i)) - log p(y_c(i)), one Cholesky of
/// size |c(i)| + 1 per block.
double vecchia_loglik(const Dataset& data, const ConditioningPlan& plan,
                      const CovarianceConfig& config, const MeanModel& mean);

/// Generalized least squares coefficients under the Vecchia-implied
/// precision. Empty for MeanBasis::none.
Vector profile_beta(const Dataset& data, const ConditioningPlan& plan,
                    const CovarianceConfig& config, MeanBasis basis);

/// Profiled log-likelihood and beta_hat only (no derivatives).
LikelihoodEvaluation vecchia_profile_loglik(const Dataset& data, const ConditioningPlan& plan,
                                            const CovarianceConfig& config, MeanBasis basis);

/// Profiled log-likelihood, score and expected Fisher information.
LikelihoodEvaluation vecchia_score(const Dataset& data, const ConditioningPlan& plan,
                                   const CovarianceConfig& config, MeanBasis basis,
                                   const ParameterVector& params);

/// Sparse factor U of the Vecchia precision in plan order: K_hat^{-1} = U U^T,
/// with U upper triangular and column i supported on c(i) and i.
class SparseInverseCholesky {
 public:
  SparseInverseCholesky() = default;
  SparseInverseCholesky(std::vector<Index> order, std::vector<Index> offsets,
                        std::vector<Index> rows, std::vector<double> values);

  Index size() const { return static_cast<Index>(order_.size()); }
  const std::vector<Index>& order() const { return order_; }
  std::span<const Index> column_rows(Index i) const {
    return {rows_.data() + offsets_[i], static_cast<std::size_t>(offsets_[i + 1] - offsets_[i])};
  }
  std::span<const double> column_values(Index i) const {
    return {values_.data() + offsets_[i], static_cast<std::size_t>(offsets_[i + 1] - offsets_[i])};
  }
  double diagonal(Index i) const { return values_[offsets_[i + 1] - 1]; }
  Index offdiagonal_nonzeros() const { return static_cast<Index>(rows_.size()) - size(); }
  /// -log det K_hat = 2 sum log diag(U).
  double log_det_precision() const;
  /// Dense U in plan order (positions), for tests and small problems.
  Matrix dense() const;
  /// U^T r, where r is given in the original (unordered) indexing.
  Vector transpose_times(const Vector& r) const;

 private:
  std::vector<Index> order_;
  std::vector<Index> offsets_;
  std::vector<Index> rows_;  // positions, ascending; the diagonal is last
  std::vector<double> values_;
};

SparseInverseCholesky sparse_inverse_cholesky(const ConditioningPlan& plan,
                                              const CovarianceConfig& config, const Points& X);

inline constexpr Index kDenseCap = 4000;

/// Dense multivariate normal log-density; reference for tests and the exact
/// GP baseline. Throws above `cap` points.
double exact_gp_loglik(const Dataset& data, const CovarianceConfig& config, const MeanModel& mean,
                       Index cap = kDenseCap);

/// Dense counterpart of vecchia_score.
LikelihoodEvaluation exact_gp_score(const Dataset& data, const CovarianceConfig& config,
                                    MeanBasis basis, const ParameterVector& params,
                                    Index cap = kDenseCap);

/// Dense profiled log-likelihood and beta_hat only.
LikelihoodEvaluation exact_gp_profile_loglik(const Dataset& data, const CovarianceConfig& config,
                                             MeanBasis basis, Index cap = kDenseCap);

/// Lower Cholesky factor of a block covariance, with one jittered retry
/// (1e-10 * variance on the diagonal). Returns false when the factor needed
/// jitter; throws SingularBlockError(block) when both attempts fail.
bool factor_block(Matrix& K, double variance, Index block);

}  // namespace svecchia
