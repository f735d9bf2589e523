#pragma once

#include "svecchia/covariance.hpp"
#include "svecchia/geometry.hpp"
#include "svecchia/likelihood.hpp"
#include "svecchia/types.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace svecchia {

/// svecchia: ordering and neighbors in the scaled input space, refreshed
/// during estimation. vecchia: the same on the raw inputs. lowrank: every
/// variable conditions on the first m in raw maximin order. exact: dense GP.
enum class Method { svecchia, vecchia, lowrank, exact };

Method parse_method(const std::string& name);
std::string to_string(Method method);

struct EstimationConfig {
  Method method = Method::svecchia;
  Index m_est = 30;
  Index n_est = 5000;
  /// Iterations before which the plan is rebuilt from the current ranges.
  /// Empty means 2, 4, 8, 16, ...
  std::vector<Index> reorder_iterations;
  double termination_tol = 1e-4;
  Index max_iterations = 40;
  double relevance_threshold = 1e3;
  double penalty_weight = 1.0;
  std::uint64_t subsample_seed = 0;
  bool estimate_nugget = false;
  /// When false the loop always runs max_iterations (used for timing).
  bool stop_on_convergence = true;
  /// One line per iteration when set.
  std::ostream* trace_log = nullptr;

  void validate() const;
  bool is_reorder_iteration(Index k) const;
};

enum class StepType { fisher, line_search, stall };
std::string to_string(StepType step);

struct TraceRecord {
  Index iteration = 0;
  double objective_before = 0.0;  // after any re-plan, before the step
  double objective = 0.0;         // penalized, after the step
  double loglik = 0.0;
  double gradient_norm = 0.0;
  StepType step = StepType::fisher;
  bool reordered = false;
  Vector theta;
};

struct FitResult {
  CovarianceConfig config;
  MeanBasis basis = MeanBasis::none;
  Vector beta;
  Method method = Method::svecchia;
  Index m_est = 0;
  std::vector<TraceRecord> trace;
  /// Plan over the estimation subsample at the final parameters.
  ConditioningPlan plan;
  /// The full training data; predictions condition on all of it.
  Dataset training;
  std::vector<Index> eliminated;
  double loglik = 0.0;
  Index iterations = 0;
  bool converged = false;
  std::optional<double> variance_correction;
  std::uint64_t variance_correction_seed = 0;

  MeanModel mean_model() const { return MeanModel{basis, beta}; }
  /// Variance inflation applied at prediction time (1 when not computed).
  double correction() const { return variance_correction.value_or(1.0); }
};

/// Uniform subset of n_est rows without replacement, in increasing row
/// order. Returns the data unchanged when n_est >= n.
Dataset subsample(const Dataset& data, Index n_est, std::uint64_t seed);

/// theta + M^{-1} g over the free entries, with M^{-1} restricted to the
/// eigen-directions whose eigenvalue exceeds 1e-10 times the largest; nullopt
/// when M has no positive eigenvalue. Steps whose largest entry exceeds
/// max_abs_step are scaled down.
std::optional<ParameterVector> fisher_step(const LikelihoodEvaluation& eval,
                                           const ParameterVector& theta,
                                           double max_abs_step = kInfiniteRange);

struct LineSearchResult {
  ParameterVector theta;
  double value = 0.0;
  bool stalled = false;
  Index halvings = 0;
};

/// Backtracking along the normalized gradient: step 1, halved up to 20
/// times, until the objective strictly exceeds `value`.
LineSearchResult line_search(const ParameterVector& theta, const Vector& gradient, double value,
                             const std::function<double(const ParameterVector&)>& objective);

struct PenaltyTerms {
  double value = 0.0;
  double gradient = 0.0;   // with respect to log variance
  double curvature = 0.0;
};

/// weight * max(0, log variance - log sample_variance)^2.
PenaltyTerms penalty(double log_variance, double sample_variance, double weight);

/// Sample variance of y, column ranges (max - min) as ranges, zero nugget
/// (or 1e-4 * variance when estimate_nugget).
CovarianceConfig default_initial(const Dataset& data, bool estimate_nugget = false,
                                 double smoothness = 3.5);

/// Builds the estimation-time plan for a method at the given parameters.
ConditioningPlan build_plan(const Points& X, const CovarianceConfig& config, Method method, Index m);

FitResult fit(const Dataset& data, const EstimationConfig& est, const CovarianceConfig& initial,
              MeanBasis basis);

}  // namespace svecchia
