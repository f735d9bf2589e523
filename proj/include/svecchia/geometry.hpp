#pragma once

#include "svecchia/types.hpp"

#include <span>
#include <vector>

namespace svecchia {

/// Ordering of n variables plus, for each ordered position i, the positions
/// c(i) < i it conditions on (ascending). Immutable once built.
class ConditioningPlan {
 public:
  ConditioningPlan() = default;
  ConditioningPlan(std::vector<Index> order, std::vector<std::vector<Index>> sets, Index m);

  Index size() const { return static_cast<Index>(order_.size()); }
  Index m() const { return m_; }
  /// order()[i] is the original index of the point at position i.
  const std::vector<Index>& order() const { return order_; }
  std::span<const Index> conditioning(Index position) const {
    return {neighbors_.data() + offsets_[position],
            static_cast<std::size_t>(offsets_[position + 1] - offsets_[position])};
  }
  /// Number of off-diagonal entries in the implied inverse Cholesky factor.
  Index nonzeros() const { return static_cast<Index>(neighbors_.size()); }

 private:
  std::vector<Index> order_;
  std::vector<Index> offsets_{0};
  std::vector<Index> neighbors_;
  Index m_ = 0;
};

/// Exact maximin ordering of the rows of Z. The first point is the one
/// nearest the coordinate-wise mean; every later point maximizes its minimum
/// distance to the points already ordered. Ties go to the smaller index.
std::vector<Index> maximin_order(const Points& Z);

/// Maximin ordering of `candidates` when all rows of `fixed` are already
/// ordered. Returns the first `count` candidate indices (all when count < 0).
/// With an empty `fixed` this is maximin_order truncated to `count`.
std::vector<Index> maximin_order_after(const Points& fixed, const Points& candidates,
                                       Index count = -1);

/// For each position i, the min(m, i) nearest previously ordered points
/// (Euclidean distance on Z; ties to the smaller original index).
ConditioningPlan nn_conditioning(const Points& Z, std::vector<Index> order, Index m);

/// Every position i conditions on positions 0 .. min(m, i) - 1.
ConditioningPlan lowrank_conditioning(std::vector<Index> order, Index m);

/// Joint layout for prediction: all observed points first (in their own
/// maximin order), then prediction points in maximin order given the
/// observed ones. Each prediction position i conditions on joint positions
/// g(i) < i, which may mix observed and prediction variables.
class PredictionPlan {
 public:
  PredictionPlan() = default;
  PredictionPlan(Index n_obs, std::vector<Index> obs_order, std::vector<Index> pred_order,
                 std::vector<std::vector<Index>> sets, Index m);

  Index n_obs() const { return n_obs_; }
  Index n_pred() const { return static_cast<Index>(pred_order_.size()); }
  Index m() const { return m_; }
  const std::vector<Index>& obs_order() const { return obs_order_; }
  /// pred_order()[k] is the index (into the prediction inputs) of the
  /// prediction variable at joint position n_obs + k.
  const std::vector<Index>& pred_order() const { return pred_order_; }
  /// Joint positions conditioned on by prediction variable k (0-based within
  /// the prediction block), ascending.
  std::span<const Index> conditioning(Index k) const {
    return {neighbors_.data() + offsets_[k],
            static_cast<std::size_t>(offsets_[k + 1] - offsets_[k])};
  }

 private:
  Index n_obs_ = 0;
  std::vector<Index> obs_order_;
  std::vector<Index> pred_order_;
  std::vector<Index> offsets_{0};
  std::vector<Index> neighbors_;
  Index m_ = 0;
};

PredictionPlan prediction_plan(const Points& Z_obs, const Points& Z_pred, Index m_pred);

/// Prediction layout for the low-rank baseline: every prediction variable
/// conditions on the first min(m, n_obs) observed positions.
PredictionPlan lowrank_prediction_plan(const Points& Z_obs, const Points& Z_pred, Index m_pred);

}  // namespace svecchia
