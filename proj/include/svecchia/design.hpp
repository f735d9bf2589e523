#pragma once

#include "svecchia/estimation.hpp"
#include "svecchia/types.hpp"

#include <cstdint>
#include <functional>
#include <span>

namespace svecchia {

/// n x d Latin hypercube sample in [0,1]^d: each column has exactly one
/// point in every interval [k/n, (k+1)/n).
Points lhs(Index n, Index d, std::uint64_t seed);

struct DesignConfig {
  Index n = 0;
  double first_stage_fraction = 0.1;
  double oversample_factor = 20.0;
  std::uint64_t seed = 0;

  Index n_first() const;
  void validate(Index d) const;
};

using Evaluator = std::function<double(std::span<const double>)>;

struct DesignResult {
  Dataset data;             // stage-1 rows first, then stage-2 rows in selection order
  Index n_first = 0;
  FitResult first_fit;
  FitResult fit;
};

/// Stage 1: LHS of n_first points, evaluated and fit. Stage 2: the first
/// n - n_first points of a maximin ordering of an oversampled LHS candidate
/// pool in the space scaled by the stage-1 ranges, with the stage-1 points
/// as fixed predecessors. The final fit warm-starts from stage 1.
DesignResult two_stage_design(const DesignConfig& config, Index d, const Evaluator& evaluate,
                              const EstimationConfig& est, MeanBasis basis = MeanBasis::constant,
                              double smoothness = 3.5);

/// Evaluates f at every row, reporting the failing row on error.
Vector evaluate_rows(const Evaluator& f, const Points& X, Index row_offset = 0);

}  // namespace svecchia
