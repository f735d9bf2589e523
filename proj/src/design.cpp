#include "svecchia/design.hpp"

#include "svecchia/geometry.hpp"

#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace svecchia {

Points lhs(Index n, Index d, std::uint64_t seed) {
  if (n < 1 || d < 1) throw Error("lhs needs n >= 1 and d >= 1");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Points X(n, d);
  std::vector<Index> perm(n);
  for (Index l = 0; l < d; ++l) {
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    for (Index i = 0; i < n; ++i) {
      const double x = (static_cast<double>(perm[i]) + unif(rng)) / static_cast<double>(n);
      // Keep the point inside its stratum under rounding.
      X(i, l) = std::min(x, std::nextafter((perm[i] + 1.0) / n, 0.0));
    }
  }
  return X;
}

Index DesignConfig::n_first() const {
  return static_cast<Index>(std::llround(first_stage_fraction * static_cast<double>(n)));
}

void DesignConfig::validate(Index d) const {
  if (!(first_stage_fraction > 0 && first_stage_fraction < 1))
    throw Error("first_stage_fraction must lie in (0, 1)");
  if (!(oversample_factor >= 1)) throw Error("oversample_factor must be >= 1");
  if (n_first() < d + 2) {
    std::ostringstream os;
    os << "first stage has " << n_first() << " runs; at least d + 2 = " << d + 2 << " needed";
    throw Error(os.str());
  }
  if (n_first() >= n) throw Error("first stage uses the whole budget");
}

Vector evaluate_rows(const Evaluator& f, const Points& X, Index row_offset) {
  Vector y(X.rows());
  for (Index i = 0; i < X.rows(); ++i) {
    try {
      y[i] = f(row_span(X, i));
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "evaluator failed at design point " << row_offset + i << " (";
      for (Index l = 0; l < X.cols(); ++l) os << (l ? ", " : "") << X(i, l);
      os << "): " << e.what();
      throw Error(os.str());
    }
    if (!std::isfinite(y[i])) {
      std::ostringstream os;
      os << "evaluator returned a non-finite value at design point " << row_offset + i;
      throw Error(os.str());
    }
  }
  return y;
}

DesignResult two_stage_design(const DesignConfig& config, Index d, const Evaluator& evaluate,
                              const EstimationConfig& est, MeanBasis basis, double smoothness) {
  config.validate(d);
  const Index n1 = config.n_first();
  const Index n2 = config.n - n1;

  DesignResult out;
  out.n_first = n1;
  Dataset first{lhs(n1, d, config.seed), Vector()};
  first.responses = evaluate_rows(evaluate, first.inputs);
  out.first_fit = fit(first, est, default_initial(first, est.estimate_nugget, smoothness), basis);

  const CovarianceConfig& c1 = out.first_fit.config;
  const auto pool_size = static_cast<Index>(
      std::ceil(config.oversample_factor * static_cast<double>(config.n)));
  const Points pool = lhs(pool_size, d, config.seed + 1);
  const auto pick = maximin_order_after(scale_inputs(first.inputs, c1.ranges),
                                        scale_inputs(pool, c1.ranges), n2);

  out.data.inputs.resize(config.n, d);
  out.data.inputs.topRows(n1) = first.inputs;
  for (Index k = 0; k < n2; ++k) out.data.inputs.row(n1 + k) = pool.row(pick[k]);
  out.data.responses.resize(config.n);
  out.data.responses.head(n1) = first.responses;
  out.data.responses.tail(n2) = evaluate_rows(evaluate, out.data.inputs.bottomRows(n2), n1);

  // Warm start; dimensions dropped in stage 1 restart at the threshold so
  // the refit can bring them back.
  CovarianceConfig warm = c1;
  for (Index l = 0; l < warm.dim(); ++l)
    if (warm.eliminated(l)) warm.ranges[l] = est.relevance_threshold;
  if (est.estimate_nugget && !(warm.nugget > 0)) warm.nugget = 1e-4 * warm.variance;
  out.fit = fit(out.data, est, warm, basis);
  return out;
}

}  // namespace svecchia
