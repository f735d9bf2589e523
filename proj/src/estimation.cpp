#include "svecchia/estimation.hpp"

#include "svecchia/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace svecchia {

Method parse_method(const std::string& name) {
  if (name == "svecchia") return Method::svecchia;
  if (name == "vecchia") return Method::vecchia;
  if (name == "lowrank") return Method::lowrank;
  if (name == "exact") return Method::exact;
  throw Error("unknown method '" + name + "' (expected svecchia, vecchia, lowrank or exact)");
}

std::string to_string(Method method) {
  switch (method) {
    case Method::svecchia: return "svecchia";
    case Method::vecchia: return "vecchia";
    case Method::lowrank: return "lowrank";
    case Method::exact: return "exact";
  }
  return "?";
}

std::string to_string(StepType step) {
  switch (step) {
    case StepType::fisher: return "fisher";
    case StepType::line_search: return "line-search";
    case StepType::stall: return "stall";
  }
  return "?";
}

void EstimationConfig::validate() const {
  if (m_est < 1) throw Error("m_est must be >= 1");
  if (n_est < m_est + 1) throw Error("n_est must be at least m_est + 1");
  if (!(termination_tol > 0)) throw Error("termination_tol must be positive");
  if (max_iterations < 0) throw Error("max_iterations must be non-negative");
  if (!(penalty_weight >= 0)) throw Error("penalty_weight must be non-negative");
  if (!(relevance_threshold > 0)) throw Error("relevance_threshold must be positive");
}

bool EstimationConfig::is_reorder_iteration(Index k) const {
  if (!reorder_iterations.empty())
    return std::find(reorder_iterations.begin(), reorder_iterations.end(), k) !=
           reorder_iterations.end();
  return k >= 2 && (k & (k - 1)) == 0;
}

Dataset subsample(const Dataset& data, Index n_est, std::uint64_t seed) {
  const Index n = data.size();
  if (n_est >= n) return data;
  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index{0});
  std::mt19937_64 rng(seed);
  for (Index i = 0; i < n_est; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n_est);
  std::sort(idx.begin(), idx.end());
  Dataset out{Points(n_est, data.dim()), Vector(n_est)};
  for (Index i = 0; i < n_est; ++i) {
    out.inputs.row(i) = data.inputs.row(idx[i]);
    out.responses[i] = data.responses[idx[i]];
  }
  return out;
}

namespace {
constexpr double kEigenFloor = 1e-10;
}  // namespace

std::optional<ParameterVector> fisher_step(const LikelihoodEvaluation& eval,
                                           const ParameterVector& theta, double max_abs_step) {
  const Index P = theta.num_free();
  if (eval.gradient.size() != P || eval.fisher_info.rows() != P)
    throw Error("fisher_step: evaluation does not match the free parameters");
  if (P == 0) return theta;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(eval.fisher_info);
  const double top = eig.eigenvalues().maxCoeff();
  if (!(top > 0) || !std::isfinite(top)) return std::nullopt;
  // Directions the information barely determines (e.g. a range that has
  // run off towards infinity) are left out of the step.
  Vector inv = Vector::Zero(P);
  for (Index k = 0; k < P; ++k)
    if (eig.eigenvalues()[k] > kEigenFloor * top) inv[k] = 1.0 / eig.eigenvalues()[k];
  Vector step = eig.eigenvectors() *
                (inv.asDiagonal() * (eig.eigenvectors().transpose() * eval.gradient));
  if (!step.allFinite()) return std::nullopt;
  const double big = step.cwiseAbs().maxCoeff();
  if (big > max_abs_step) step *= max_abs_step / big;
  return theta.with_free(theta.free_values() + step);
}

LineSearchResult line_search(const ParameterVector& theta, const Vector& gradient, double value,
                             const std::function<double(const ParameterVector&)>& objective) {
  LineSearchResult out{theta, value, true, 0};
  const double norm = gradient.norm();
  if (!(norm > 0) || !std::isfinite(norm)) return out;
  const Vector dir = gradient / norm;
  const Vector base = theta.free_values();
  double t = 1.0;
  for (Index h = 0; h <= 20; ++h, t *= 0.5) {
    const ParameterVector cand = theta.with_free(base + t * dir);
    const double v = objective(cand);
    if (v > value) return {cand, v, false, h};
  }
  out.halvings = 20;
  return out;
}

PenaltyTerms penalty(double log_variance, double sample_variance, double weight) {
  if (!(sample_variance > 0)) throw Error("penalty: sample variance must be positive");
  const double excess = log_variance - std::log(sample_variance);
  if (excess <= 0 || weight == 0) return {};
  return {weight * excess * excess, 2.0 * weight * excess, 2.0 * weight};
}

CovarianceConfig default_initial(const Dataset& data, bool estimate_nugget, double smoothness) {
  if (data.size() < 2) throw Error("default_initial needs at least two observations");
  const double mean = data.responses.mean();
  const double var =
      (data.responses.array() - mean).square().sum() / static_cast<double>(data.size() - 1);
  if (!(var > 0)) throw Error("responses are constant; cannot initialize the variance");
  CovarianceConfig c;
  c.smoothness = smoothness;
  c.variance = var;
  c.ranges.resize(data.dim());
  for (Index l = 0; l < data.dim(); ++l) {
    const double r = data.inputs.col(l).maxCoeff() - data.inputs.col(l).minCoeff();
    if (r > 0) {
      c.ranges[l] = r;
    } else {
      c.ranges[l] = 1.0;
      warn("input column " + std::to_string(l) + " is constant; initial range set to 1");
    }
  }
  c.nugget = estimate_nugget ? 1e-4 * var : 0.0;
  return c;
}

ConditioningPlan build_plan(const Points& X, const CovarianceConfig& config, Method method, Index m) {
  switch (method) {
    case Method::svecchia: {
      const Points Z = scale_inputs(X, config.ranges);
      return nn_conditioning(Z, maximin_order(Z), m);
    }
    case Method::vecchia:
      return nn_conditioning(X, maximin_order(X), m);
    case Method::lowrank:
      return lowrank_conditioning(maximin_order(X), m);
    case Method::exact:
      return ConditioningPlan();
  }
  return ConditioningPlan();
}

namespace {

constexpr double kMaxStep = 2.0;
constexpr double kLogBound = 30.0;
constexpr Index kStallLimit = 3;
constexpr Index kFisherHalvings = 8;

struct Scored {
  LikelihoodEvaluation ev;
  double objective = -std::numeric_limits<double>::infinity();
};

class Objective {
 public:
  Objective(const Dataset& data, const EstimationConfig& est, MeanBasis basis,
            const CovarianceConfig& initial, const ParameterVector& theta0)
      : data_(data), est_(est), basis_(basis), initial_(initial), theta0_(theta0) {
    const double mean = data.responses.mean();
    sample_variance_ = (data.responses.array() - mean).square().sum() /
                       static_cast<double>(std::max<Index>(data.size() - 1, 1));
    if (!(sample_variance_ > 0)) throw Error("responses are constant; nothing to estimate");
    const auto free = theta0.free_indices();
    for (std::size_t k = 0; k < free.size(); ++k)
      if (free[k] == ParameterVector::variance_index()) variance_slot_ = static_cast<Index>(k);
  }

  const ConditioningPlan& plan() const { return plan_; }
  void replan(const CovarianceConfig& c) {
    if (est_.method != Method::exact) plan_ = build_plan(data_.inputs, c, est_.method, est_.m_est);
  }

  // Fixed entries come from the initial config verbatim, so they are
  // bit-identical to what the caller passed in.
  CovarianceConfig config_of(const ParameterVector& t) const {
    CovarianceConfig c = t.to_config(initial_.smoothness);
    if (t.is_fixed(ParameterVector::variance_index())) c.variance = initial_.variance;
    for (Index l = 0; l < c.dim(); ++l)
      if (t.is_fixed(ParameterVector::range_index(l))) c.ranges[l] = initial_.ranges[l];
    if (t.is_fixed(t.nugget_index())) c.nugget = initial_.nugget;
    return c;
  }

  double value(const ParameterVector& t) const {
    try {
      const CovarianceConfig c = config_of(t);
      const double ll = est_.method == Method::exact
                            ? exact_gp_profile_loglik(data_, c, basis_).loglik
                            : vecchia_profile_loglik(data_, plan_, c, basis_).loglik;
      const double v = ll - pen(t).value;
      return std::isfinite(v) ? v : -std::numeric_limits<double>::infinity();
    } catch (const Error&) {
      return -std::numeric_limits<double>::infinity();
    }
  }

  Scored score(const ParameterVector& t) const {
    Scored s;
    try {
      const CovarianceConfig c = config_of(t);
      s.ev = est_.method == Method::exact ? exact_gp_score(data_, c, basis_, t)
                                          : vecchia_score(data_, plan_, c, basis_, t);
    } catch (const Error&) {
      return s;
    }
    const PenaltyTerms p = pen(t);
    if (variance_slot_ >= 0) {
      s.ev.gradient[variance_slot_] -= p.gradient;
      s.ev.fisher_info(variance_slot_, variance_slot_) += p.curvature;
    }
    s.objective = s.ev.loglik - p.value;
    if (!std::isfinite(s.objective) || !s.ev.gradient.allFinite() || !s.ev.fisher_info.allFinite())
      s.objective = -std::numeric_limits<double>::infinity();
    return s;
  }

 private:
  PenaltyTerms pen(const ParameterVector& t) const {
    if (variance_slot_ < 0) return {};
    return penalty(t.values()[ParameterVector::variance_index()], sample_variance_,
                   est_.penalty_weight);
  }

  const Dataset& data_;
  const EstimationConfig& est_;
  MeanBasis basis_;
  CovarianceConfig initial_;
  ParameterVector theta0_;
  ConditioningPlan plan_;
  double sample_variance_ = 0.0;
  Index variance_slot_ = -1;
};

ParameterVector clamp(const ParameterVector& t) {
  Vector v = t.free_values().cwiseMax(-kLogBound).cwiseMin(kLogBound);
  return t.with_free(v);
}

void log_record(std::ostream& os, const TraceRecord& r) {
  os << "iter " << r.iteration << " loglik " << std::setprecision(10) << r.loglik << " step "
     << to_string(r.step) << " |g| " << std::setprecision(4) << r.gradient_norm << " reorder "
     << (r.reordered ? 1 : 0) << '\n';
}

}  // namespace

FitResult fit(const Dataset& data, const EstimationConfig& est, const CovarianceConfig& initial,
              MeanBasis basis) {
  data.validate();
  est.validate();
  initial.validate();
  if (initial.dim() != data.dim()) throw Error("initial covariance has the wrong number of ranges");
  if (est.method == Method::exact && std::min(data.size(), est.n_est) > kDenseCap)
    throw Error("exact method limited to " + std::to_string(kDenseCap) + " estimation points");

  const Dataset sub = subsample(data, est.n_est, est.subsample_seed);
  const ParameterVector theta0(initial, !est.estimate_nugget);
  Objective obj(sub, est, basis, initial, theta0);
  obj.replan(initial);

  ParameterVector theta = theta0;
  Scored cur = obj.score(theta);
  if (!std::isfinite(cur.objective))
    throw Error("log-likelihood is not finite at the initial parameters");

  FitResult res;
  res.method = est.method;
  res.m_est = est.m_est;
  res.basis = basis;
  Index stalls = 0;
  Index k = 0;
  const auto value = [&](const ParameterVector& t) { return obj.value(t); };
  for (; k < est.max_iterations; ++k) {
    TraceRecord rec;
    rec.iteration = k;
    if (est.method == Method::svecchia && est.is_reorder_iteration(k)) {
      obj.replan(obj.config_of(theta));
      cur = obj.score(theta);
      if (!std::isfinite(cur.objective)) throw Error("log-likelihood became non-finite after re-planning");
      rec.reordered = true;
    }
    rec.objective_before = cur.objective;
    rec.gradient_norm = cur.ev.gradient.norm();
    const Vector& g = cur.ev.gradient;

    std::optional<ParameterVector> next;
    Scored next_score;
    const auto cand = fisher_step(cur.ev, theta, kMaxStep);
    if (cand) {
      const ParameterVector c = clamp(*cand);
      next_score = obj.score(c);
      if (next_score.objective > cur.objective) {
        next = c;
        rec.step = StepType::fisher;
      }
      // Backtrack along the scoring direction before leaving it.
      const Vector full = cand->free_values() - theta.free_values();
      const bool worth = full.dot(g) >= est.termination_tol;
      for (Index h = 1; worth && !next && h <= kFisherHalvings; ++h) {
        const ParameterVector b = clamp(theta.with_free(theta.free_values() + std::ldexp(1.0, -h) * full));
        if (!(obj.value(b) > cur.objective)) continue;
        next_score = obj.score(b);
        if (next_score.objective > cur.objective) {
          next = b;
          rec.step = StepType::fisher;
        }
      }
    }
    bool small_step = false;
    if (!next) {
      if (cand && (cand->free_values() - theta.free_values()).dot(g) < est.termination_tol)
        small_step = true;
      const LineSearchResult ls =
          small_step ? LineSearchResult{theta, cur.objective, true, 0}
                     : line_search(theta, g, cur.objective, value);
      if (!ls.stalled) {
        next = clamp(ls.theta);
        next_score = obj.score(*next);
        if (!(next_score.objective > cur.objective)) next.reset();
        rec.step = StepType::line_search;
      }
    }

    if (!next) {
      rec.step = StepType::stall;
      rec.objective = cur.objective;
      rec.loglik = cur.ev.loglik;
      rec.theta = theta.values();
      res.trace.push_back(rec);
      if (est.trace_log) log_record(*est.trace_log, rec);
      if (est.stop_on_convergence && small_step) {
        res.converged = true;
        ++k;
        break;
      }
      if (++stalls >= kStallLimit && est.stop_on_convergence) {
        warn("estimation stalled for " + std::to_string(kStallLimit) +
             " consecutive iterations; treating as converged");
        res.converged = true;
        ++k;
        break;
      }
      continue;
    }
    stalls = 0;
    const double dot = (next->free_values() - theta.free_values()).dot(g);
    theta = *next;
    cur = next_score;
    rec.objective = cur.objective;
    rec.loglik = cur.ev.loglik;
    rec.theta = theta.values();
    res.trace.push_back(rec);
    if (est.trace_log) log_record(*est.trace_log, rec);
    if (est.stop_on_convergence && dot < est.termination_tol) {
      res.converged = true;
      ++k;
      break;
    }
  }
  res.iterations = k;
  if (!res.converged && est.stop_on_convergence)
    warn("estimation reached max_iterations without converging");

  CovarianceConfig final_config = obj.config_of(theta);
  Index keep = -1;  // never eliminate every dimension
  for (Index l = 0; l < final_config.dim(); ++l)
    if (!final_config.eliminated(l) && (keep < 0 || final_config.ranges[l] < final_config.ranges[keep]))
      keep = l;
  for (Index l = 0; l < final_config.dim(); ++l) {
    if (final_config.eliminated(l)) {
      res.eliminated.push_back(l);
    } else if (l != keep && final_config.ranges[l] >= est.relevance_threshold) {
      final_config.ranges[l] = kInfiniteRange;
      res.eliminated.push_back(l);
    }
  }
  res.config = final_config;
  if (est.method == Method::exact) {
    const auto ev = exact_gp_profile_loglik(sub, final_config, basis);
    res.loglik = ev.loglik;
    res.beta = ev.beta_hat;
  } else {
    res.plan = build_plan(sub.inputs, final_config, est.method, est.m_est);
    const auto ev = vecchia_profile_loglik(sub, res.plan, final_config, basis);
    res.loglik = ev.loglik;
    res.beta = ev.beta_hat;
  }
  res.training = data;
  return res;
}

}  // namespace svecchia
