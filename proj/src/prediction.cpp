#include "svecchia/prediction.hpp"

#include "svecchia/diagnostics.hpp"
#include "svecchia/parallel.hpp"

#include <boost/math/distributions/normal.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace svecchia {

namespace {

constexpr std::size_t kChunk = 64;

}  // namespace

PredictiveDistribution::PredictiveDistribution(Vector means, std::vector<Index> order,
                                               std::vector<Index> offsets, std::vector<Index> cols,
                                               std::vector<double> values, double correction)
    : means_(std::move(means)), order_(std::move(order)), offsets_(std::move(offsets)),
      cols_(std::move(cols)), values_(std::move(values)) {
  if (static_cast<Index>(order_.size()) != means_.size() ||
      static_cast<Index>(offsets_.size()) != means_.size() + 1)
    throw Error("predictive distribution: inconsistent sizes");
  set_correction(correction);
  compute_variances();
}

void PredictiveDistribution::set_correction(double b) {
  if (!(b >= 0) || !std::isfinite(b)) throw Error("variance correction must be finite and non-negative");
  correction_ = b;
}

Vector PredictiveDistribution::corrected_variances() const { return correction_ * variances_; }

// var_k = || W^{-T} e_k ||^2, by back substitution restricted to the
// positions reachable from k.
void PredictiveDistribution::compute_variances() {
  const Index n = size();
  variances_.resize(n);
  parallel_chunks(static_cast<std::size_t>(n), kChunk, [&](std::size_t begin, std::size_t end,
                                                         std::size_t) {
    std::vector<double> acc(n, 0.0);
    for (std::size_t kk = begin; kk < end; ++kk) {
      const Index k = static_cast<Index>(kk);
      acc[k] = 1.0;
      Index low = k;
      double total = 0.0;
      for (Index i = k; i >= low; --i) {
        if (acc[i] == 0.0) continue;
        const auto c = row_cols(i);
        const auto v = row_values(i);
        const double x = acc[i] / v.back();
        acc[i] = 0.0;
        total += x * x;
        for (std::size_t t = 0; t + 1 < c.size(); ++t) {
          acc[c[t]] -= v[t] * x;
          low = std::min(low, c[t]);
        }
      }
      variances_[order_[k]] = total;
    }
  });
}

Matrix PredictiveDistribution::dense_factor() const {
  const Index n = size();
  Matrix W = Matrix::Zero(n, n);
  for (Index k = 0; k < n; ++k) {
    const auto c = row_cols(k);
    const auto v = row_values(k);
    for (std::size_t t = 0; t < c.size(); ++t) W(k, c[t]) = v[t];
  }
  return W;
}

Matrix PredictiveDistribution::joint_covariance() const {
  const Index n = size();
  const Matrix W = dense_factor();
  const Matrix Winv = W.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n));
  const Matrix C = correction_ * Winv * Winv.transpose();
  Matrix out(n, n);
  for (Index a = 0; a < n; ++a)
    for (Index b = 0; b < n; ++b) out(order_[a], order_[b]) = C(a, b);
  return out;
}

namespace {

void check_inputs(const FitResult& fit, const Points& X_pred) {
  if (X_pred.rows() < 1) throw Error("no prediction inputs");
  if (X_pred.cols() != fit.training.dim()) {
    std::ostringstream os;
    os << "prediction inputs have " << X_pred.cols() << " columns, the model expects "
       << fit.training.dim();
    throw Error(os.str());
  }
  if (!X_pred.allFinite()) throw Error("non-finite prediction input");
  if (fit.config.ranges.size() != static_cast<std::size_t>(fit.training.dim()))
    throw Error("fit result is inconsistent with its training data");
}

PredictiveDistribution predict_dense(const FitResult& fit, const Points& Xp) {
  const Dataset& tr = fit.training;
  const Index n = tr.size(), np = Xp.rows();
  if (n + np > 2 * kDenseCap || n > kDenseCap || np > kDenseCap)
    throw Error("exact prediction limited to " + std::to_string(kDenseCap) + " points per block");
  const MeanModel mean = fit.mean_model();
  Points all(n + np, tr.dim());
  all << tr.inputs, Xp;
  const Matrix K = cov_matrix(all, fit.config, false);
  Matrix Koo = K.topLeftCorner(n, n);
  Koo.diagonal().array() += fit.config.nugget;
  const Matrix Kpo = K.bottomLeftCorner(np, n);
  Matrix Kpp = K.bottomRightCorner(np, np);
  Kpp.diagonal().array() += fit.config.nugget;
  factor_block(Koo, fit.config.variance, 0);
  const auto L = Koo.triangularView<Eigen::Lower>();
  const Vector r = L.solve(Vector(tr.responses - mean.means(tr.inputs)));
  const Matrix A = L.solve(Kpo.transpose());  // n x np
  Vector mu = mean.means(Xp) + A.transpose() * r;
  Matrix C = Kpp - A.transpose() * A;
  if (!factor_block(C, fit.config.variance, 0)) warn("exact predictive covariance needed jitter");
  const Matrix W = C.triangularView<Eigen::Lower>().solve(Matrix::Identity(np, np));
  std::vector<Index> order(np), offsets(np + 1, 0), cols;
  std::vector<double> values;
  std::iota(order.begin(), order.end(), Index{0});
  cols.reserve(np * (np + 1) / 2);
  values.reserve(np * (np + 1) / 2);
  for (Index k = 0; k < np; ++k) {
    for (Index j = 0; j <= k; ++j) {
      cols.push_back(j);
      values.push_back(W(k, j));
    }
    offsets[k + 1] = static_cast<Index>(cols.size());
  }
  return PredictiveDistribution(std::move(mu), std::move(order), std::move(offsets),
                                std::move(cols), std::move(values), fit.correction());
}

}  // namespace

PredictiveDistribution predict(const FitResult& fit, const Points& X_pred, Index m_pred) {
  check_inputs(fit, X_pred);
  if (m_pred < 1) throw Error("m_pred must be >= 1");
  if (fit.method == Method::exact) return predict_dense(fit, X_pred);

  const Dataset& tr = fit.training;
  const Index n = tr.size(), np = X_pred.rows();
  const MeanModel mean = fit.mean_model();
  const Points Zo = scale_inputs(tr.inputs, fit.config.ranges);
  const Points Zp = scale_inputs(X_pred, fit.config.ranges);
  const PredictionPlan plan =
      fit.method == Method::lowrank ? lowrank_prediction_plan(tr.inputs, X_pred, m_pred)
      : fit.method == Method::vecchia ? prediction_plan(tr.inputs, X_pred, m_pred)
                                      : prediction_plan(Zo, Zp, m_pred);

  Points J(n + np, Zo.cols());
  for (Index i = 0; i < n; ++i) J.row(i) = Zo.row(plan.obs_order()[i]);
  for (Index k = 0; k < np; ++k) J.row(n + k) = Zp.row(plan.pred_order()[k]);
  const Vector mo = mean.means(tr.inputs);
  Vector resid(n);
  for (Index i = 0; i < n; ++i) {
    const Index o = plan.obs_order()[i];
    resid[i] = tr.responses[o] - mo[o];
  }

  // Without a nugget a target that coincides with an observation is that
  // observation; it conditions on it alone.
  std::vector<Index> twin(np, -1);
  if (fit.config.nugget == 0.0)
    for (Index k = 0; k < np; ++k)
      for (Index j : plan.conditioning(k))
        if (j < n && (J.row(j) - J.row(n + k)).squaredNorm() == 0.0) {
          twin[k] = j;
          break;
        }
  std::vector<Index> offsets(np + 1, 0);
  for (Index k = 0; k < np; ++k) {
    Index c = 1;
    if (twin[k] < 0)
      for (Index j : plan.conditioning(k)) c += j >= n;
    offsets[k + 1] = offsets[k] + c;
  }
  std::vector<Index> cols(offsets[np]);
  std::vector<double> values(offsets[np]);
  Vector rhs(np);
  const BlockKernel kernel(fit.config);
  const std::size_t chunks = chunk_count(static_cast<std::size_t>(np), kChunk);
  std::vector<Index> jittered(chunks, 0);

  parallel_chunks(static_cast<std::size_t>(np), kChunk, [&](std::size_t begin, std::size_t end,
                                                          std::size_t chunk) {
    std::vector<Index> rows;
    Matrix K;
    Vector u;
    for (std::size_t kk = begin; kk < end; ++kk) {
      const Index k = static_cast<Index>(kk);
      const auto g = plan.conditioning(k);
      if (twin[k] >= 0)
        rows.assign(1, twin[k]);
      else
        rows.assign(g.begin(), g.end());
      const Index b = static_cast<Index>(rows.size()) + 1;
      rows.push_back(n + k);
      kernel.covariance(J, rows, K);
      if (!factor_block(K, kernel.variance(), n + k) && twin[k] < 0) ++jittered[chunk];
      u = Vector::Zero(b);
      u[b - 1] = 1.0;
      const Matrix& Lm = K;
      Lm.triangularView<Eigen::Lower>().transpose().solveInPlace(u);
      double r = 0.0;
      Index t = offsets[k];
      for (Index j = 0; j + 1 < b; ++j) {
        if (rows[j] < n) {
          r -= u[j] * resid[rows[j]];
        } else {
          cols[t] = rows[j] - n;
          values[t] = u[j];
          ++t;
        }
      }
      cols[t] = k;
      values[t] = u[b - 1];
      rhs[k] = r;
    }
  });
  const Index jit = std::accumulate(jittered.begin(), jittered.end(), Index{0});
  if (jit > 0) warn(std::to_string(jit) + " prediction block(s) needed diagonal jitter to factorize");

  // Forward solve W e = rhs for the conditional mean offsets.
  Vector e(np);
  for (Index k = 0; k < np; ++k) {
    double s = rhs[k];
    for (Index t = offsets[k]; t + 1 < offsets[k + 1]; ++t) s -= values[t] * e[cols[t]];
    e[k] = s / values[offsets[k + 1] - 1];
  }
  Vector mu = mean.means(X_pred);
  for (Index k = 0; k < np; ++k) mu[plan.pred_order()[k]] += e[k];
  return PredictiveDistribution(std::move(mu), plan.pred_order(), std::move(offsets),
                                std::move(cols), std::move(values), fit.correction());
}

Matrix sample_joint(const PredictiveDistribution& dist, Index n_samples, std::uint64_t seed) {
  if (n_samples < 0) throw Error("n_samples must be non-negative");
  const Index n = dist.size();
  Matrix out(n_samples, n);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  const double scale = std::sqrt(dist.correction());
  Vector e(n);
  for (Index s = 0; s < n_samples; ++s) {
    for (Index k = 0; k < n; ++k) {
      const auto c = dist.row_cols(k);
      const auto v = dist.row_values(k);
      double acc = normal(rng);
      for (std::size_t t = 0; t + 1 < c.size(); ++t) acc -= v[t] * e[c[t]];
      e[k] = acc / v.back();
    }
    for (Index k = 0; k < n; ++k) {
      const Index o = dist.order()[k];
      out(s, o) = dist.means()[o] + scale * e[k];
    }
  }
  return out;
}

double variance_correction(const FitResult& fit, double split_fraction, std::uint64_t seed,
                           Index m_pred) {
  if (!(split_fraction > 0 && split_fraction < 1)) throw Error("split_fraction must lie in (0, 1)");
  const Dataset& tr = fit.training;
  const Index n = tr.size();
  const Index n_in = static_cast<Index>(std::llround(split_fraction * static_cast<double>(n)));
  if (n_in < 2 || n - n_in < kMinCorrectionTest) {
    std::ostringstream os;
    os << "variance correction needs at least 2 inner training points and "
       << kMinCorrectionTest << " inner test points; the " << n
       << " training points split into " << n_in << " and " << n - n_in;
    throw Error(os.str());
  }
  std::vector<Index> idx(n);
  std::iota(idx.begin(), idx.end(), Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::sort(idx.begin(), idx.begin() + n_in);
  std::sort(idx.begin() + n_in, idx.end());

  FitResult inner = fit;
  inner.variance_correction.reset();
  inner.training = Dataset{Points(n_in, tr.dim()), Vector(n_in)};
  Points Xt(n - n_in, tr.dim());
  Vector yt(n - n_in);
  for (Index i = 0; i < n; ++i) {
    if (i < n_in) {
      inner.training.inputs.row(i) = tr.inputs.row(idx[i]);
      inner.training.responses[i] = tr.responses[idx[i]];
    } else {
      Xt.row(i - n_in) = tr.inputs.row(idx[i]);
      yt[i - n_in] = tr.responses[idx[i]];
    }
  }
  const PredictiveDistribution dist = predict(inner, Xt, m_pred);
  double sum = 0.0;
  Index used = 0;
  for (Index i = 0; i < yt.size(); ++i) {
    const double v = dist.variances()[i];
    if (!(v > 0)) continue;
    const double r = yt[i] - dist.means()[i];
    sum += r * r / v;
    ++used;
  }
  if (used < yt.size())
    warn(std::to_string(yt.size() - used) + " inner test point(s) with zero variance excluded from the variance correction");
  if (used == 0) throw Error("variance correction: every inner predictive variance is zero");
  return sum / static_cast<double>(used);
}

std::vector<Interval> prediction_intervals(const PredictiveDistribution& dist, double level) {
  if (!(level > 0 && level < 1)) throw Error("interval level must lie in (0, 1)");
  const double z = boost::math::quantile(boost::math::normal(), 0.5 * (1.0 + level));
  std::vector<Interval> out(dist.size());
  for (Index i = 0; i < dist.size(); ++i) {
    const double h = z * std::sqrt(dist.correction() * dist.variances()[i]);
    out[i] = {dist.means()[i] - h, dist.means()[i] + h};
  }
  return out;
}

}  // namespace svecchia
