#include "svecchia/likelihood.hpp"

#include "svecchia/diagnostics.hpp"
#include "svecchia/parallel.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace svecchia {

namespace {

constexpr std::size_t kChunk = 64;
const double kLog2Pi = std::log(2.0 * std::numbers::pi);

}  // namespace

bool factor_block(Matrix& K, double variance, Index block) {
  thread_local Matrix backup;
  backup = K;
  {
    Eigen::LLT<Eigen::Ref<Matrix>> llt(K);
    if (llt.info() == Eigen::Success) return true;
  }
  K = backup;
  K.diagonal().array() += 1e-10 * variance;
  Eigen::LLT<Eigen::Ref<Matrix>> llt(K);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "covariance block " << block
       << " is singular even after jitter (duplicate inputs with zero nugget?)";
    throw SingularBlockError(block, os.str());
  }
  return false;
}

namespace {

// Per-chunk partial sums. Reduced in chunk order for reproducibility.
struct Partial {
  double logdiag = 0.0;  // sum log L_bb
  double yty = 0.0;
  Vector Xty;
  Matrix XtX;
  // score terms, see accumulate_block
  Vector S1;
  Matrix V;                // p x P
  std::vector<Matrix> Q;   // P matrices of p x p
  Matrix M;                // P x P
  Index jittered = 0;

  void init(Index p, Index P, bool score) {
    Xty = Vector::Zero(p);
    XtX = Matrix::Zero(p, p);
    if (score) {
      S1 = Vector::Zero(P);
      V = Matrix::Zero(p, P);
      Q.assign(P, Matrix::Zero(p, p));
      M = Matrix::Zero(P, P);
    }
  }
  void add(const Partial& o, bool score) {
    logdiag += o.logdiag;
    yty += o.yty;
    Xty += o.Xty;
    XtX += o.XtX;
    jittered += o.jittered;
    if (score) {
      S1 += o.S1;
      V += o.V;
      for (std::size_t k = 0; k < Q.size(); ++k) Q[k] += o.Q[k];
      M += o.M;
    }
  }
};

struct Workspace {
  std::vector<Index> rows;
  Matrix K;
  std::vector<Matrix> dK;
  Vector yB, u, Ly, tmp;
  Matrix FB, LF, S;
};

// One pass over all blocks of the plan. Per block (c(i) first, i last) with
// L = chol(Sigma_B):
//   w = L^{-1} (y_B - F_B beta), u = L^{-T} e_last, s_k = L^{-1} dSigma_k u.
// The block's contribution to the log-likelihood difference is
//   -log L_bb - w_b^2 / 2 - log(2 pi) / 2,
// its score is w_b (s_k . w) - s_kb (w_b^2 + 1) / 2, and its Fisher
// information is s_k . s_l - s_kb s_lb / 2. The quadratic dependence on beta
// is accumulated in closed form so beta can be profiled after the pass.
Partial accumulate(const Points& Z, const Vector& y, const Matrix& F,
                   const ConditioningPlan& plan, const BlockKernel& kernel, bool score) {
  const Index n = plan.size();
  const Index p = F.cols();
  const Index P = score ? kernel.num_free() : 0;
  const std::size_t chunks = chunk_count(static_cast<std::size_t>(n), kChunk);
  std::vector<Partial> partials(chunks);

  parallel_chunks(static_cast<std::size_t>(n), kChunk, [&](std::size_t begin, std::size_t end,
                                                         std::size_t chunk) {
    Partial& acc = partials[chunk];
    acc.init(p, P, score);
    Workspace ws;
    const auto& order = plan.order();
    for (std::size_t pos = begin; pos < end; ++pos) {
      const auto cond = plan.conditioning(static_cast<Index>(pos));
      const Index b = static_cast<Index>(cond.size()) + 1;
      ws.rows.resize(b);
      for (Index j = 0; j + 1 < b; ++j) ws.rows[j] = order[cond[j]];
      ws.rows[b - 1] = order[pos];

      kernel.covariance(Z, ws.rows, ws.K);
      if (score) kernel.gradients(Z, ws.rows, ws.dK);
      if (!factor_block(ws.K, kernel.variance(), static_cast<Index>(pos))) ++acc.jittered;
      const Matrix& Lm = ws.K;
      const auto L = Lm.triangularView<Eigen::Lower>();

      ws.u = Vector::Zero(b);
      ws.u[b - 1] = 1.0;
      L.transpose().solveInPlace(ws.u);
      const double Lbb = ws.K(b - 1, b - 1);
      acc.logdiag += std::log(Lbb);

      ws.yB.resize(b);
      for (Index j = 0; j < b; ++j) ws.yB[j] = y[ws.rows[j]];
      const double a = ws.u.dot(ws.yB);
      acc.yty += a * a;
      Vector A(p);
      if (p > 0) {
        ws.FB.resize(b, p);
        for (Index j = 0; j < b; ++j) ws.FB.row(j) = F.row(ws.rows[j]);
        A = ws.FB.transpose() * ws.u;
        acc.Xty += A * a;
        acc.XtX.selfadjointView<Eigen::Lower>().rankUpdate(A);
      }
      if (!score) continue;

      ws.Ly = ws.yB;
      L.solveInPlace(ws.Ly);
      if (p > 0) {
        ws.LF = ws.FB;
        L.solveInPlace(ws.LF);
      }
      ws.S.resize(b, P);
      for (Index k = 0; k < P; ++k) {
        ws.S.col(k).noalias() = ws.dK[k] * ws.u;
      }
      L.solveInPlace(ws.S);
      const auto tb = ws.S.row(b - 1);
      acc.M.noalias() += ws.S.transpose() * ws.S;
      acc.M.noalias() -= 0.5 * tb.transpose() * tb;
      for (Index k = 0; k < P; ++k) {
        const auto s = ws.S.col(k);
        const double t = tb[k];
        const double c = s.dot(ws.Ly);
        acc.S1[k] += a * c - 0.5 * t * (a * a + 1.0);
        if (p > 0) {
          const Vector C = ws.LF.transpose() * s;
          acc.V.col(k) += a * C + c * A - t * a * A;
          acc.Q[k].noalias() += A * C.transpose();
          acc.Q[k].noalias() -= 0.5 * t * A * A.transpose();
        }
      }
    }
  });

  Partial total;
  total.init(p, P, score);
  for (const auto& part : partials) total.add(part, score);
  total.XtX = total.XtX.selfadjointView<Eigen::Lower>();
  return total;
}

Vector solve_gls(const Matrix& XtX, const Vector& Xty) {
  if (XtX.rows() == 0) return Vector(0);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(XtX);
  const double top = eig.eigenvalues().maxCoeff();
  if (!(eig.eigenvalues().minCoeff() > 1e-12 * std::max(top, 0.0)) || !(top > 0))
    throw Error("mean basis is rank deficient under the covariance model");
  return XtX.ldlt().solve(Xty);
}

void warn_jitter(Index count) {
  if (count > 0) {
    std::ostringstream os;
    os << count << " covariance block(s) needed diagonal jitter to factorize";
    warn(os.str());
  }
}

LikelihoodEvaluation finish(const Partial& t, Index n, bool score) {
  LikelihoodEvaluation ev;
  ev.beta_hat = solve_gls(t.XtX, t.Xty);
  const Vector& b = ev.beta_hat;
  double rss = t.yty;
  if (b.size() > 0) rss += -2.0 * b.dot(t.Xty) + b.dot(t.XtX * b);
  ev.loglik = -t.logdiag - 0.5 * rss - 0.5 * static_cast<double>(n) * kLog2Pi;
  ev.jittered_blocks = t.jittered;
  if (score) {
    const Index P = t.S1.size();
    ev.gradient = t.S1;
    if (b.size() > 0)
      for (Index k = 0; k < P; ++k) ev.gradient[k] += -t.V.col(k).dot(b) + b.dot(t.Q[k] * b);
    ev.fisher_info = 0.5 * (t.M + t.M.transpose());
  }
  warn_jitter(t.jittered);
  return ev;
}

void check_plan(const Dataset& data, const ConditioningPlan& plan) {
  if (plan.size() != data.size()) throw Error("conditioning plan was built for a different number of points");
}

}  // namespace

double vecchia_loglik(const Dataset& data, const ConditioningPlan& plan,
                      const CovarianceConfig& config, const MeanModel& mean) {
  config.validate();
  check_plan(data, plan);
  const Points Z = scale_inputs(data.inputs, config.ranges);
  const Vector r = data.responses - mean.means(data.inputs);
  const Partial t = accumulate(Z, r, Matrix(data.size(), 0), plan, BlockKernel(config), false);
  return finish(t, data.size(), false).loglik;
}

LikelihoodEvaluation vecchia_profile_loglik(const Dataset& data, const ConditioningPlan& plan,
                                            const CovarianceConfig& config, MeanBasis basis) {
  config.validate();
  check_plan(data, plan);
  const Points Z = scale_inputs(data.inputs, config.ranges);
  const Matrix F = design_matrix(basis, data.inputs);
  const Partial t = accumulate(Z, data.responses, F, plan, BlockKernel(config), false);
  return finish(t, data.size(), false);
}

Vector profile_beta(const Dataset& data, const ConditioningPlan& plan,
                    const CovarianceConfig& config, MeanBasis basis) {
  return vecchia_profile_loglik(data, plan, config, basis).beta_hat;
}

LikelihoodEvaluation vecchia_score(const Dataset& data, const ConditioningPlan& plan,
                                   const CovarianceConfig& config, MeanBasis basis,
                                   const ParameterVector& params) {
  config.validate();
  check_plan(data, plan);
  const Points Z = scale_inputs(data.inputs, config.ranges);
  const Matrix F = design_matrix(basis, data.inputs);
  const Partial t = accumulate(Z, data.responses, F, plan, BlockKernel(config, params), true);
  return finish(t, data.size(), true);
}

// ---------------------------------------------------------------------------

SparseInverseCholesky::SparseInverseCholesky(std::vector<Index> order, std::vector<Index> offsets,
                                             std::vector<Index> rows, std::vector<double> values)
    : order_(std::move(order)), offsets_(std::move(offsets)), rows_(std::move(rows)),
      values_(std::move(values)) {}

double SparseInverseCholesky::log_det_precision() const {
  double s = 0.0;
  for (Index i = 0; i < size(); ++i) s += std::log(diagonal(i));
  return 2.0 * s;
}

Matrix SparseInverseCholesky::dense() const {
  Matrix U = Matrix::Zero(size(), size());
  for (Index i = 0; i < size(); ++i) {
    const auto r = column_rows(i);
    const auto v = column_values(i);
    for (std::size_t j = 0; j < r.size(); ++j) U(r[j], i) = v[j];
  }
  return U;
}

Vector SparseInverseCholesky::transpose_times(const Vector& r) const {
  Vector out(size());
  for (Index i = 0; i < size(); ++i) {
    const auto rows = column_rows(i);
    const auto v = column_values(i);
    double s = 0.0;
    for (std::size_t j = 0; j < rows.size(); ++j) s += v[j] * r[order_[rows[j]]];
    out[i] = s;
  }
  return out;
}

SparseInverseCholesky sparse_inverse_cholesky(const ConditioningPlan& plan,
                                              const CovarianceConfig& config, const Points& X) {
  config.validate();
  if (plan.size() != X.rows()) throw Error("conditioning plan was built for a different number of points");
  const Points Z = scale_inputs(X, config.ranges);
  const BlockKernel kernel(config);
  const Index n = plan.size();
  std::vector<Index> offsets(n + 1, 0);
  for (Index i = 0; i < n; ++i)
    offsets[i + 1] = offsets[i] + static_cast<Index>(plan.conditioning(i).size()) + 1;
  std::vector<Index> rows(offsets[n]);
  std::vector<double> values(offsets[n]);
  Index jittered = 0;
  std::vector<Index> idx;
  Matrix K;
  for (Index i = 0; i < n; ++i) {
    const auto cond = plan.conditioning(i);
    const Index b = static_cast<Index>(cond.size()) + 1;
    idx.resize(b);
    for (Index j = 0; j + 1 < b; ++j) idx[j] = plan.order()[cond[j]];
    idx[b - 1] = plan.order()[i];
    kernel.covariance(Z, idx, K);
    if (!factor_block(K, kernel.variance(), i)) ++jittered;
    Vector u = Vector::Zero(b);
    u[b - 1] = 1.0;
    K.triangularView<Eigen::Lower>().transpose().solveInPlace(u);
    for (Index j = 0; j < b; ++j) {
      rows[offsets[i] + j] = (j + 1 < b) ? cond[j] : i;
      values[offsets[i] + j] = u[j];
    }
  }
  warn_jitter(jittered);
  return SparseInverseCholesky(plan.order(), std::move(offsets), std::move(rows), std::move(values));
}

// ---------------------------------------------------------------------------

namespace {

struct DenseFactor {
  Matrix L;
  double logdet;
};

DenseFactor dense_factor(const Dataset& data, const CovarianceConfig& config, Index cap) {
  if (data.size() > cap) {
    std::ostringstream os;
    os << "dense GP likelihood limited to " << cap << " points, got " << data.size();
    throw Error(os.str());
  }
  config.validate();
  DenseFactor f;
  f.L = cov_matrix(data.inputs, config, true);
  factor_block(f.L, config.variance, 0);
  f.L.triangularView<Eigen::StrictlyUpper>().setZero();
  f.logdet = 2.0 * f.L.diagonal().array().log().sum();
  return f;
}

}  // namespace

double exact_gp_loglik(const Dataset& data, const CovarianceConfig& config, const MeanModel& mean,
                       Index cap) {
  const DenseFactor f = dense_factor(data, config, cap);
  Vector r = data.responses - mean.means(data.inputs);
  f.L.triangularView<Eigen::Lower>().solveInPlace(r);
  return -0.5 * f.logdet - 0.5 * r.squaredNorm() - 0.5 * static_cast<double>(data.size()) * kLog2Pi;
}

LikelihoodEvaluation exact_gp_profile_loglik(const Dataset& data, const CovarianceConfig& config,
                                             MeanBasis basis, Index cap) {
  const DenseFactor f = dense_factor(data, config, cap);
  const auto L = f.L.triangularView<Eigen::Lower>();
  Vector wy = L.solve(data.responses);
  Matrix wF = L.solve(design_matrix(basis, data.inputs));
  LikelihoodEvaluation ev;
  ev.beta_hat = solve_gls(wF.transpose() * wF, wF.transpose() * wy);
  if (ev.beta_hat.size() > 0) wy -= wF * ev.beta_hat;
  ev.loglik = -0.5 * f.logdet - 0.5 * wy.squaredNorm() -
              0.5 * static_cast<double>(data.size()) * kLog2Pi;
  return ev;
}

LikelihoodEvaluation exact_gp_score(const Dataset& data, const CovarianceConfig& config,
                                    MeanBasis basis, const ParameterVector& params, Index cap) {
  LikelihoodEvaluation ev = exact_gp_profile_loglik(data, config, basis, cap);
  const DenseFactor f = dense_factor(data, config, cap);
  const Index n = data.size();
  const Matrix Kinv = f.L.triangularView<Eigen::Lower>().transpose().solve(
      f.L.triangularView<Eigen::Lower>().solve(Matrix::Identity(n, n)));
  Vector r = data.responses;
  if (ev.beta_hat.size() > 0) r -= design_matrix(basis, data.inputs) * ev.beta_hat;
  const Vector alpha = Kinv * r;
  const std::vector<Matrix> dK = cov_gradients(data.inputs, config, params);
  const Index P = static_cast<Index>(dK.size());
  std::vector<Matrix> W(P);
  ev.gradient.resize(P);
  for (Index k = 0; k < P; ++k) {
    W[k] = Kinv * dK[k];
    ev.gradient[k] = 0.5 * alpha.dot(dK[k] * alpha) - 0.5 * W[k].trace();
  }
  ev.fisher_info.resize(P, P);
  for (Index k = 0; k < P; ++k)
    for (Index l = 0; l <= k; ++l) {
      const double v = 0.5 * (W[k].array() * W[l].transpose().array()).sum();
      ev.fisher_info(k, l) = v;
      ev.fisher_info(l, k) = v;
    }
  return ev;
}

}  // namespace svecchia
