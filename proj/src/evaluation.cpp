#include "svecchia/evaluation.hpp"

#include "svecchia/design.hpp"
#include "svecchia/geometry.hpp"
#include "svecchia/likelihood.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

namespace svecchia {

namespace {

constexpr double kPi = std::numbers::pi;

void check_unit(std::span<const double> x, std::size_t d, const char* name) {
  if (x.size() != d) {
    std::ostringstream os;
    os << name << " takes " << d << " inputs, got " << x.size();
    throw Error(os.str());
  }
  for (std::size_t l = 0; l < d; ++l)
    if (!(x[l] >= 0.0 && x[l] <= 1.0)) {
      std::ostringstream os;
      os << name << ": input " << l << " = " << x[l] << " lies outside [0, 1]";
      throw Error(os.str());
    }
}

double affine(double u, double lo, double hi) { return lo + u * (hi - lo); }

}  // namespace

double borehole(std::span<const double> x) {
  check_unit(x, 8, "borehole");
  const double rw = affine(x[0], 0.05, 0.15);
  const double r = affine(x[1], 100.0, 50000.0);
  const double Tu = affine(x[2], 63070.0, 115600.0);
  const double Hu = affine(x[3], 990.0, 1110.0);
  const double Tl = affine(x[4], 63.1, 116.0);
  const double Hl = affine(x[5], 700.0, 820.0);
  const double L = affine(x[6], 1120.0, 1680.0);
  const double Kw = affine(x[7], 9855.0, 12045.0);
  const double lr = std::log(r / rw);
  return 2.0 * kPi * Tu * (Hu - Hl) / (lr * (1.0 + 2.0 * L * Tu / (lr * rw * rw * Kw) + Tu / Tl));
}

double robot_arm(std::span<const double> x) {
  check_unit(x, 8, "robot_arm");
  double u = 0.0, v = 0.0, angle = 0.0;
  for (int i = 0; i < 4; ++i) {
    angle += 2.0 * kPi * x[i];
    u += x[4 + i] * std::cos(angle);
    v += x[4 + i] * std::sin(angle);
  }
  return std::sqrt(u * u + v * v);
}

double piston(std::span<const double> x) {
  check_unit(x, 7, "piston");
  const double M = affine(x[0], 30.0, 60.0);
  const double S = affine(x[1], 0.005, 0.020);
  const double V0 = affine(x[2], 0.002, 0.010);
  const double k = affine(x[3], 1000.0, 5000.0);
  const double P0 = affine(x[4], 90000.0, 110000.0);
  const double Ta = affine(x[5], 290.0, 296.0);
  const double T0 = affine(x[6], 340.0, 360.0);
  const double A = P0 * S + 19.62 * M - k * V0 / S;
  const double V = S / (2.0 * k) * (std::sqrt(A * A + 4.0 * k * P0 * V0 * Ta / T0) - A);
  return 2.0 * kPi * std::sqrt(M / (k + S * S * P0 * V0 * Ta / (T0 * V * V)));
}

const std::vector<TestFunction>& test_functions() {
  static const std::vector<TestFunction> fns{
      {"borehole", 8, &borehole}, {"robot_arm", 8, &robot_arm}, {"piston", 7, &piston}};
  return fns;
}

const TestFunction& test_function(const std::string& name) {
  for (const auto& f : test_functions())
    if (f.name == name) return f;
  throw Error("unknown test function '" + name + "' (expected borehole, robot_arm or piston)");
}

Vector evaluate(const TestFunction& fn, const Points& X) {
  if (X.cols() != fn.dim) throw Error(fn.name + " needs " + std::to_string(fn.dim) + " columns");
  Vector y(X.rows());
  for (Index i = 0; i < X.rows(); ++i) y[i] = fn.f(row_span(X, i));
  return y;
}

Points uniform_design(Index n, Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Points X(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index l = 0; l < d; ++l) X(i, l) = u(rng);
  return X;
}

Vector simulate_gp(const Points& X, const CovarianceConfig& config, const MeanModel& mean,
                   std::uint64_t seed, Index m_large) {
  config.validate();
  const Index n = X.rows();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Vector z(n);
  for (Index i = 0; i < n; ++i) z[i] = normal(rng);
  Vector y = mean.means(X);
  if (n <= kDenseCap) {
    Matrix L = cov_matrix(X, config, true);
    factor_block(L, config.variance, 0);
    y += L.triangularView<Eigen::Lower>() * z;
    return y;
  }
  if (m_large < 1) throw Error("simulate_gp: m_large must be >= 1");
  const ConditioningPlan plan = build_plan(X, config, Method::svecchia, m_large);
  const SparseInverseCholesky U = sparse_inverse_cholesky(plan, config, X);
  // U^T (y - mean) = z, solved in plan order.
  Vector e(n);
  for (Index i = 0; i < n; ++i) {
    const auto rows = U.column_rows(i);
    const auto vals = U.column_values(i);
    double s = z[i];
    for (std::size_t t = 0; t + 1 < rows.size(); ++t) s -= vals[t] * e[rows[t]];
    e[i] = s / vals.back();
  }
  for (Index i = 0; i < n; ++i) y[plan.order()[i]] += e[i];
  return y;
}

// ---------------------------------------------------------------------------

double crps_gaussian(double mean, double sd, double y) {
  const double z = (y - mean) / sd;
  const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
  const double cdf = 0.5 * std::erfc(-z / std::numbers::sqrt2);
  return sd * (z * (2.0 * cdf - 1.0) + 2.0 * pdf - 1.0 / std::sqrt(kPi));
}

double interval_score(double lo, double hi, double y, double alpha) {
  double s = hi - lo;
  if (y < lo) s += 2.0 / alpha * (lo - y);
  if (y > hi) s += 2.0 / alpha * (y - hi);
  return s;
}

double log_score(double mean, double variance, double y) {
  const double r = y - mean;
  return 0.5 * std::log(2.0 * kPi * variance) + 0.5 * r * r / variance;
}

double energy_score(const Matrix& samples, const Vector& y) {
  const Index S = samples.rows();
  if (S < 2) throw Error("energy score needs at least two samples");
  if (samples.cols() != y.size()) throw Error("energy score: sample width does not match y");
  double first = 0.0;
  for (Index s = 0; s < S; ++s) first += (samples.row(s).transpose() - y).norm();
  double pairs = 0.0;
  for (Index s = 0; s < S; ++s)
    for (Index t = s + 1; t < S; ++t) pairs += (samples.row(s) - samples.row(t)).norm();
  return first / S - pairs / (static_cast<double>(S) * (S - 1));
}

ScoreReport score_suite(const PredictiveDistribution& dist, const Vector& y_true,
                        const Matrix* joint_samples, double level) {
  const Index n = dist.size();
  if (y_true.size() != n) throw Error("score_suite: truth and prediction lengths differ");
  if (n == 0) throw Error("score_suite: nothing to score");
  ScoreReport rep;
  rep.count = n;
  rep.level = level;
  const auto iv = prediction_intervals(dist, level);
  const Vector var = dist.corrected_variances();
  const double alpha = 1.0 - level;
  double se = 0.0, spe = 0.0, cover = 0.0, width = 0.0, is = 0.0, ls = 0.0, cr = 0.0;
  Index pe_count = 0;
  for (Index i = 0; i < n; ++i) {
    const double mu = dist.means()[i], y = y_true[i];
    const double r = y - mu;
    se += r * r;
    if (y != 0.0) {
      const double p = 100.0 * r / y;
      spe += p * p;
      ++pe_count;
    }
    cover += (y >= iv[i].lo && y <= iv[i].hi) ? 1.0 : 0.0;
    width += iv[i].hi - iv[i].lo;
    is += interval_score(iv[i].lo, iv[i].hi, y, alpha);
    ls += log_score(mu, var[i], y);
    cr += crps_gaussian(mu, std::sqrt(var[i]), y);
  }
  const double dn = static_cast<double>(n);
  rep.rmse = std::sqrt(se / dn);
  rep.rmspe_excluded = n - pe_count;
  rep.rmspe = pe_count > 0 ? std::sqrt(spe / pe_count) : std::numeric_limits<double>::quiet_NaN();
  rep.coverage = 100.0 * cover / dn;
  rep.width = width / dn;
  rep.interval_score = is / dn;
  rep.log_score = ls / dn;
  rep.crps = cr / dn;
  rep.energy = joint_samples ? energy_score(*joint_samples, y_true)
                             : std::numeric_limits<double>::quiet_NaN();
  return rep;
}

// ---------------------------------------------------------------------------

double BenchmarkRow::metric(const std::string& name) const {
  for (const auto& [k, v] : metrics)
    if (k == name) return v;
  return std::numeric_limits<double>::quiet_NaN();
}

void BenchmarkTable::write_csv(std::ostream& os) const {
  std::vector<std::string> names;
  for (const auto& r : rows)
    for (const auto& kv : r.metrics)
      if (std::find(names.begin(), names.end(), kv.first) == names.end()) names.push_back(kv.first);
  os << "protocol,function,method,n,m_est,m_pred,replicate,seed";
  for (const auto& k : names) os << ',' << k;
  os << '\n';
  os.precision(10);
  for (const auto& r : rows) {
    os << r.protocol << ',' << r.function << ',' << r.method << ',' << r.n << ',' << r.m_est << ','
       << r.m_pred << ',' << r.replicate << ',' << r.seed;
    for (const auto& k : names) {
      os << ',';
      const double v = r.metric(k);
      if (!std::isnan(v)) os << v;
    }
    os << '\n';
  }
}

double BenchmarkTable::mean(const std::string& metric, const std::string& method, Index n,
                            Index m, const std::string& function) const {
  double s = 0.0;
  Index c = 0;
  for (const auto& r : rows) {
    if (r.method != method || (n >= 0 && r.n != n) || (m >= 0 && r.m_est != m)) continue;
    if (!function.empty() && r.function != function) continue;
    const double v = r.metric(metric);
    if (std::isnan(v)) continue;
    s += v;
    ++c;
  }
  return c > 0 ? s / c : std::numeric_limits<double>::quiet_NaN();
}

const std::vector<std::string>& benchmark_protocols() {
  static const std::vector<std::string> names{"matern_sim", "borehole_curves", "testfun_suite",
                                              "noise_recovery", "piston_uq"};
  return names;
}

BenchmarkOptions resolve_benchmark(const BenchmarkOptions& options) {
  BenchmarkOptions o = options;
  const auto set = [](auto& field, auto value) {
    if (field.empty()) field = value;
  };
  const auto set_reps = [&](Index r) {
    if (o.replicates <= 0) o.replicates = r;
  };
  const auto set_test = [&](Index t) {
    if (o.n_test < 0) o.n_test = t;
  };
  if (o.protocol == "matern_sim") {
    set(o.n, std::vector<Index>{2000});
    set(o.m, std::vector<Index>{10, 30});
    set(o.methods, std::vector<Method>{Method::svecchia, Method::vecchia, Method::lowrank});
    set_reps(10);
    set_test(0);
  } else if (o.protocol == "borehole_curves") {
    set(o.n, std::vector<Index>{100, 400});
    set(o.m, std::vector<Index>{50});
    set(o.methods, std::vector<Method>{Method::svecchia, Method::exact});
    set(o.functions, std::vector<std::string>{"borehole"});
    set_reps(10);
    set_test(2000);
    if (o.m_pred <= 0) o.m_pred = 100;
  } else if (o.protocol == "testfun_suite") {
    set(o.n, std::vector<Index>{2000});
    set(o.m, std::vector<Index>{30});
    set(o.methods, std::vector<Method>{Method::svecchia, Method::vecchia, Method::lowrank});
    set(o.functions, std::vector<std::string>{"borehole", "robot_arm", "piston"});
    set_reps(10);
    set_test(2000);
  } else if (o.protocol == "noise_recovery") {
    set(o.n, std::vector<Index>{10000});
    set(o.m, std::vector<Index>{30});
    set(o.methods, std::vector<Method>{Method::svecchia});
    set(o.functions, std::vector<std::string>{"piston"});
    set_reps(10);
    set_test(0);
  } else if (o.protocol == "piston_uq") {
    set(o.n, std::vector<Index>{20000});
    set(o.m, std::vector<Index>{30});
    set(o.methods, std::vector<Method>{Method::svecchia, Method::vecchia});
    set(o.functions, std::vector<std::string>{"piston"});
    set_reps(1);
    set_test(5000);
    if (o.m_pred <= 0) o.m_pred = kDefaultMPred;
  } else {
    std::string names;
    for (const auto& p : benchmark_protocols()) names += (names.empty() ? "" : ", ") + p;
    throw Error("unknown benchmark protocol '" + o.protocol + "' (known: " + names + ")");
  }
  return o;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t replicate_seed(std::uint64_t base, Index r) {
  return base + 1000003ULL * static_cast<std::uint64_t>(r);
}

Index m_pred_for(const BenchmarkOptions& o, Index m) { return o.m_pred > 0 ? o.m_pred : 2 * m; }

struct Problem {
  Dataset train;
  Points X_test;
  Vector y_test;
};

Problem make_problem(const TestFunction& fn, Index n, Index n_test, std::uint64_t seed,
                     double noise_sd) {
  Problem p;
  p.train.inputs = lhs(n, fn.dim, seed);
  p.train.responses = evaluate(fn, p.train.inputs);
  if (n_test > 0) {
    p.X_test = uniform_design(n_test, fn.dim, seed + 1);
    p.y_test = evaluate(fn, p.X_test);
  }
  if (noise_sd > 0) {
    std::mt19937_64 rng(seed + 2);
    std::normal_distribution<double> g(0.0, noise_sd);
    for (Index i = 0; i < n; ++i) p.train.responses[i] += g(rng);
    for (Index i = 0; i < n_test; ++i) p.y_test[i] += g(rng);
  }
  return p;
}

EstimationConfig estimation_for(const BenchmarkOptions& o, Method method, Index m,
                                std::uint64_t seed, bool nugget) {
  EstimationConfig est;
  est.method = method;
  est.m_est = m;
  est.n_est = std::max(o.n_est, m + 1);
  est.subsample_seed = seed + 3;
  est.estimate_nugget = nugget;
  return est;
}

BenchmarkRow base_row(const BenchmarkOptions& o, const std::string& fn, Method method, Index n,
                      Index m, Index m_pred, Index r, std::uint64_t seed) {
  BenchmarkRow row;
  row.protocol = o.protocol;
  row.function = fn;
  row.method = to_string(method);
  row.n = n;
  row.m_est = m;
  row.m_pred = m_pred;
  row.replicate = r;
  row.seed = seed;
  return row;
}

// Fit, predict and score one method on one problem.
void fit_and_score(const BenchmarkOptions& o, const Problem& p, Method method, Index m,
                   Index m_pred, std::uint64_t seed, bool nugget, bool vcf, bool full_scores,
                   MeanBasis basis, BenchmarkRow& row) {
  const EstimationConfig est = estimation_for(o, method, m, seed, nugget);
  auto t0 = Clock::now();
  FitResult f = fit(p.train, est, default_initial(p.train, nugget), basis);
  if (vcf) f.variance_correction = variance_correction(f, 0.9, seed + 4, m_pred);
  row.metrics.emplace_back("fit_seconds", seconds_since(t0));
  row.metrics.emplace_back("iterations", static_cast<double>(f.iterations));
  row.metrics.emplace_back("variance", f.config.variance);
  row.metrics.emplace_back("nugget", f.config.nugget);
  row.metrics.emplace_back("tau_hat", std::sqrt(f.config.nugget));
  row.metrics.emplace_back("eliminated", static_cast<double>(f.eliminated.size()));
  if (vcf) row.metrics.emplace_back("variance_correction", f.correction());
  if (p.X_test.rows() == 0) return;
  t0 = Clock::now();
  const PredictiveDistribution dist = predict(f, p.X_test, m_pred);
  row.metrics.emplace_back("predict_seconds", seconds_since(t0));
  if (!full_scores) {
    row.metrics.emplace_back("rmse", std::sqrt((dist.means() - p.y_test).squaredNorm() /
                                               static_cast<double>(p.y_test.size())));
    return;
  }
  Matrix samples;
  if (o.energy_samples >= 2) samples = sample_joint(dist, o.energy_samples, seed + 5);
  const ScoreReport s =
      score_suite(dist, p.y_test, o.energy_samples >= 2 ? &samples : nullptr, 0.95);
  row.metrics.emplace_back("rmse", s.rmse);
  row.metrics.emplace_back("rmspe", s.rmspe);
  row.metrics.emplace_back("coverage", s.coverage);
  row.metrics.emplace_back("width", s.width);
  row.metrics.emplace_back("interval_score", s.interval_score);
  row.metrics.emplace_back("log_score", s.log_score);
  row.metrics.emplace_back("crps", s.crps);
  row.metrics.emplace_back("energy", s.energy);
}

void emit(const BenchmarkOptions& o, BenchmarkTable& t, BenchmarkRow row) {
  if (o.progress) {
    std::ostringstream os;
    os << row.protocol << ' ' << row.function << ' ' << row.method << " n=" << row.n
       << " m=" << row.m_est << " rep=" << row.replicate;
    for (const auto& [k, v] : row.metrics) os << ' ' << k << '=' << v;
    o.progress(os.str());
  }
  t.rows.push_back(std::move(row));
}

CovarianceConfig matern_sim_truth() {
  CovarianceConfig c;
  c.smoothness = 3.5;
  c.variance = 1.0;
  c.ranges = {0.05, 0.05, 5, 5, 5, 5, 5, 5, 5, 5};
  c.nugget = 0.0;
  return c;
}

void run_matern_sim(const BenchmarkOptions& o, BenchmarkTable& t) {
  const CovarianceConfig truth = matern_sim_truth();
  const Index d = truth.dim();
  for (Index n : o.n)
    for (Index r = 0; r < o.replicates; ++r) {
      const std::uint64_t seed = replicate_seed(o.seed, r);
      Points X_all(n + o.n_test, d);
      X_all.topRows(n) = lhs(n, d, seed);
      if (o.n_test > 0) X_all.bottomRows(o.n_test) = uniform_design(o.n_test, d, seed + 1);
      const Vector y_all = simulate_gp(X_all, truth, MeanModel{}, seed + 2);
      Problem p;
      p.train = Dataset{X_all.topRows(n), y_all.head(n)};
      if (o.n_test > 0) {
        p.X_test = X_all.bottomRows(o.n_test);
        p.y_test = y_all.tail(o.n_test);
      }
      const double exact =
          n <= kDenseCap ? exact_gp_loglik(p.train, truth, MeanModel{})
                         : std::numeric_limits<double>::quiet_NaN();
      for (Method method : o.methods)
        for (Index m : o.m) {
          const Index mp = m_pred_for(o, m);
          BenchmarkRow row = base_row(o, "matern", method, n, m, mp, r, seed);
          if (method != Method::exact) {
            const ConditioningPlan plan = build_plan(p.train.inputs, truth, method, m);
            const double approx = vecchia_loglik(p.train, plan, truth, MeanModel{});
            row.metrics.emplace_back("loglik", approx);
            row.metrics.emplace_back("dls", dls(exact, approx));
          } else {
            row.metrics.emplace_back("loglik", exact);
            row.metrics.emplace_back("dls", 0.0);
          }
          if (o.n_test > 0)
            fit_and_score(o, p, method, m, mp, seed, false, false, false, MeanBasis::none, row);
          emit(o, t, std::move(row));
        }
    }
}

void run_function_protocol(const BenchmarkOptions& o, BenchmarkTable& t, double noise_sd,
                           bool nugget, bool vcf, bool full_scores) {
  for (const auto& name : o.functions) {
    const TestFunction& fn = test_function(name);
    for (Index n : o.n)
      for (Index r = 0; r < o.replicates; ++r) {
        const std::uint64_t seed = replicate_seed(o.seed, r);
        const Problem p = make_problem(fn, n, o.n_test, seed, noise_sd);
        for (Method method : o.methods)
          for (Index m : o.m) {
            const Index mp = m_pred_for(o, m);
            BenchmarkRow row = base_row(o, name, method, n, m, mp, r, seed);
            fit_and_score(o, p, method, m, mp, seed, nugget, vcf, full_scores,
                          MeanBasis::constant, row);
            emit(o, t, std::move(row));
          }
      }
  }
}

}  // namespace

BenchmarkTable run_benchmark(const BenchmarkOptions& options) {
  BenchmarkTable t;
  t.options = resolve_benchmark(options);
  t.protocol = t.options.protocol;
  const BenchmarkOptions& o = t.options;
  if (o.protocol == "matern_sim") {
    run_matern_sim(o, t);
  } else if (o.protocol == "borehole_curves" || o.protocol == "testfun_suite") {
    run_function_protocol(o, t, 0.0, false, false, false);
  } else if (o.protocol == "noise_recovery") {
    run_function_protocol(o, t, 0.02, true, false, false);
  } else if (o.protocol == "piston_uq") {
    run_function_protocol(o, t, 0.0, false, true, true);
  }
  return t;
}

}  // namespace svecchia
