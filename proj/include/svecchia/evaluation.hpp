#pragma once

#include "svecchia/covariance.hpp"
#include "svecchia/estimation.hpp"
#include "svecchia/prediction.hpp"
#include "svecchia/types.hpp"

#include <cstdint>
#include <functional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace svecchia {

// ---------------------------------------------------------------------------
// Test functions on [0,1]^d, mapped affinely to their physical input ranges.

double borehole(std::span<const double> x);   // d = 8
double robot_arm(std::span<const double> x);  // d = 8
double piston(std::span<const double> x);     // d = 7

struct TestFunction {
  std::string name;
  Index dim;
  double (*f)(std::span<const double>);
};

const std::vector<TestFunction>& test_functions();
const TestFunction& test_function(const std::string& name);

/// One response per row of X.
Vector evaluate(const TestFunction& fn, const Points& X);

/// Uniform random points in [0,1]^d.
Points uniform_design(Index n, Index d, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Simulation

/// A draw from N(mean, K). Dense Cholesky up to kDenseCap points, otherwise
/// sequential conditional sampling under a scaled nearest-neighbor plan
/// with m_large neighbors.
Vector simulate_gp(const Points& X, const CovarianceConfig& config, const MeanModel& mean,
                   std::uint64_t seed, Index m_large = 100);

/// log p(y) - log p_hat(y).
inline double dls(double exact_loglik, double approx_loglik) { return exact_loglik - approx_loglik; }

// ---------------------------------------------------------------------------
// Scores

double crps_gaussian(double mean, double sd, double y);
/// Interval score at miscoverage alpha for the interval [lo, hi].
double interval_score(double lo, double hi, double y, double alpha);
/// -log N(y; mean, variance).
double log_score(double mean, double variance, double y);
/// Monte Carlo energy score of a sample (rows) against the vector y, with
/// the pair term as a U-statistic.
double energy_score(const Matrix& samples, const Vector& y);

struct ScoreReport {
  Index count = 0;
  double rmse = 0.0;
  double rmspe = 0.0;
  Index rmspe_excluded = 0;
  double coverage = 0.0;  // percent
  double width = 0.0;
  double interval_score = 0.0;
  double log_score = 0.0;
  double crps = 0.0;
  double energy = 0.0;    // NaN without samples
  double level = 0.95;
};

/// Scores use the corrected variances of `dist`. Pass joint samples (rows)
/// to get the energy score.
ScoreReport score_suite(const PredictiveDistribution& dist, const Vector& y_true,
                        const Matrix* joint_samples = nullptr, double level = 0.95);

// ---------------------------------------------------------------------------
// Benchmarks

struct BenchmarkOptions {
  std::string protocol;
  // Empty or zero fields take the protocol's defaults.
  std::vector<Index> n;
  std::vector<Index> m;
  std::vector<Method> methods;
  std::vector<std::string> functions;
  Index replicates = 0;
  Index n_test = -1;
  Index m_pred = 0;
  Index n_est = 5000;
  Index energy_samples = 100;
  std::uint64_t seed = 1;
  /// Called after every row, e.g. for progress output.
  std::function<void(const std::string&)> progress;
};

struct BenchmarkRow {
  std::string protocol;
  std::string function;
  std::string method;
  Index n = 0;
  Index m_est = 0;
  Index m_pred = 0;
  Index replicate = 0;
  std::uint64_t seed = 0;
  std::vector<std::pair<std::string, double>> metrics;

  double metric(const std::string& name) const;
};

struct BenchmarkTable {
  std::string protocol;
  BenchmarkOptions options;  // with defaults resolved
  std::vector<BenchmarkRow> rows;

  void write_csv(std::ostream& os) const;
  /// Mean of a metric over rows matching method / n / m (n, m < 0: any).
  double mean(const std::string& metric, const std::string& method, Index n = -1,
              Index m = -1, const std::string& function = "") const;
};

const std::vector<std::string>& benchmark_protocols();
/// Fills protocol defaults; throws for unknown protocols.
BenchmarkOptions resolve_benchmark(const BenchmarkOptions& options);
BenchmarkTable run_benchmark(const BenchmarkOptions& options);

}  // namespace svecchia
