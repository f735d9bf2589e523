#pragma once

// Shared generators and brute-force oracles for the unit tests. Nothing in
// here calls into the code paths it is used to check.

#include "svecchia/covariance.hpp"
#include "svecchia/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <vector>

namespace testutil {

using namespace svecchia;

inline Points uniform_points(Index n, Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Points X(n, d);
  for (Index i = 0; i < n; ++i)
    for (Index l = 0; l < d; ++l) X(i, l) = u(rng);
  return X;
}

inline Vector normal_vector(Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Vector v(n);
  for (Index i = 0; i < n; ++i) v[i] = g(rng);
  return v;
}

inline double sqdist(const Points& Z, Index a, Index b) {
  double s = 0.0;
  for (Index l = 0; l < Z.cols(); ++l) {
    const double t = Z(a, l) - Z(b, l);
    s += t * t;
  }
  return s;
}

/// General-smoothness Matern correlation via the modified Bessel function.
inline double matern_bessel(double q, double nu) {
  if (q == 0.0) return 1.0;
  return std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(q, nu) * std::cyl_bessel_k(nu, q);
}

/// Dense covariance written out entry by entry from the Bessel oracle.
inline Matrix bessel_cov(const Points& X, const CovarianceConfig& c, bool nugget) {
  const Index n = X.rows();
  Matrix K(n, n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) {
      double s = 0.0;
      for (Index l = 0; l < X.cols(); ++l) {
        if (std::isinf(c.ranges[l])) continue;
        const double t = (X(i, l) - X(j, l)) / c.ranges[l];
        s += t * t;
      }
      K(i, j) = c.variance * matern_bessel(std::sqrt(s), c.smoothness) +
                ((nugget && i == j) ? c.nugget : 0.0);
    }
  return K;
}

/// O(n^2) maximin with the same seed and tie rules as the library.
inline std::vector<Index> brute_maximin(const Points& Z) {
  const Index n = Z.rows();
  Eigen::RowVectorXd mean = Z.colwise().mean();
  Index seed = 0;
  double best = std::numeric_limits<double>::infinity();
  for (Index i = 0; i < n; ++i) {
    double s = 0.0;
    for (Index l = 0; l < Z.cols(); ++l) s += (Z(i, l) - mean[l]) * (Z(i, l) - mean[l]);
    if (s < best) {
      best = s;
      seed = i;
    }
  }
  std::vector<Index> order{seed};
  std::vector<double> md(n, std::numeric_limits<double>::infinity());
  std::vector<char> used(n, 0);
  used[seed] = 1;
  for (Index q = 0; q < n; ++q) md[q] = sqdist(Z, q, seed);
  while (static_cast<Index>(order.size()) < n) {
    Index pick = -1;
    for (Index q = 0; q < n; ++q)
      if (!used[q] && (pick < 0 || md[q] > md[pick])) pick = q;
    used[pick] = 1;
    order.push_back(pick);
    for (Index q = 0; q < n; ++q) md[q] = std::min(md[q], sqdist(Z, q, pick));
  }
  return order;
}

/// Positions of the k nearest earlier-ordered points (ties: smaller original index).
inline std::vector<Index> brute_nn(const Points& Z, const std::vector<Index>& order, Index pos,
                                   Index k) {
  std::vector<Index> cand(pos);
  std::iota(cand.begin(), cand.end(), Index{0});
  std::sort(cand.begin(), cand.end(), [&](Index a, Index b) {
    const double da = sqdist(Z, order[pos], order[a]);
    const double db = sqdist(Z, order[pos], order[b]);
    return da < db || (da == db && order[a] < order[b]);
  });
  cand.resize(std::min<Index>(k, pos));
  std::sort(cand.begin(), cand.end());
  return cand;
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(std::abs(b), 1e-300); }

inline double dense_gauss_logpdf(const Vector& r, const Matrix& K) {
  Eigen::LLT<Matrix> llt(K);
  const Vector w = llt.matrixL().solve(r);
  return -0.5 * w.squaredNorm() - llt.matrixLLT().diagonal().array().log().sum() -
         0.5 * r.size() * std::log(2.0 * M_PI);
}

}  // namespace testutil
