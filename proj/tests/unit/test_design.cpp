#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "svecchia/design.hpp"
#include "svecchia/geometry.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

using namespace svecchia;
using namespace testutil;

namespace {

// Greedy selection from `cand` maximizing the minimum distance to everything
// chosen so far, starting from `fixed`. Ties to the smaller index.
std::vector<Index> brute_after(const Points& fixed, const Points& cand, Index count) {
  const Index N = cand.rows();
  std::vector<double> md(N, std::numeric_limits<double>::infinity());
  for (Index q = 0; q < N; ++q)
    for (Index i = 0; i < fixed.rows(); ++i)
      md[q] = std::min(md[q], (cand.row(q) - fixed.row(i)).squaredNorm());
  std::vector<char> used(N, 0);
  std::vector<Index> out;
  while (static_cast<Index>(out.size()) < count) {
    Index pick = -1;
    for (Index q = 0; q < N; ++q)
      if (!used[q] && (pick < 0 || md[q] > md[pick])) pick = q;
    used[pick] = 1;
    out.push_back(pick);
    for (Index q = 0; q < N; ++q) md[q] = std::min(md[q], (cand.row(q) - cand.row(pick)).squaredNorm());
  }
  return out;
}

double max_gap(Vector x) {
  std::sort(x.begin(), x.end());
  double g = std::max(x[0], 1.0 - x[x.size() - 1]);
  for (Index i = 1; i < x.size(); ++i) g = std::max(g, x[i] - x[i - 1]);
  return g;
}

EstimationConfig quick_est() {
  EstimationConfig est;
  est.max_iterations = 30;
  return est;
}

}  // namespace

TEST_CASE("lhs strata") {
  const Points one = lhs(1, 3, 5);
  REQUIRE(one.rows() == 1);
  CHECK((one.array() >= 0).all());
  CHECK((one.array() < 1).all());
  for (Index n : {2, 7, 100, 1000}) {
    const Points X = lhs(n, 4, 9);
    for (Index l = 0; l < 4; ++l) {
      std::vector<Index> bins;
      for (Index i = 0; i < n; ++i) bins.push_back(static_cast<Index>(std::floor(X(i, l) * n)));
      std::sort(bins.begin(), bins.end());
      for (Index k = 0; k < n; ++k) CHECK(bins[k] == k);
    }
  }
  const Points X = lhs(1000, 5, 3);
  const double tol = 3.0 * 3.0 / std::sqrt(12.0 * 1000);
  for (Index l = 0; l < 5; ++l) CHECK(std::abs(X.col(l).mean() - 0.5) < tol);
  CHECK(lhs(50, 3, 11) == lhs(50, 3, 11));
  CHECK(lhs(50, 3, 11) != lhs(50, 3, 12));
  CHECK_THROWS_AS(lhs(0, 3, 1), Error);
  CHECK_THROWS_AS(lhs(3, 0, 1), Error);
}

TEST_CASE("design config validation") {
  DesignConfig c;
  c.n = 100;
  CHECK(c.n_first() == 10);
  CHECK_NOTHROW(c.validate(8));
  CHECK_THROWS_WITH_AS(c.validate(9), doctest::Contains("d + 2 = 11"), Error);
  c.oversample_factor = 0.5;
  CHECK_THROWS_AS(c.validate(2), Error);
  c.oversample_factor = 20;
  c.first_stage_fraction = 1.0;
  CHECK_THROWS_AS(c.validate(2), Error);
  c.first_stage_fraction = 0.0;
  CHECK_THROWS_AS(c.validate(2), Error);
}

TEST_CASE("scaled selection with equal ranges is unscaled maximin") {
  const Points fixed = uniform_points(10, 3, 1);
  const Points pool = uniform_points(400, 3, 2);
  const std::vector<double> r(3, 0.37);
  const auto scaled = maximin_order_after(scale_inputs(fixed, r), scale_inputs(pool, r), 40);
  CHECK(scaled == maximin_order_after(fixed, pool, 40));
  CHECK(scaled == brute_after(fixed, pool, 40));
}

TEST_CASE("two-stage design structure") {
  DesignConfig cfg;
  cfg.n = 120;
  cfg.seed = 4;
  const auto f = [](std::span<const double> x) { return std::sin(6.0 * x[0]) + x[1] * x[1]; };
  const DesignResult r = two_stage_design(cfg, 2, f, quick_est());
  REQUIRE(r.data.size() == 120);
  REQUIRE(r.n_first == 12);
  CHECK(r.data.inputs.topRows(12) == lhs(12, 2, 4));
  const Points pool = lhs(2400, 2, 5);
  const Points Z1 = scale_inputs(r.data.inputs.topRows(12), r.first_fit.config.ranges);
  const Points Zp = scale_inputs(pool, r.first_fit.config.ranges);
  const auto expect = brute_after(Z1, Zp, 108);
  for (Index k = 0; k < 108; ++k) CHECK(r.data.inputs.row(12 + k) == pool.row(expect[k]));
  std::set<Index> distinct(expect.begin(), expect.end());
  CHECK(distinct.size() == 108);
  for (Index i = 0; i < 120; ++i)
    CHECK(r.data.responses[i] == f(std::span<const double>(r.data.inputs.row(i).data(), 2)) );
  CHECK(r.fit.training.size() == 120);
  const DesignResult again = two_stage_design(cfg, 2, f, quick_est());
  CHECK(again.data.inputs == r.data.inputs);
  CHECK(again.fit.config.ranges == r.fit.config.ranges);
}

TEST_CASE("two-stage design refines the relevant dimension") {
  DesignConfig cfg;
  cfg.n = 200;
  cfg.first_stage_fraction = 0.15;
  cfg.seed = 8;
  const auto f = [](std::span<const double> x) { return std::sin(12.0 * x[0]); };
  const DesignResult r = two_stage_design(cfg, 2, f, quick_est());
  const auto& lam = r.first_fit.config.ranges;
  CAPTURE(lam[0]);
  CAPTURE(lam[1]);
  REQUIRE(lam[1] > 10.0 * lam[0]);
  const Index n1 = r.n_first, n2 = cfg.n - n1;
  const Points pool = lhs(4000, 2, 9);
  const auto plain = maximin_order_after(r.data.inputs.topRows(n1), pool, n2);
  Points unscaled(cfg.n, 2);
  unscaled.topRows(n1) = r.data.inputs.topRows(n1);
  for (Index k = 0; k < n2; ++k) unscaled.row(n1 + k) = pool.row(plain[k]);
  CHECK(max_gap(r.data.inputs.col(0)) < max_gap(unscaled.col(0)));
}

TEST_CASE("evaluator failures name the point") {
  DesignConfig cfg;
  cfg.n = 40;
  int calls = 0;
  const auto bad = [&](std::span<const double> x) {
    if (++calls == 7) throw std::runtime_error("simulator crashed");
    return x[0];
  };
  CHECK_THROWS_WITH_AS(two_stage_design(cfg, 2, bad, quick_est()),
                       doctest::Contains("design point 6"), Error);
  const auto nan = [](std::span<const double>) { return std::nan(""); };
  CHECK_THROWS_WITH_AS(evaluate_rows(nan, uniform_points(3, 2, 1), 5),
                       doctest::Contains("design point 5"), Error);
}
