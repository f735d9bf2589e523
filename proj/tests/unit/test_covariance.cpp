#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "svecchia/covariance.hpp"
#include "svecchia/diagnostics.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace svecchia;
using namespace testutil;

TEST_CASE("scaled_distance examples") {
  const std::vector<double> a{0, 0}, b{1, 1};
  CHECK(scaled_distance(a, b, std::vector<double>{1, 1}) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(scaled_distance(a, b, std::vector<double>{0.5, 2}) == doctest::Approx(std::sqrt(4.25)).epsilon(1e-15));
  CHECK(scaled_distance(std::vector<double>{0, 3}, std::vector<double>{1, 7},
                        std::vector<double>{1, kInfiniteRange}) == 1.0);
  CHECK(scaled_distance(a, a, std::vector<double>{0.3, 0.7}) == 0.0);
  CHECK(scaled_distance(a, b, std::vector<double>{0.3, 0.7}) ==
        scaled_distance(b, a, std::vector<double>{0.3, 0.7}));
}

TEST_CASE("scaled_distance errors") {
  const std::vector<double> a{0, 0}, b{1, 1, 1};
  CHECK_THROWS_AS(scaled_distance(a, b, std::vector<double>{1, 1}), Error);
  CHECK_THROWS_AS(scaled_distance(std::vector<double>{0, NAN}, a, std::vector<double>{1, 1}), Error);
}

TEST_CASE("matern closed forms") {
  for (double nu : {0.5, 1.5, 2.5, 3.5, 4.5}) CHECK(matern(0.0, nu, 2.5) == 2.5);
  CHECK(matern(1.0, 0.5, 1.0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));
  // Frozen high-precision Bessel values (mpmath, 30 digits).
  CHECK(matern_correlation(1.0, 1.5) == doctest::Approx(0.73575888234288469349).epsilon(1e-13));
  CHECK(matern_correlation(2.7, 3.5) == doctest::Approx(0.53281874610328404714).epsilon(1e-13));
  CHECK(matern_correlation(0.3, 4.5) == doctest::Approx(0.9936002139427337369).epsilon(1e-13));
  CHECK(matern_correlation(1.0, 2.5) == doctest::Approx(0.85838536273336547573).epsilon(1e-13));
  // And against the Bessel oracle on a grid.
  for (double nu : {0.5, 1.5, 2.5, 3.5, 4.5})
    for (double q = 0.05; q < 8.0; q += 0.37)
      CHECK(matern_correlation(q, nu) == doctest::Approx(matern_bessel(q, nu)).epsilon(1e-11));
}

TEST_CASE("matern rejects unsupported smoothness") {
  try {
    matern_correlation(1.0, 1.0);
    FAIL("expected throw");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("0.5, 1.5, 2.5, 3.5, 4.5") != std::string::npos);
  }
}

TEST_CASE("matern derivative over q matches finite differences") {
  for (double nu : {0.5, 1.5, 2.5, 3.5, 4.5})
    for (double q : {0.1, 0.7, 1.9, 4.0}) {
      const double h = 1e-6;
      const double fd = (matern_correlation(q + h, nu) - matern_correlation(q - h, nu)) / (2 * h);
      CHECK(matern_derivative_over_q(q, nu) * q == doctest::Approx(fd).epsilon(1e-7));
    }
}

TEST_CASE("cov_matrix examples") {
  Points X1(1, 2);
  X1 << 0.2, 0.4;
  CovarianceConfig c{3.5, 3.0, {1.0, 1.0}, 0.0};
  CHECK(cov_matrix(X1, c, true)(0, 0) == 3.0);

  Points X2(2, 2);
  X2 << 0, 0, 1, 0;
  CovarianceConfig e{0.5, 1.0, {1.0, 1.0}, 0.0};
  const Matrix K = cov_matrix(X2, e, true);
  CHECK(K(0, 1) == doctest::Approx(std::exp(-1.0)).epsilon(1e-15));

  const Points X5 = uniform_points(5, 3, 11);
  CovarianceConfig m{3.5, 1.0, {0.4, 0.7, 1.3}, 0.0};
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cov_matrix(X5, m, true));
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("cov_matrix matches Bessel-based dense oracle") {
  const Points X = uniform_points(12, 3, 5);
  for (double nu : {0.5, 1.5, 2.5, 3.5, 4.5}) {
    CovarianceConfig c{nu, 1.7, {0.3, 1.1, kInfiniteRange}, 0.05};
    const Matrix K = cov_matrix(X, c, true);
    const Matrix R = bessel_cov(X, c, true);
    CHECK((K - R).cwiseAbs().maxCoeff() < 1e-11);
  }
}

TEST_CASE("cov_matrix warns on duplicate rows without nugget") {
  Points X(3, 2);
  X << 0.1, 0.2, 0.5, 0.5, 0.1, 0.2;
  WarningCapture cap;
  cov_matrix(X, CovarianceConfig{3.5, 1.0, {1, 1}, 0.0}, true);
  CHECK(cap.contains("duplicate"));
}

TEST_CASE("cov_matrix invariants") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Points X = uniform_points(15, 4, 100 + seed);
    CovarianceConfig c{2.5, 1.3, {0.2 + 0.1 * seed, 0.5, 2.0, 0.9}, 0.01};
    const Matrix K = cov_matrix(X, c, true);
    CHECK(K == K.transpose());

    // Scaling consistency: divide columns and use unit ranges.
    Points Xs = X;
    for (Index l = 0; l < 4; ++l) Xs.col(l) /= c.ranges[l];
    CovarianceConfig unit = c;
    unit.ranges.assign(4, 1.0);
    const Matrix Ks = cov_matrix(Xs, unit, true);
    CHECK(((K - Ks).cwiseAbs().array() <= 1e-12 * K.cwiseAbs().array().max(1e-300)).all());

    // Dimension elimination equals deleting the column.
    CovarianceConfig inf = c;
    inf.ranges[2] = kInfiniteRange;
    Points Xd(X.rows(), 3);
    Xd << X.col(0), X.col(1), X.col(3);
    CovarianceConfig del{c.smoothness, c.variance, {c.ranges[0], c.ranges[1], c.ranges[3]}, c.nugget};
    CHECK(cov_matrix(X, inf, true) == cov_matrix(Xd, del, true));
  }
}

TEST_CASE("cov_gradients match central finite differences") {
  const Points X = uniform_points(10, 3, 42);
  for (double nu : {0.5, 1.5, 3.5, 4.5}) {
    CovarianceConfig c{nu, 1.4, {0.35, 0.8, 1.6}, 0.02};
    ParameterVector theta(c, false);
    const auto dK = cov_gradients(X, c, theta);
    const auto free = theta.free_indices();
    REQUIRE(dK.size() == free.size());
    for (std::size_t k = 0; k < free.size(); ++k) {
      const double h = 1e-6;
      Vector tp = theta.free_values(), tm = tp;
      tp[k] += h;
      tm[k] -= h;
      const Matrix Kp = cov_matrix(X, theta.with_free(tp).to_config(nu), true);
      const Matrix Km = cov_matrix(X, theta.with_free(tm).to_config(nu), true);
      const Matrix fd = (Kp - Km) / (2 * h);
      const double err = (dK[k] - fd).norm() / std::max(fd.norm(), 1e-300);
      CHECK(err < 1e-5);
    }
    // Variance and nugget derivatives in closed form.
    const Matrix K = cov_matrix(X, c, true);
    CHECK((dK[0] - (K - c.nugget * Matrix::Identity(10, 10))).norm() < 1e-14);
    CHECK((dK.back() - c.nugget * Matrix::Identity(10, 10)).norm() == 0.0);
  }
}

TEST_CASE("parameter vector round trip and fixed entries") {
  CovarianceConfig c{3.5, 2.0, {0.5, kInfiniteRange, 3.0}, 0.0};
  ParameterVector t(c, false);
  CHECK(t.is_fixed(t.nugget_index()));    // log 0
  CHECK(t.is_fixed(ParameterVector::range_index(1)));
  CHECK(t.num_free() == 3);
  const CovarianceConfig back = t.to_config(3.5);
  CHECK(back.variance == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(back.ranges[1] == kInfiniteRange);
  CHECK(back.nugget == 0.0);
  Vector moved = t.free_values().array() + 0.5;
  const ParameterVector u = t.with_free(moved);
  CHECK(u.values()[t.nugget_index()] == t.values()[t.nugget_index()]);
  CHECK(u.values()[2] == t.values()[2]);
}

TEST_CASE("mean model") {
  MeanModel m{MeanBasis::constant, Vector::Constant(1, 2.0)};
  CHECK(m.features(std::vector<double>{0.3, 0.4}).size() == 1);
  CHECK(m.features(std::vector<double>{0.3, 0.4})[0] == 1.0);
  CHECK(basis_size(MeanBasis::linear, 4) == 5);
  CHECK(basis_size(MeanBasis::none, 4) == 0);
  MeanModel lin{MeanBasis::linear, Vector::Zero(2)};
  CHECK_THROWS_AS(lin.mean(std::vector<double>{0.1, 0.2}), Error);
}
