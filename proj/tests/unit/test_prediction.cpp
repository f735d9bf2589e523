#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "svecchia/design.hpp"
#include "svecchia/diagnostics.hpp"
#include "svecchia/evaluation.hpp"
#include "svecchia/parallel.hpp"
#include "svecchia/prediction.hpp"
#include "test_util.hpp"

#include <cmath>

using namespace svecchia;
using namespace testutil;

namespace {

FitResult known_fit(const Dataset& d, const CovarianceConfig& c, Method method,
                    MeanBasis basis = MeanBasis::none, Vector beta = Vector()) {
  FitResult f;
  f.config = c;
  f.method = method;
  f.basis = basis;
  f.beta = beta;
  f.training = d;
  return f;
}

struct Conditional {
  Vector mean;
  Matrix cov;
};

// Dense GP conditional of noisy targets given noisy observations.
Conditional dense_conditional(const FitResult& f, const Points& Xp) {
  const Index n = f.training.size(), np = Xp.rows();
  Points all(n + np, Xp.cols());
  all << f.training.inputs, Xp;
  const Matrix K = bessel_cov(all, f.config, true);
  const Matrix Koo = K.topLeftCorner(n, n), Kpo = K.bottomLeftCorner(np, n);
  const Matrix Kpp = K.bottomRightCorner(np, np);
  const MeanModel mean = f.mean_model();
  const Eigen::LDLT<Matrix> ldlt(Koo);
  const Vector r = f.training.responses - mean.means(f.training.inputs);
  return {mean.means(Xp) + Kpo * ldlt.solve(r), Kpp - Kpo * ldlt.solve(Matrix(Kpo.transpose()))};
}

double max_rel(const Matrix& a, const Matrix& b) {
  return (a - b).cwiseAbs().maxCoeff() / b.cwiseAbs().maxCoeff();
}

Dataset simulated(const CovarianceConfig& c, Index n, std::uint64_t seed) {
  Dataset d{lhs(n, c.dim(), seed), Vector()};
  d.responses = simulate_gp(d.inputs, c, MeanModel{}, seed + 1);
  return d;
}

}  // namespace

TEST_CASE("full conditioning reproduces dense kriging") {
  for (double nu : {0.5, 1.5, 3.5}) {
    for (double nugget : {0.0, 0.05}) {
      CAPTURE(nu);
      CAPTURE(nugget);
      CovarianceConfig c;
      c.smoothness = nu;
      c.variance = 1.7;
      c.ranges = {0.2, 0.4, 0.8};
      c.nugget = nugget;
      const Dataset d{uniform_points(150, 3, 7), normal_vector(150, 8)};
      Vector beta(4);
      beta << 0.3, -1.0, 0.5, 2.0;
      for (Method method : {Method::svecchia, Method::vecchia}) {
        const FitResult f = known_fit(d, c, method, MeanBasis::linear, beta);
        const Points Xp = uniform_points(60, 3, 9);
        const PredictiveDistribution p = predict(f, Xp, 209);
        const Conditional ref = dense_conditional(f, Xp);
        CHECK(max_rel(p.means(), ref.mean) < 1e-8);
        CHECK(max_rel(p.joint_covariance(), ref.cov) < 1e-8);
        CHECK(max_rel(p.variances(), ref.cov.diagonal()) < 1e-8);
      }
      const PredictiveDistribution ex =
          predict(known_fit(d, c, Method::exact, MeanBasis::linear, beta), uniform_points(60, 3, 9));
      const Conditional ref = dense_conditional(known_fit(d, c, Method::exact, MeanBasis::linear, beta),
                                                uniform_points(60, 3, 9));
      CHECK(max_rel(ex.means(), ref.mean) < 1e-8);
      CHECK(max_rel(ex.joint_covariance(), ref.cov) < 1e-8);
    }
  }
}

TEST_CASE("sparse factor structure and variances") {
  CovarianceConfig c;
  c.ranges = {0.3, 0.3};
  const Dataset d{uniform_points(300, 2, 1), normal_vector(300, 2)};
  const PredictiveDistribution p = predict(known_fit(d, c, Method::svecchia), uniform_points(200, 2, 3), 10);
  REQUIRE(p.size() == 200);
  const Matrix W = p.dense_factor();
  CHECK(W.isLowerTriangular());
  for (Index k = 0; k < p.size(); ++k) {
    CHECK(p.row_cols(k).back() == k);
    CHECK(static_cast<Index>(p.row_cols(k).size()) <= 11);
    CHECK(p.row_values(k).back() > 0);
  }
  const Matrix W_inv = W.triangularView<Eigen::Lower>().solve(Matrix::Identity(200, 200));
  const Matrix cov = W_inv * W_inv.transpose();
  for (Index k = 0; k < p.size(); ++k)
    CHECK(p.variances()[p.order()[k]] == doctest::Approx(cov(k, k)).epsilon(1e-10));
  CHECK((p.variances().array() > 0).all());
  CHECK((p.variances().array() <= c.variance + 1e-12).all());
}

TEST_CASE("interpolation at training inputs without a nugget") {
  CovarianceConfig c;
  c.smoothness = 3.5;
  c.ranges = {0.5, 0.7};
  const Dataset d{lhs(200, 2, 4), Vector()};
  Dataset dd = d;
  dd.responses = (3.0 * d.inputs.col(0).array()).sin() + d.inputs.col(1).array().square();
  for (Method method : {Method::svecchia, Method::vecchia}) {
    CAPTURE(to_string(method));
    const FitResult f = known_fit(dd, c, method);
    const PredictiveDistribution p = predict(f, dd.inputs.topRows(40), 30);
    for (Index i = 0; i < 40; ++i) {
      CHECK(p.means()[i] == doctest::Approx(dd.responses[i]).epsilon(1e-8));
      CHECK(p.variances()[i] < 1e-8);
    }
  }
}

TEST_CASE("joint samples") {
  CovarianceConfig c;
  c.ranges = {0.4, 0.4};
  c.nugget = 0.01;
  const Dataset d{uniform_points(100, 2, 11), normal_vector(100, 12)};
  const PredictiveDistribution p = predict(known_fit(d, c, Method::svecchia), uniform_points(8, 2, 13), 40);
  const Index S = 40000;
  const Matrix s = sample_joint(p, S, 5);
  REQUIRE(s.rows() == S);
  REQUIRE(s.cols() == 8);
  CHECK(s == sample_joint(p, S, 5));
  const Eigen::RowVectorXd mean = s.colwise().mean();
  const Matrix centered = s.rowwise() - mean;
  const Matrix emp = centered.transpose() * centered / static_cast<double>(S - 1);
  const Matrix ref = p.joint_covariance();
  CHECK((emp - ref).norm() / ref.norm() < 0.05);
  for (Index k = 0; k < 8; ++k)
    CHECK(std::abs(mean[k] - p.means()[k]) < 5.0 * std::sqrt(ref(k, k) / S));
}

TEST_CASE("correction scales variances and sample deviations") {
  CovarianceConfig c;
  c.ranges = {0.3, 0.3};
  const Dataset d{uniform_points(80, 2, 1), normal_vector(80, 2)};
  PredictiveDistribution p = predict(known_fit(d, c, Method::svecchia), uniform_points(10, 2, 3), 20);
  const Vector v = p.variances();
  const Matrix cov1 = p.joint_covariance();
  const Matrix s1 = sample_joint(p, 3, 9);
  p.set_correction(4.0);
  CHECK(p.corrected_variances() == 4.0 * v);
  CHECK(p.variances() == v);
  CHECK(max_rel(p.joint_covariance(), 4.0 * cov1) < 1e-14);
  const Matrix s4 = sample_joint(p, 3, 9);
  const Matrix dev1 = s1.rowwise() - p.means().transpose();
  const Matrix dev4 = s4.rowwise() - p.means().transpose();
  CHECK((dev4 - 2.0 * dev1).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(p.set_correction(-1.0), Error);
}

TEST_CASE("prediction intervals") {
  CovarianceConfig c;
  c.ranges = {0.3};
  const Dataset d{uniform_points(50, 1, 1), normal_vector(50, 2)};
  FitResult f = known_fit(d, c, Method::svecchia);
  f.variance_correction = 2.5;
  const PredictiveDistribution p = predict(f, uniform_points(20, 1, 3), 20);
  CHECK(p.correction() == 2.5);
  const auto iv = prediction_intervals(p, 0.95);
  REQUIRE(iv.size() == 20);
  for (Index i = 0; i < 20; ++i) {
    const double half = 1.959963984540054 * std::sqrt(2.5 * p.variances()[i]);
    CHECK(iv[i].hi - p.means()[i] == doctest::Approx(half).epsilon(1e-12));
    CHECK(p.means()[i] - iv[i].lo == doctest::Approx(half).epsilon(1e-12));
  }
  const auto i50 = prediction_intervals(p, 0.5);
  CHECK(i50[0].hi - p.means()[0] == doctest::Approx(0.6744897501960817 * std::sqrt(2.5 * p.variances()[0])));
  CHECK_THROWS_AS(prediction_intervals(p, 1.0), Error);
  CHECK_THROWS_AS(prediction_intervals(p, 0.0), Error);
}

TEST_CASE("closed-form variance correction") {
  CovarianceConfig truth;
  truth.smoothness = 2.5;
  truth.ranges = {0.2, 0.2};
  const Dataset d = simulated(truth, 1000, 3);
  const FitResult f = known_fit(d, truth, Method::svecchia);
  const double b = variance_correction(f, 0.9, 4, 40);
  CHECK(b == variance_correction(f, 0.9, 4, 40));
  // Under the true model the squared standardized residuals average to one.
  CHECK(b > 0.7);
  CHECK(b < 1.3);
  // A shrunken variance leaves the mean alone and is undone exactly by b.
  CovarianceConfig small = truth;
  small.variance = 0.25 * truth.variance;
  const double b4 = variance_correction(known_fit(d, small, Method::svecchia), 0.9, 4, 40);
  CHECK(b4 * 0.25 == doctest::Approx(b).epsilon(1e-9));
  const Dataset tiny{uniform_points(100, 2, 1), normal_vector(100, 2)};
  CHECK_THROWS_WITH_AS(variance_correction(known_fit(tiny, truth, Method::svecchia)),
                       doctest::Contains("inner test points"), Error);
}

TEST_CASE("low-rank and raw-input plans predict sensibly") {
  CovarianceConfig truth;
  truth.ranges = {0.05, 2.0};
  const Dataset d = simulated(truth, 800, 17);
  const Points Xp = uniform_points(200, 2, 18);
  Points all(1000, 2);
  all << d.inputs, Xp;
  const FitResult ex = known_fit(d, truth, Method::exact);
  const Vector ref = predict(ex, Xp).means();
  const double e_sv = (predict(known_fit(d, truth, Method::svecchia), Xp, 20).means() - ref).norm();
  const double e_v = (predict(known_fit(d, truth, Method::vecchia), Xp, 20).means() - ref).norm();
  const double e_lr = (predict(known_fit(d, truth, Method::lowrank), Xp, 20).means() - ref).norm();
  CHECK(e_sv < e_v);
  CHECK(e_v < e_lr);
}

TEST_CASE("prediction is thread-count invariant") {
  CovarianceConfig c;
  c.ranges = {0.3, 0.5, 0.4};
  const Dataset d{uniform_points(500, 3, 1), normal_vector(500, 2)};
  const FitResult f = known_fit(d, c, Method::svecchia);
  const Points Xp = uniform_points(300, 3, 4);
  set_num_threads(1);
  const PredictiveDistribution a = predict(f, Xp, 30);
  set_num_threads(3);
  const PredictiveDistribution b = predict(f, Xp, 30);
  set_num_threads(1);
  CHECK(a.means() == b.means());
  CHECK(a.variances() == b.variances());
}

TEST_CASE("prediction errors") {
  CovarianceConfig c;
  c.ranges = {0.3, 0.3};
  const Dataset d{uniform_points(30, 2, 1), normal_vector(30, 2)};
  const FitResult f = known_fit(d, c, Method::svecchia);
  CHECK_THROWS_WITH_AS(predict(f, uniform_points(3, 3, 1)), doctest::Contains("columns"), Error);
  CHECK_THROWS_AS(predict(f, Points(0, 2)), Error);
  CHECK_THROWS_AS(predict(f, uniform_points(3, 2, 1), 0), Error);
  Points bad = uniform_points(3, 2, 1);
  bad(1, 1) = std::nan("");
  CHECK_THROWS_AS(predict(f, bad), Error);
  const PredictiveDistribution p = predict(f, uniform_points(3, 2, 1));
  CHECK_THROWS_AS(sample_joint(p, -1, 0), Error);
  CHECK(sample_joint(p, 0, 0).rows() == 0);
}
