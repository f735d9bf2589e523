#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "svecchia/estimation.hpp"
#include "svecchia/io.hpp"
#include "svecchia/prediction.hpp"
#include "test_util.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace svecchia;
using namespace testutil;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "svecchia_test_io";
  fs::create_directories(dir);
  return dir / name;
}

FitResult small_fit() {
  Dataset d{uniform_points(80, 3, 1), Vector()};
  d.responses = (4.0 * d.inputs.col(0).array()).sin() + d.inputs.col(1).array();
  EstimationConfig est;
  est.max_iterations = 10;
  return fit(d, est, default_initial(d, false), MeanBasis::linear);
}

}  // namespace

TEST_CASE("csv parsing") {
  const Table t = parse_csv("a, b,\"c\"\n1,2.5,-3e2\n\n+4, 5 ,6\r\n");
  REQUIRE(t.columns == std::vector<std::string>{"a", "b", "c"});
  REQUIRE(t.values.rows() == 2);
  CHECK(t.values(0, 1) == 2.5);
  CHECK(t.values(0, 2) == -300.0);
  CHECK(t.values(1, 0) == 4.0);
  CHECK(t.values(1, 1) == 5.0);
  CHECK(t.column("c") == 2);
  CHECK(t.column("d") == -1);
  CHECK(parse_csv("x,y\n").values.rows() == 0);
}

TEST_CASE("csv errors name the line and column") {
  CHECK_THROWS_WITH_AS(parse_csv("x,y\n1,2\n3,abc\n", "train.csv"),
                       "train.csv: line 3, column 'y': 'abc' is not a number", Error);
  CHECK_THROWS_WITH_AS(parse_csv("x,y\n1,2\n3\n"), doctest::Contains("line 3: expected 2 fields, found 1"),
                       Error);
  CHECK_THROWS_WITH_AS(parse_csv("x,y\n1,nan\n"), doctest::Contains("line 2, column 'y': non-finite"),
                       Error);
  CHECK_THROWS_WITH_AS(parse_csv("x,y\n1,\n"), doctest::Contains("column 'y'"), Error);
  CHECK_THROWS_WITH_AS(parse_csv("x,x\n1,2\n"), doctest::Contains("duplicated column"), Error);
  CHECK_THROWS_WITH_AS(parse_csv("x,,z\n1,2,3\n"), doctest::Contains("header column 2 has no name"),
                       Error);
  CHECK_THROWS_WITH_AS(parse_csv("\n\n"), doctest::Contains("header row is required"), Error);
  CHECK_THROWS_WITH_AS(parse_csv("x\n1,5\n"), doctest::Contains("expected 1 fields"), Error);
  CHECK_THROWS_AS(read_csv(scratch("does_not_exist.csv")), Error);
}

TEST_CASE("csv round trip is exact") {
  Table t;
  t.columns = {"u", "v"};
  t.values = uniform_points(50, 2, 3);
  t.values(0, 0) = 1e-300;
  t.values(1, 1) = -0.1;
  const fs::path p = scratch("round.csv");
  write_csv(p, t);
  const Table back = read_csv(p);
  CHECK(back.columns == t.columns);
  CHECK(back.values == t.values);
}

TEST_CASE("datasets from tables") {
  const Table t = parse_csv("x1,y,x2\n0,1,5\n1,3,6\n2,2,7\n");
  const auto [d, names] = dataset_from_table(t, "y");
  CHECK(names == std::vector<std::string>{"x1", "x2"});
  CHECK(d.responses == Vector{{1.0, 3.0, 2.0}});
  CHECK(d.inputs(2, 1) == 7.0);
  CHECK_THROWS_WITH_AS(dataset_from_table(t, "z"), doctest::Contains("'z' not found"), Error);
  CHECK_THROWS_WITH_AS(dataset_from_table(parse_csv("x,y\n1,2\n2,2\n"), "y"),
                       doctest::Contains("constant"), Error);
  CHECK_THROWS_WITH_AS(dataset_from_table(parse_csv("x,y\n1,2\n"), "y"),
                       doctest::Contains("at least 2"), Error);
  CHECK_THROWS_AS(dataset_from_table(parse_csv("y\n1\n2\n"), "y"), Error);

  CHECK(inputs_from_table(t, {"x2", "y", "x1"}).col(0) == t.values.col(2));
  CHECK_THROWS_WITH_AS(inputs_from_table(t, {"x1", "x3"}),
                       "column mismatch with the training inputs: missing 'x3'; unexpected 'y' 'x2'",
                       Error);
}

TEST_CASE("input transform") {
  Points X(3, 3);
  X << 1, 10, 5, 3, 20, 5, 2, 15, 5;
  const InputTransform tr = InputTransform::fit(X);
  const Points U = tr.apply(X);
  CHECK(U.col(0).minCoeff() == 0.0);
  CHECK(U.col(0).maxCoeff() == 1.0);
  CHECK(U(2, 1) == 0.5);
  CHECK(U.col(2).isZero());
  CHECK((tr.invert(U) - X).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(tr.apply(Points(2, 2)), Error);
}

TEST_CASE("covariance json keeps infinite ranges") {
  CovarianceConfig c;
  c.ranges = {0.2, kInfiniteRange, 3.0};
  c.nugget = 0.01;
  const auto j = to_json(c);
  CHECK(j["ranges"][1].is_null());
  const CovarianceConfig back = config_from_json(j);
  CHECK(back.ranges == c.ranges);
  CHECK(back.nugget == c.nugget);
  auto bad = j;
  bad["variance"] = -1.0;
  CHECK_THROWS_AS(config_from_json(bad), Error);
}

TEST_CASE("model files round trip bit for bit") {
  SavedModel m;
  m.fit = small_fit();
  m.fit.variance_correction = 1.3137;
  m.fit.variance_correction_seed = 77;
  m.input_columns = {"a", "b", "c"};
  m.response_column = "out";
  m.transform.lower = {0.1, -2.0, 3.0};
  m.transform.scale = {1.0 / 3.0, 4.0, 0.7};
  const fs::path p = scratch("model.json");
  save_model(p, m);
  const SavedModel back = load_model(p);
  CHECK(back.input_columns == m.input_columns);
  CHECK(back.response_column == "out");
  CHECK(back.transform.scale == m.transform.scale);
  CHECK(back.fit.config.ranges == m.fit.config.ranges);
  CHECK(back.fit.config.variance == m.fit.config.variance);
  CHECK(back.fit.beta == m.fit.beta);
  CHECK(back.fit.training.inputs == m.fit.training.inputs);
  CHECK(back.fit.training.responses == m.fit.training.responses);
  CHECK(back.fit.correction() == 1.3137);
  CHECK(back.fit.method == m.fit.method);
  CHECK(back.fit.basis == MeanBasis::linear);
  const Points Xp = uniform_points(20, 3, 9);
  const PredictiveDistribution a = predict(m.fit, Xp, 30), b = predict(back.fit, Xp, 30);
  CHECK(a.means() == b.means());
  CHECK(a.corrected_variances() == b.corrected_variances());
}

TEST_CASE("model file errors") {
  SavedModel m;
  m.fit = small_fit();
  m.input_columns = {"a", "b", "c"};
  m.response_column = "y";
  m.transform = InputTransform::fit(m.fit.training.inputs);
  const auto good = to_json(m);
  CHECK_NOTHROW(model_from_json(good));
  auto j = good;
  j["format"] = "other";
  CHECK_THROWS_WITH_AS(model_from_json(j), doctest::Contains("not an svecchia model"), Error);
  j = good;
  j["input_columns"] = std::vector<std::string>{"a", "b"};
  CHECK_THROWS_AS(model_from_json(j), Error);
  j = good;
  j["beta"] = std::vector<double>{1.0};
  CHECK_THROWS_WITH_AS(model_from_json(j), doctest::Contains("beta"), Error);
  j = good;
  j.erase("training");
  CHECK_THROWS_WITH_AS(model_from_json(j), doctest::Contains("model file"), Error);
  const fs::path p = scratch("broken.json");
  std::ofstream(p) << "{ not json";
  CHECK_THROWS_AS(load_model(p), Error);
}

TEST_CASE("run manifest") {
  RunManifest r("fit");
  r.set_argv({"fit", "train.csv"});
  r.settings()["m_est"] = 30;
  r.add_seed("seed", 5);
  r.add_input("train.csv");
  r.add_output("model.json");
  r.phase("read");
  r.phase("estimate");
  r.add_warning("something");
  r.finish();
  const auto j = r.to_json();
  CHECK(j["format"] == "svecchia-manifest");
  CHECK(j["version"] == kVersion);
  CHECK(j["command"] == "fit");
  CHECK(j["argv"][1] == "train.csv");
  CHECK(j["settings"]["m_est"] == 30);
  CHECK(j["seeds"]["seed"] == 5);
  CHECK(j["timings_seconds"].contains("read"));
  CHECK(j["timings_seconds"].contains("estimate"));
  CHECK(j["timings_seconds"].size() == 2);
  CHECK(j["warnings"].size() == 1);
  const fs::path p = scratch("run.manifest.json");
  r.write(p);
  std::ifstream in(p);
  CHECK(nlohmann::json::parse(in) == j);
}
