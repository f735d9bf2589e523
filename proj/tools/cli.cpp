#include "cli.hpp"

#include "svecchia/design.hpp"
#include "svecchia/diagnostics.hpp"
#include "svecchia/evaluation.hpp"
#include "svecchia/io.hpp"
#include "svecchia/parallel.hpp"
#include "svecchia/prediction.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <optional>
#include <sstream>

namespace svecchia::cli {

using nlohmann::json;

namespace {

struct EstimationFlags {
  std::string method = "svecchia";
  Index m_est = 30;
  Index n_est = 5000;
  Index m_pred = kDefaultMPred;
  std::string nugget = "fixed0";
  double smoothness = 3.5;
  std::string basis = "constant";
  bool no_vcf = false;
  bool trace = false;
};

struct Common {
  std::uint64_t seed = 0;
  int threads = 0;
  std::string manifest;
};

void add_estimation(CLI::App* c, EstimationFlags& f) {
  c->add_option("--method", f.method, "svecchia, vecchia, lowrank or exact")
      ->check(CLI::IsMember({"svecchia", "vecchia", "lowrank", "exact"}));
  c->add_option("--m-est", f.m_est, "Neighbors during estimation")->check(CLI::PositiveNumber);
  c->add_option("--n-est", f.n_est, "Estimation subsample size")->check(CLI::PositiveNumber);
  c->add_option("--nugget", f.nugget, "fixed0 or estimate")
      ->check(CLI::IsMember({"fixed0", "estimate"}));
  c->add_option("--smoothness", f.smoothness, "Matern smoothness (0.5, 1.5, ..., 4.5)");
  c->add_option("--basis", f.basis, "Mean basis: constant, linear or none")
      ->check(CLI::IsMember({"constant", "linear", "none"}));
  c->add_flag("--trace", f.trace, "Print one line per Fisher iteration to stderr");
}

void add_common(CLI::App* c, Common& k) {
  c->add_option("--seed", k.seed, "Seed for all randomness");
  c->add_option("--threads", k.threads, "Worker threads (fallback: EMU_THREADS)")
      ->check(CLI::NonNegativeNumber);
  c->add_option("--manifest", k.manifest, "Manifest path (default: <output>.manifest.json)");
}

EstimationConfig estimation_config(const EstimationFlags& f, std::uint64_t seed,
                                   std::ostream& err) {
  EstimationConfig e;
  e.method = parse_method(f.method);
  e.m_est = f.m_est;
  e.n_est = f.n_est;
  e.estimate_nugget = f.nugget == "estimate";
  e.subsample_seed = seed;
  e.trace_log = f.trace ? &err : nullptr;
  e.validate();
  return e;
}

json estimation_json(const EstimationFlags& f) {
  return {{"method", f.method},         {"m_est", f.m_est},   {"n_est", f.n_est},
          {"m_pred", f.m_pred},         {"nugget", f.nugget}, {"smoothness", f.smoothness},
          {"basis", f.basis},           {"vcf", !f.no_vcf},   {"termination_tol", 1e-4},
          {"max_iterations", 40},       {"relevance_threshold", 1e3}};
}

std::string manifest_path(const Common& k, const std::string& output) {
  return k.manifest.empty() ? output + ".manifest.json" : k.manifest;
}

std::vector<std::string> numbered(const std::string& prefix, Index d) {
  std::vector<std::string> v;
  for (Index l = 0; l < d; ++l) v.push_back(prefix + std::to_string(l + 1));
  return v;
}

void write_dataset(const std::string& path, const Points& X, const Vector& y) {
  Table t;
  t.columns = numbered("x", X.cols());
  t.columns.push_back("y");
  t.values.resize(X.rows(), X.cols() + 1);
  t.values.leftCols(X.cols()) = X;
  t.values.col(X.cols()) = y;
  write_csv(path, t);
}

// Fits VCF when the data allow it; otherwise warns and keeps b = 1.
void attach_correction(FitResult& f, Index m_pred, std::uint64_t seed) {
  const Index n = f.training.size();
  const Index n_in = static_cast<Index>(std::llround(0.9 * static_cast<double>(n)));
  if (n - n_in < kMinCorrectionTest) {
    warn("variance correction skipped: " + std::to_string(n) + " training points are too few");
    return;
  }
  f.variance_correction = variance_correction(f, 0.9, seed, m_pred);
  f.variance_correction_seed = seed;
}

struct Session {
  RunManifest manifest;
  WarningHandler previous;

  Session(const std::string& command, const std::vector<std::string>& args, const Common& k,
          std::ostream& err)
      : manifest(command) {
    manifest.set_argv(args);
    if (k.threads > 0) set_num_threads(k.threads);
    manifest.settings()["threads"] = num_threads();
    manifest.add_seed("seed", k.seed);
    previous = set_warning_handler([this, &err](const std::string& w) {
      manifest.add_warning(w);
      err << "warning: " << w << '\n';
    });
  }
  ~Session() { set_warning_handler(previous); }
  Session(const Session&) = delete;
  Session& operator=(const Session&) = delete;

  void close(const std::string& path) {
    manifest.finish();
    manifest.write(path);
  }
};

// ---------------------------------------------------------------------------

int cmd_fit(const std::vector<std::string>& args, const std::string& train,
            const std::string& response, const std::string& out, const EstimationFlags& f,
            const Common& k, std::ostream& output, std::ostream& err) {
  Session s("fit", args, k, err);
  s.manifest.settings()["estimation"] = estimation_json(f);
  s.manifest.settings()["response"] = response;
  s.manifest.add_input(train);
  s.manifest.add_seed("subsample", k.seed);
  s.manifest.add_seed("variance_correction", k.seed + 1);

  s.manifest.phase("read");
  auto [data, names] = dataset_from_table(read_csv(train), response);
  SavedModel model;
  model.input_columns = names;
  model.response_column = response;
  model.transform = InputTransform::fit(data.inputs);
  data.inputs = model.transform.apply(data.inputs);

  s.manifest.phase("estimate");
  const EstimationConfig est = estimation_config(f, k.seed, err);
  model.fit = fit(data, est, default_initial(data, est.estimate_nugget, f.smoothness),
                  parse_basis(f.basis));
  if (!f.no_vcf) {
    s.manifest.phase("variance_correction");
    attach_correction(model.fit, f.m_pred, k.seed + 1);
  }
  s.manifest.phase("write");
  save_model(out, model);
  s.manifest.add_output(out);
  const FitResult& r = model.fit;
  output << "fit: n=" << data.size() << " d=" << data.dim() << " iterations=" << r.iterations
         << (r.converged ? " converged" : " not converged") << " loglik=" << r.loglik
         << " b=" << r.correction() << '\n';
  s.close(manifest_path(k, out));
  return 0;
}

int cmd_predict(const std::vector<std::string>& args, const std::string& model_path,
                const std::string& test, const std::string& out, Index m_pred, double level,
                Index samples, const Common& k, std::ostream& output, std::ostream& err) {
  Session s("predict", args, k, err);
  s.manifest.settings()["m_pred"] = m_pred;
  s.manifest.settings()["level"] = level;
  s.manifest.settings()["samples"] = samples;
  s.manifest.add_input(model_path);
  s.manifest.add_input(test);

  s.manifest.phase("read");
  const SavedModel model = load_model(model_path);
  Table t = read_csv(test);
  // The response column may be present (e.g. when predicting a training file).
  if (const Index r = t.column(model.response_column); r >= 0) {
    Table u;
    for (Index j = 0; j < t.values.cols(); ++j)
      if (j != r) u.columns.push_back(t.columns[j]);
    u.values.resize(t.values.rows(), t.values.cols() - 1);
    for (Index j = 0, c = 0; j < t.values.cols(); ++j)
      if (j != r) u.values.col(c++) = t.values.col(j);
    t = std::move(u);
  }
  const Points X = model.transform.apply(inputs_from_table(t, model.input_columns));

  s.manifest.phase("predict");
  const PredictiveDistribution dist = predict(model.fit, X, m_pred);
  Table o;
  o.columns = {"mean", "variance"};
  const bool intervals = level > 0;
  if (intervals) {
    o.columns.push_back("lo");
    o.columns.push_back("hi");
  }
  Matrix draws;
  if (samples > 0) {
    s.manifest.phase("sample");
    draws = sample_joint(dist, samples, k.seed);
    for (const auto& c : numbered("sample_", samples)) o.columns.push_back(c);
  }
  o.values.resize(dist.size(), static_cast<Index>(o.columns.size()));
  o.values.col(0) = dist.means();
  o.values.col(1) = dist.corrected_variances();
  if (intervals) {
    const auto iv = prediction_intervals(dist, level);
    for (Index i = 0; i < dist.size(); ++i) {
      o.values(i, 2) = iv[i].lo;
      o.values(i, 3) = iv[i].hi;
    }
  }
  if (samples > 0) o.values.rightCols(samples) = draws.transpose();
  s.manifest.phase("write");
  write_csv(out, o);
  s.manifest.add_output(out);
  output << "predict: " << dist.size() << " points written to " << out << '\n';
  s.close(manifest_path(k, out));
  return 0;
}

struct SimulateFlags {
  std::string preset = "matern-d10";
  Index n = 2000;
  std::string design = "lhs";
  Index dim = 0;
  std::vector<double> ranges;
  double variance = 1.0;
  double nugget = 0.0;
  double smoothness = 3.5;
};

CovarianceConfig simulate_config(const SimulateFlags& f) {
  CovarianceConfig c;
  if (f.preset == "matern-d10") {
    c.ranges = {0.05, 0.05, 5, 5, 5, 5, 5, 5, 5, 5};
  } else {
    if (f.ranges.empty()) throw Error("--preset custom needs --ranges");
    c.ranges = f.ranges;
  }
  c.variance = f.variance;
  c.nugget = f.nugget;
  c.smoothness = f.smoothness;
  c.validate();
  return c;
}

int cmd_simulate(const std::vector<std::string>& args, const SimulateFlags& f,
                 const std::string& out, const Common& k, std::ostream& output,
                 std::ostream& err) {
  Session s("simulate", args, k, err);
  const CovarianceConfig c = simulate_config(f);
  s.manifest.settings()["preset"] = f.preset;
  s.manifest.settings()["n"] = f.n;
  s.manifest.settings()["design"] = f.design;
  s.manifest.settings()["covariance"] = to_json(c);
  s.manifest.add_seed("design", k.seed);
  s.manifest.add_seed("responses", k.seed + 1);
  s.manifest.phase("simulate");
  const Points X = f.design == "lhs" ? lhs(f.n, c.dim(), k.seed)
                                     : uniform_design(f.n, c.dim(), k.seed);
  const Vector y = simulate_gp(X, c, MeanModel{}, k.seed + 1);
  s.manifest.phase("write");
  write_dataset(out, X, y);
  s.manifest.add_output(out);
  output << "simulate: " << f.n << " points written to " << out << '\n';
  s.close(manifest_path(k, out));
  return 0;
}

int cmd_design(const std::vector<std::string>& args, const std::string& fn_name, Index n,
               double first_fraction, double oversample, const std::string& out,
               const std::string& model_out, const EstimationFlags& f, const Common& k,
               std::ostream& output, std::ostream& err) {
  Session s("design", args, k, err);
  const TestFunction& fn = test_function(fn_name);
  DesignConfig dc;
  dc.n = n;
  dc.first_stage_fraction = first_fraction;
  dc.oversample_factor = oversample;
  dc.seed = k.seed;
  s.manifest.settings()["function"] = fn.name;
  s.manifest.settings()["n"] = n;
  s.manifest.settings()["n_first"] = dc.n_first();
  s.manifest.settings()["first_stage_fraction"] = first_fraction;
  s.manifest.settings()["oversample_factor"] = oversample;
  s.manifest.settings()["estimation"] = estimation_json(f);
  s.manifest.add_seed("first_stage", k.seed);
  s.manifest.add_seed("pool", k.seed + 1);
  s.manifest.phase("design");
  const EstimationConfig est = estimation_config(f, k.seed, err);
  DesignResult r = two_stage_design(dc, fn.dim, fn.f, est, parse_basis(f.basis), f.smoothness);
  s.manifest.phase("write");
  write_dataset(out, r.data.inputs, r.data.responses);
  s.manifest.add_output(out);
  if (!model_out.empty()) {
    if (!f.no_vcf) attach_correction(r.fit, f.m_pred, k.seed + 2);
    SavedModel m;
    m.fit = r.fit;
    m.input_columns = numbered("x", fn.dim);
    m.response_column = "y";
    m.transform.lower.assign(fn.dim, 0.0);
    m.transform.scale.assign(fn.dim, 1.0);
    save_model(model_out, m);
    s.manifest.add_output(model_out);
  }
  output << "design: " << n << " runs (" << r.n_first << " in the first stage) written to " << out
         << '\n';
  s.close(manifest_path(k, out));
  return 0;
}

struct BenchmarkFlags {
  std::string protocol;
  std::vector<Index> n, m;
  std::vector<std::string> methods, functions;
  Index replicates = 0;
  Index n_test = -1;
  Index m_pred = 0;
  Index n_est = 5000;
  Index samples = 100;
  bool quiet = false;
};

int cmd_benchmark(const std::vector<std::string>& args, const BenchmarkFlags& f,
                  const std::string& out, const Common& k, std::ostream& output,
                  std::ostream& err) {
  Session s("benchmark", args, k, err);
  BenchmarkOptions o;
  o.protocol = f.protocol;
  o.n = f.n;
  o.m = f.m;
  for (const auto& m : f.methods) o.methods.push_back(parse_method(m));
  o.functions = f.functions;
  o.replicates = f.replicates;
  o.n_test = f.n_test;
  o.m_pred = f.m_pred;
  o.n_est = f.n_est;
  o.energy_samples = f.samples;
  o.seed = k.seed;
  if (!f.quiet) o.progress = [&err](const std::string& line) { err << line << '\n'; };
  const BenchmarkOptions r = resolve_benchmark(o);
  std::vector<std::string> methods;
  for (Method m : r.methods) methods.push_back(to_string(m));
  s.manifest.settings()["protocol"] = r.protocol;
  s.manifest.settings()["n"] = r.n;
  s.manifest.settings()["m"] = r.m;
  s.manifest.settings()["methods"] = methods;
  s.manifest.settings()["functions"] = r.functions;
  s.manifest.settings()["replicates"] = r.replicates;
  s.manifest.settings()["n_test"] = r.n_test;
  s.manifest.settings()["m_pred"] = r.m_pred;
  s.manifest.settings()["n_est"] = r.n_est;
  s.manifest.settings()["energy_samples"] = r.energy_samples;
  s.manifest.phase("benchmark");
  const BenchmarkTable t = run_benchmark(o);
  s.manifest.phase("write");
  std::ofstream csv(out);
  if (!csv) throw Error("cannot write " + out);
  t.write_csv(csv);
  s.manifest.add_output(out);
  output << "benchmark " << r.protocol << ": " << t.rows.size() << " rows written to " << out
         << '\n';
  s.close(manifest_path(k, out));
  return 0;
}

std::vector<std::string> manifest_argv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  json j;
  try {
    in >> j;
    if (j.value("format", "") != "svecchia-manifest") throw Error(path + " is not a manifest");
    return j.at("argv").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw Error(path + ": " + e.what());
  }
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Scaled Vecchia Gaussian-process emulation"};
  app.name("svecchia");
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  EstimationFlags ef;
  Common common;

  auto* fit_cmd = app.add_subcommand("fit", "Estimate a model from a training CSV");
  std::string train, response = "y", model_out = "model.json";
  fit_cmd->add_option("train", train, "Training CSV with a header")->required()->check(CLI::ExistingFile);
  fit_cmd->add_option("--response", response, "Name of the response column");
  fit_cmd->add_option("-o,--out", model_out, "Model file");
  fit_cmd->add_option("--m-pred", ef.m_pred, "Neighbors for the variance correction")
      ->check(CLI::PositiveNumber);
  fit_cmd->add_flag("--no-vcf", ef.no_vcf, "Skip the variance correction");
  add_estimation(fit_cmd, ef);
  add_common(fit_cmd, common);

  auto* pred_cmd = app.add_subcommand("predict", "Predict at the rows of a CSV");
  std::string model_in, test, pred_out = "predictions.csv";
  Index m_pred = kDefaultMPred, samples = 0;
  double level = 0.0;
  pred_cmd->add_option("model", model_in, "Model file from fit")->required()->check(CLI::ExistingFile);
  pred_cmd->add_option("test", test, "CSV with the training input columns")->required()->check(CLI::ExistingFile);
  pred_cmd->add_option("-o,--out", pred_out, "Predictions CSV");
  pred_cmd->add_option("--m-pred", m_pred, "Neighbors per prediction")->check(CLI::PositiveNumber);
  pred_cmd->add_option("--level", level, "Add lo/hi columns at this level")->check(CLI::Range(0.0, 1.0));
  pred_cmd->add_option("--samples", samples, "Number of joint sample columns")->check(CLI::NonNegativeNumber);
  add_common(pred_cmd, common);

  auto* sim_cmd = app.add_subcommand("simulate", "Simulate a zero-mean Matern GP dataset");
  SimulateFlags sf;
  std::string sim_out = "simulated.csv";
  sim_cmd->add_option("--preset", sf.preset, "matern-d10 or custom")
      ->check(CLI::IsMember({"matern-d10", "custom"}));
  sim_cmd->add_option("--n", sf.n, "Number of points")->check(CLI::PositiveNumber);
  sim_cmd->add_option("--design", sf.design, "lhs or uniform")->check(CLI::IsMember({"lhs", "uniform"}));
  sim_cmd->add_option("--ranges", sf.ranges, "Comma separated ranges (custom)")->delimiter(',');
  sim_cmd->add_option("--variance", sf.variance, "Marginal variance");
  sim_cmd->add_option("--nugget", sf.nugget, "Nugget variance");
  sim_cmd->add_option("--smoothness", sf.smoothness, "Matern smoothness");
  sim_cmd->add_option("-o,--out", sim_out, "Output CSV");
  add_common(sim_cmd, common);

  auto* design_cmd = app.add_subcommand("design", "Two-stage sequential design on a test function");
  std::string fn_name, design_out = "design.csv", design_model;
  Index design_n = 1000;
  double first_fraction = 0.1, oversample = 20;
  design_cmd->add_option("--fn", fn_name, "borehole, robot_arm or piston")->required();
  design_cmd->add_option("--n", design_n, "Total runs")->check(CLI::PositiveNumber);
  design_cmd->add_option("--first-fraction", first_fraction, "Share of runs in the first stage");
  design_cmd->add_option("--oversample", oversample, "Candidate pool size per run");
  design_cmd->add_option("-o,--out", design_out, "Design CSV (inputs and responses)");
  design_cmd->add_option("--model", design_model, "Also write the final model");
  design_cmd->add_option("--m-pred", ef.m_pred, "Neighbors for the variance correction");
  design_cmd->add_flag("--no-vcf", ef.no_vcf, "Skip the variance correction");
  add_estimation(design_cmd, ef);
  add_common(design_cmd, common);

  auto* bench_cmd = app.add_subcommand("benchmark", "Run a benchmark protocol");
  BenchmarkFlags bf;
  std::string bench_out = "benchmark.csv";
  bench_cmd->add_option("protocol", bf.protocol, "Protocol name")->required();
  bench_cmd->add_option("--n", bf.n, "Training sizes")->delimiter(',');
  bench_cmd->add_option("--m", bf.m, "Neighbor counts")->delimiter(',');
  bench_cmd->add_option("--methods", bf.methods, "Methods")->delimiter(',');
  bench_cmd->add_option("--functions", bf.functions, "Test functions")->delimiter(',');
  bench_cmd->add_option("--replicates", bf.replicates, "Replicates");
  bench_cmd->add_option("--n-test", bf.n_test, "Test points");
  bench_cmd->add_option("--m-pred", bf.m_pred, "Prediction neighbors (default 2m)");
  bench_cmd->add_option("--n-est", bf.n_est, "Estimation subsample size");
  bench_cmd->add_option("--samples", bf.samples, "Joint samples for the energy score");
  bench_cmd->add_flag("--quiet", bf.quiet, "No per-row progress");
  bench_cmd->add_option("-o,--out", bench_out, "Results CSV");
  add_common(bench_cmd, common);

  auto* replay_cmd = app.add_subcommand("replay", "Re-run the command recorded in a manifest");
  std::string replay_path;
  replay_cmd->add_option("manifest", replay_path, "Manifest JSON")->required()->check(CLI::ExistingFile);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*fit_cmd) return cmd_fit(args, train, response, model_out, ef, common, out, err);
    if (*pred_cmd)
      return cmd_predict(args, model_in, test, pred_out, m_pred, level, samples, common, out, err);
    if (*sim_cmd) return cmd_simulate(args, sf, sim_out, common, out, err);
    if (*design_cmd)
      return cmd_design(args, fn_name, design_n, first_fraction, oversample, design_out,
                        design_model, ef, common, out, err);
    if (*bench_cmd) return cmd_benchmark(args, bf, bench_out, common, out, err);
    if (*replay_cmd) {
      const auto argv = manifest_argv(replay_path);
      if (!argv.empty() && argv.front() == "replay") throw Error("refusing to replay a replay");
      return run(argv, out, err);
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace svecchia::cli
