#include "svecchia/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace svecchia {

using nlohmann::json;

namespace {

std::string trim(std::string s) {
  const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && ws(s.back())) s.pop_back();
  std::size_t b = 0;
  while (b < s.size() && ws(s[b])) ++b;
  return s.substr(b);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::string unquote(std::string s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::string where(const std::string& source, Index line, const std::string& column) {
  std::ostringstream os;
  os << source << ": line " << line;
  if (!column.empty()) os << ", column '" << column << "'";
  return os.str();
}

}  // namespace

Index Table::column(const std::string& name) const {
  const auto it = std::find(columns.begin(), columns.end(), name);
  return it == columns.end() ? -1 : static_cast<Index>(it - columns.begin());
}

Table parse_csv(const std::string& text, const std::string& source) {
  std::istringstream is(text);
  std::string line;
  Index lineno = 0;
  Table t;
  while (std::getline(is, line)) {
    ++lineno;
    if (!trim(line).empty()) break;
  }
  if (trim(line).empty()) throw Error(source + ": empty file (a header row is required)");
  for (auto& c : split(trim(line))) t.columns.push_back(unquote(c));
  for (std::size_t j = 0; j < t.columns.size(); ++j) {
    if (t.columns[j].empty())
      throw Error(where(source, lineno, "") + ": header column " + std::to_string(j + 1) +
                  " has no name");
    for (std::size_t k = 0; k < j; ++k)
      if (t.columns[k] == t.columns[j])
        throw Error(where(source, lineno, t.columns[j]) + ": duplicated column name");
  }
  const std::size_t p = t.columns.size();
  std::vector<double> cells;
  Index rows = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string tl = trim(line);
    if (tl.empty()) continue;
    const auto parts = split(tl);
    if (parts.size() != p) {
      std::ostringstream os;
      os << where(source, lineno, "") << ": expected " << p << " fields, found " << parts.size();
      throw Error(os.str());
    }
    for (std::size_t j = 0; j < p; ++j) {
      const std::string& s = parts[j];
      double v = 0.0;
      const char* first = s.data();
      if (!s.empty() && *first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
      if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw Error(where(source, lineno, t.columns[j]) + ": '" + s + "' is not a number");
      if (!std::isfinite(v))
        throw Error(where(source, lineno, t.columns[j]) + ": non-finite value '" + s + "'");
      cells.push_back(v);
    }
    ++rows;
  }
  t.values = Eigen::Map<const Points>(cells.data(), rows, static_cast<Index>(p));
  return t;
}

Table read_csv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_csv(ss.str(), path.string());
}

void write_csv(std::ostream& os, const Table& table) {
  for (std::size_t j = 0; j < table.columns.size(); ++j) os << (j ? "," : "") << table.columns[j];
  os << '\n';
  char buf[32];
  for (Index i = 0; i < table.values.rows(); ++i) {
    for (Index j = 0; j < table.values.cols(); ++j) {
      const auto r = std::to_chars(buf, buf + sizeof buf, table.values(i, j));
      if (j) os << ',';
      os.write(buf, r.ptr - buf);
    }
    os << '\n';
  }
}

void write_csv(const std::filesystem::path& path, const Table& table) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  write_csv(out, table);
  if (!out) throw Error("write failed for " + path.string());
}

std::pair<Dataset, std::vector<std::string>> dataset_from_table(const Table& table,
                                                                const std::string& response) {
  const Index r = table.column(response);
  if (r < 0) throw Error("response column '" + response + "' not found in the header");
  if (table.values.rows() < 2) throw Error("need at least 2 data rows");
  if (table.columns.size() < 2) throw Error("no input columns besides the response");
  std::vector<std::string> names;
  Dataset d;
  d.inputs.resize(table.values.rows(), table.values.cols() - 1);
  d.responses = table.values.col(r);
  Index c = 0;
  for (Index j = 0; j < table.values.cols(); ++j) {
    if (j == r) continue;
    names.push_back(table.columns[j]);
    d.inputs.col(c++) = table.values.col(j);
  }
  if (d.responses.maxCoeff() == d.responses.minCoeff())
    throw Error("response column '" + response + "' is constant");
  return {d, names};
}

Points inputs_from_table(const Table& table, const std::vector<std::string>& inputs) {
  std::vector<std::string> missing, extra;
  for (const auto& n : inputs)
    if (table.column(n) < 0) missing.push_back(n);
  for (const auto& c : table.columns)
    if (std::find(inputs.begin(), inputs.end(), c) == inputs.end()) extra.push_back(c);
  if (!missing.empty() || !extra.empty()) {
    std::ostringstream os;
    os << "column mismatch with the training inputs:";
    if (!missing.empty()) {
      os << " missing";
      for (const auto& n : missing) os << " '" << n << "'";
    }
    if (!extra.empty()) {
      os << (missing.empty() ? "" : ";") << " unexpected";
      for (const auto& n : extra) os << " '" << n << "'";
    }
    throw Error(os.str());
  }
  Points X(table.values.rows(), static_cast<Index>(inputs.size()));
  for (std::size_t l = 0; l < inputs.size(); ++l)
    X.col(static_cast<Index>(l)) = table.values.col(table.column(inputs[l]));
  return X;
}

// ---------------------------------------------------------------------------

InputTransform InputTransform::fit(const Points& X) {
  InputTransform t;
  for (Index l = 0; l < X.cols(); ++l) {
    const double lo = X.col(l).minCoeff(), hi = X.col(l).maxCoeff();
    t.lower.push_back(lo);
    t.scale.push_back(hi > lo ? hi - lo : 1.0);
  }
  return t;
}

Points InputTransform::apply(const Points& X) const {
  if (static_cast<std::size_t>(X.cols()) != lower.size())
    throw Error("input transform dimension mismatch");
  Points U(X.rows(), X.cols());
  for (Index i = 0; i < X.rows(); ++i)
    for (Index l = 0; l < X.cols(); ++l) U(i, l) = (X(i, l) - lower[l]) / scale[l];
  return U;
}

Points InputTransform::invert(const Points& U) const {
  Points X(U.rows(), U.cols());
  for (Index i = 0; i < U.rows(); ++i)
    for (Index l = 0; l < U.cols(); ++l) X(i, l) = lower[l] + U(i, l) * scale[l];
  return X;
}

// ---------------------------------------------------------------------------

json to_json(const CovarianceConfig& c) {
  json ranges = json::array();
  for (double r : c.ranges) ranges.push_back(std::isfinite(r) ? json(r) : json(nullptr));
  return {{"smoothness", c.smoothness}, {"variance", c.variance}, {"ranges", ranges},
          {"nugget", c.nugget}};
}

CovarianceConfig config_from_json(const json& j) {
  CovarianceConfig c;
  c.smoothness = j.at("smoothness").get<double>();
  c.variance = j.at("variance").get<double>();
  c.nugget = j.at("nugget").get<double>();
  for (const auto& r : j.at("ranges")) c.ranges.push_back(r.is_null() ? kInfiniteRange : r.get<double>());
  c.validate();
  return c;
}

namespace {

json points_json(const Points& X) {
  json rows = json::array();
  for (Index i = 0; i < X.rows(); ++i) {
    json r = json::array();
    for (Index l = 0; l < X.cols(); ++l) r.push_back(X(i, l));
    rows.push_back(std::move(r));
  }
  return rows;
}

Points points_from(const json& j, Index d) {
  Points X(static_cast<Index>(j.size()), d);
  for (Index i = 0; i < X.rows(); ++i) {
    const auto& r = j.at(i);
    if (static_cast<Index>(r.size()) != d) throw Error("model file: ragged training inputs");
    for (Index l = 0; l < d; ++l) X(i, l) = r.at(l).get<double>();
  }
  return X;
}

json vector_json(const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Vector vector_from(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

}  // namespace

json to_json(const SavedModel& m) {
  const FitResult& f = m.fit;
  json j;
  j["format"] = "svecchia-model";
  j["version"] = kVersion;
  j["input_columns"] = m.input_columns;
  j["response_column"] = m.response_column;
  j["transform"] = {{"lower", m.transform.lower}, {"scale", m.transform.scale}};
  j["covariance"] = to_json(f.config);
  j["basis"] = to_string(f.basis);
  j["beta"] = vector_json(f.beta);
  j["method"] = to_string(f.method);
  j["m_est"] = f.m_est;
  j["loglik"] = f.loglik;
  j["iterations"] = f.iterations;
  j["converged"] = f.converged;
  j["eliminated"] = f.eliminated;
  j["variance_correction"] = f.variance_correction ? json(*f.variance_correction) : json(nullptr);
  j["variance_correction_seed"] = f.variance_correction_seed;
  j["training"] = {{"inputs", points_json(f.training.inputs)},
                   {"responses", vector_json(f.training.responses)}};
  return j;
}

SavedModel model_from_json(const json& j) {
  try {
    if (j.value("format", "") != "svecchia-model") throw Error("not an svecchia model file");
    SavedModel m;
    FitResult& f = m.fit;
    m.input_columns = j.at("input_columns").get<std::vector<std::string>>();
    m.response_column = j.at("response_column").get<std::string>();
    m.transform.lower = j.at("transform").at("lower").get<std::vector<double>>();
    m.transform.scale = j.at("transform").at("scale").get<std::vector<double>>();
    f.config = config_from_json(j.at("covariance"));
    f.basis = parse_basis(j.at("basis").get<std::string>());
    f.beta = vector_from(j.at("beta"));
    f.method = parse_method(j.at("method").get<std::string>());
    f.m_est = j.at("m_est").get<Index>();
    f.loglik = j.at("loglik").get<double>();
    f.iterations = j.at("iterations").get<Index>();
    f.converged = j.at("converged").get<bool>();
    f.eliminated = j.at("eliminated").get<std::vector<Index>>();
    if (!j.at("variance_correction").is_null())
      f.variance_correction = j.at("variance_correction").get<double>();
    f.variance_correction_seed = j.at("variance_correction_seed").get<std::uint64_t>();
    const Index d = static_cast<Index>(m.input_columns.size());
    f.training.inputs = points_from(j.at("training").at("inputs"), d);
    f.training.responses = vector_from(j.at("training").at("responses"));
    if (f.config.dim() != d || static_cast<Index>(m.transform.lower.size()) != d ||
        static_cast<Index>(m.transform.scale.size()) != d)
      throw Error("model file: dimension mismatch between columns, transform and ranges");
    if (f.training.responses.size() != f.training.inputs.rows())
      throw Error("model file: training inputs and responses differ in length");
    if (f.beta.size() != basis_size(f.basis, d))
      throw Error("model file: beta has the wrong length for the mean basis");
    return m;
  } catch (const json::exception& e) {
    throw Error(std::string("model file: ") + e.what());
  }
}

void save_model(const std::filesystem::path& path, const SavedModel& model) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(model).dump(1) << '\n';
}

SavedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

// ---------------------------------------------------------------------------

RunManifest::RunManifest(std::string command) : command_(std::move(command)) {}

void RunManifest::phase(const std::string& name) {
  const auto now = std::chrono::steady_clock::now();
  if (!current_.empty())
    timings_.emplace_back(current_, std::chrono::duration<double>(now - start_).count());
  current_ = name;
  start_ = now;
}

void RunManifest::finish() { phase(""); }

json RunManifest::to_json() const {
  json t = json::object();
  for (const auto& [k, v] : timings_) t[k] = v;
  return {{"format", "svecchia-manifest"}, {"version", kVersion}, {"command", command_},
          {"argv", argv_},        {"settings", settings_},         {"seeds", seeds_},
          {"inputs", inputs_},    {"outputs", outputs_},           {"timings_seconds", t},
          {"warnings", warnings_}};
}

void RunManifest::write(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json().dump(2) << '\n';
}

}  // namespace svecchia
