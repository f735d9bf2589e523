#pragma once

#include "svecchia/estimation.hpp"
#include "svecchia/types.hpp"

#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace svecchia {

inline constexpr const char* kVersion = "0.1.0";

// ---------------------------------------------------------------------------
// CSV

/// Numeric table with a header row.
struct Table {
  std::vector<std::string> columns;
  Points values;  // rows x columns

  Index column(const std::string& name) const;  // -1 when absent
};

/// Comma separated, '.' decimal, header required. Errors name the line and
/// column of the offending cell.
Table read_csv(const std::filesystem::path& path);
Table parse_csv(const std::string& text, const std::string& source = "<string>");
void write_csv(const std::filesystem::path& path, const Table& table);
void write_csv(std::ostream& os, const Table& table);

/// Splits a table into inputs and a response column. Returns the input
/// column names in file order.
std::pair<Dataset, std::vector<std::string>> dataset_from_table(const Table& table,
                                                                const std::string& response);
/// Selects exactly `inputs` from a table; any other column is rejected.
Points inputs_from_table(const Table& table, const std::vector<std::string>& inputs);

// ---------------------------------------------------------------------------
// Input standardization

/// Affine map of each input column onto [0, 1] from the training extent.
/// Constant columns keep a unit scale.
struct InputTransform {
  std::vector<double> lower;
  std::vector<double> scale;

  static InputTransform fit(const Points& X);
  Points apply(const Points& X) const;
  Points invert(const Points& U) const;
};

// ---------------------------------------------------------------------------
// Models

struct SavedModel {
  FitResult fit;  // training inputs are standardized
  InputTransform transform;
  std::vector<std::string> input_columns;
  std::string response_column;
};

nlohmann::json to_json(const CovarianceConfig& config);
CovarianceConfig config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const SavedModel& model);
SavedModel model_from_json(const nlohmann::json& j);
void save_model(const std::filesystem::path& path, const SavedModel& model);
SavedModel load_model(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Run manifests

class RunManifest {
 public:
  explicit RunManifest(std::string command);

  void set_argv(std::vector<std::string> argv) { argv_ = std::move(argv); }
  nlohmann::json& settings() { return settings_; }
  void add_seed(const std::string& name, std::uint64_t seed) { seeds_[name] = seed; }
  void add_input(const std::filesystem::path& p) { inputs_.push_back(p.string()); }
  void add_output(const std::filesystem::path& p) { outputs_.push_back(p.string()); }
  /// Starts timing a phase; the elapsed time is recorded at the next call
  /// or at finish().
  void phase(const std::string& name);
  void finish();
  void add_warning(const std::string& w) { warnings_.push_back(w); }

  nlohmann::json to_json() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  nlohmann::json settings_ = nlohmann::json::object();
  nlohmann::json seeds_ = nlohmann::json::object();
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  std::vector<std::string> warnings_;
  std::vector<std::pair<std::string, double>> timings_;
  std::string current_;
  std::chrono::steady_clock::time_point start_{};
};

}  // namespace svecchia
