#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <nlohmann/json.hpp>

#include "windgen/data.hpp"
#include "windgen/model.hpp"

namespace windgen {

/// Exactly one of `path` and `synth` is set.
struct DataSource {
  std::optional<std::filesystem::path> path;
  std::optional<SynthConfig> synth;
  CsvSchema schema;
};

struct EvalOptions {
  std::size_t n_per_condition = 200;
  /// Empty means every label present in the dataset.
  std::vector<ConditionLabel> conditions;
  /// Altitude-averaged points written per model for scatter plots.
  std::size_t bivariate_points = 2000;
};

struct KfoldOptions {
  /// Empty means four speed bins crossed with the four most frequent directions.
  std::vector<ConditionLabel> grid;
};

/// Parsed run configuration. Unknown keys and every range violation are
/// collected and reported together as a ConfigError.
struct RunConfig {
  DataSource data;
  ModelSpec model;
  std::uint64_t seed = 0;
  std::filesystem::path out = "out";
  std::size_t threads = 1;
  EvalOptions eval;
  KfoldOptions kfold;
};

/// With require_data false a config may omit the data section.
RunConfig parse_run_config(const nlohmann::json& j, bool require_data = true);
/// Reads a JSON file; syntax errors become ConfigError.
nlohmann::json read_config_file(const std::filesystem::path& path);

/// Canonical text of a config, used for hashing.
std::string canonical_config(const nlohmann::json& j);

}  // namespace windgen
