#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "windgen/data.hpp"
#include "windgen/model.hpp"
#include "windgen/stats.hpp"

namespace windgen {

inline constexpr std::size_t kLowSupportThreshold = 30;
inline constexpr int kReportSchemaVersion = 1;

/// Per-altitude symmetrized KL of one model against the data.
struct KlCurve {
  std::string model;
  std::vector<std::optional<double>> values;  // nullopt = missing
};

struct ConditionalEntry {
  std::string model;
  ConditionLabel condition;
  std::size_t real_count = 0;
  std::size_t generated_count = 0;
  bool low_support = false;
  std::optional<ProfileStats> real;       // nullopt without real samples
  std::optional<ProfileStats> generated;  // nullopt when the model produced nothing
  std::vector<std::optional<double>> kl;  // per altitude; sets the row count
};

enum class FoldStatus { kOk, kMissing, kFailed };

struct KfoldCell {
  std::string model;
  ConditionLabel condition;
  FoldStatus status = FoldStatus::kOk;
  std::optional<double> kl;
  std::size_t train_count = 0;
  std::size_t test_count = 0;
  std::size_t sample_count = 0;
  bool audit_passed = false;
  std::string error;
};

struct BivariatePoint {
  std::string model;  // "data" for observations
  ConditionLabel condition;
  double u = 0.0;
  double v = 0.0;
};

struct EvalReport {
  std::vector<double> altitudes;
  std::vector<KlCurve> kl_by_altitude;
  std::vector<ConditionalEntry> conditional_profiles;
  std::vector<KfoldCell> kfold_grid;
  std::vector<BivariatePoint> bivariate_samples;
  nlohmann::json metadata = nlohmann::json::object();
};

std::string_view fold_status_name(FoldStatus status) noexcept;

/// symmetrized_kl on the (u, v) points of each altitude.
std::vector<double> kl_by_altitude(const Dataset& real, std::span<const WindProfile> generated, int k = 1);

/// Draws as many samples per label as the dataset holds for that label.
/// Labels the model cannot produce are skipped.
std::vector<WindProfile> generate_like(const Generator& model, const Dataset& reference, std::uint64_t seed);

/// Generated vs real statistics per condition. Labels with fewer than
/// kLowSupportThreshold real samples are flagged, and no-mass outcomes are
/// recorded as missing.
std::vector<ConditionalEntry> conditional_report(const Generator& model, const std::string& model_name,
                                                 const Dataset& data, std::span<const ConditionLabel> conditions,
                                                 std::size_t n_per_condition, std::uint64_t seed);

/// Builds a model from a training split and a fold seed.
using ModelTrainer = std::function<std::unique_ptr<Generator>(const Dataset& train, std::uint64_t seed)>;

/// Seed of the fold holding out `label`; independent of grid order.
std::uint64_t fold_seed(std::uint64_t seed, const ConditionLabel& label);

/// For each label: hold it out, train from scratch on the rest, generate as
/// many samples as the held-out set and compare altitude-averaged (u, v).
std::vector<KfoldCell> kfold_generalization(const ModelTrainer& trainer, const std::string& model_name,
                                            const Dataset& data, std::span<const ConditionLabel> grid,
                                            std::uint64_t seed);

/// Writes kl_by_altitude.csv, conditional_profiles.csv, kfold_grid.csv,
/// bivariate_samples.csv and report.json into `out_dir`.
void emit_report(const EvalReport& report, const std::filesystem::path& out_dir);
/// Parses a directory written by emit_report.
EvalReport read_report(const std::filesystem::path& dir);

}  // namespace windgen
