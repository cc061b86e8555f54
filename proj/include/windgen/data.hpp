#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace windgen {

/// Categorical macroweather condition: speed bin and compass direction index.
struct ConditionLabel {
  int speed_bin = 0;
  int direction = 0;

  auto operator<=>(const ConditionLabel&) const = default;
};

/// Ordered speed bin boundaries in m/s. Bins are left-closed/right-open and
/// speeds at or above the last edge fall into the last bin.
struct SpeedBins {
  std::vector<double> edges;

  /// (0, 2.23, 5.36, 8.05, 15.65) m/s.
  static SpeedBins reference();

  std::size_t count() const noexcept { return edges.empty() ? 0 : edges.size() - 1; }
  int bin_of(double speed) const;
  void validate() const;
};

/// The 16-point compass. Direction tokens name where the wind blows from,
/// index i has bearing i * 22.5 degrees clockwise from north.
class DirectionSet {
 public:
  static constexpr std::size_t kSize = 16;
  static constexpr std::array<std::string_view, kSize> kTokens = {
      "N", "NNE", "NE", "ENE", "E", "ESE", "SE", "SSE",
      "S", "SSW", "SW", "WSW", "W", "WNW", "NW", "NNW"};

  static constexpr std::size_t size() noexcept { return kSize; }
  static std::optional<int> find(std::string_view token) noexcept;
  /// Throws InputError on an unknown token.
  static int index_of(std::string_view token);
  static std::string_view token(int index);
  static double bearing_deg(int index);
  /// Nearest compass index to a bearing in degrees (any real value).
  static int nearest(double bearing_deg) noexcept;
};

/// Velocity components of wind blowing from `bearing_deg` at `speed`:
/// u is east-west, v is north-south.
std::pair<double, double> uv_from_speed_bearing(double speed, double bearing_deg) noexcept;
/// Inverse of uv_from_speed_bearing; bearing in [0, 360).
std::pair<double, double> speed_bearing_from_uv(double u, double v) noexcept;

ConditionLabel encode_condition(double speed, std::string_view direction, const SpeedBins& bins);
ConditionLabel encode_condition(double speed, int direction, const SpeedBins& bins);
/// Numerical alternative to the categorical label: macro (u, v) in m/s.
std::pair<double, double> encode_condition_uv(double speed, std::string_view direction);

/// "SW:1": direction token, colon, speed bin index.
std::string format_label(const ConditionLabel& label);
/// Inverse of format_label. Throws InputError on malformed text.
ConditionLabel parse_label(std::string_view text);

/// One observation: u/v velocity at each altitude plus its macro condition.
struct WindProfile {
  std::vector<double> u;
  std::vector<double> v;
  ConditionLabel condition;
  double macro_speed = 0.0;  // m/s
  std::string timestamp;

  std::size_t altitude_count() const noexcept { return u.size(); }
};

/// Per-element z-score. std entries are clamped below at kMinStd.
struct Scaler {
  static constexpr double kMinStd = 1e-8;
  std::vector<double> mean;
  std::vector<double> std;

  std::size_t size() const noexcept { return mean.size(); }
};

enum class ScaleDirection { kForward, kInverse };

struct Dataset {
  std::vector<WindProfile> profiles;
  std::vector<double> altitudes;  // m, strictly increasing
  SpeedBins speed_bins = SpeedBins::reference();
  std::optional<Scaler> scaler;
  std::size_t dropped_count = 0;

  std::size_t altitude_count() const noexcept { return altitudes.size(); }
  std::size_t size() const noexcept { return profiles.size(); }
  bool empty() const noexcept { return profiles.empty(); }
  /// Checks altitude ordering and per-profile lengths; throws InputError.
  void validate() const;
};

/// Column mapping for CSV ingestion.
struct CsvSchema {
  std::string timestamp_column = "timestamp";  // optional column
  std::string u_prefix = "u_";
  std::string v_prefix = "v_";
  std::string speed_column = "macro_speed";
  std::string direction_column = "macro_direction";
  /// When unset, the altitude count is inferred from the u_ columns.
  std::optional<std::size_t> altitude_count;
  std::pair<double, double> altitude_range{20.0, 250.0};
  SpeedBins speed_bins = SpeedBins::reference();
};

Dataset load_dataset(const std::filesystem::path& path, const CsvSchema& schema = {});
/// Writes the ingestion schema. Without timestamps the column is omitted.
void write_dataset(const std::filesystem::path& path, const Dataset& dataset,
                   bool include_timestamp = true);

std::vector<double> evenly_spaced(double lo, double hi, std::size_t count);

/// Profile as the 2A vector [u_1..u_A, v_1..v_A].
std::vector<double> flatten(const WindProfile& profile);
/// Rows of flatten() for every profile.
Eigen::MatrixXd to_matrix(std::span<const WindProfile> profiles);

Scaler fit_scaler(const Dataset& dataset);
Scaler fit_scaler(const Eigen::MatrixXd& rows);
std::vector<double> apply_scaler(std::span<const double> x, const Scaler& scaler,
                                 ScaleDirection direction);
Eigen::MatrixXd apply_scaler(const Eigen::MatrixXd& rows, const Scaler& scaler,
                             ScaleDirection direction);

/// One mode of the synthetic generator.
struct Regime {
  double weight = 1.0;
  double friction_velocity = 0.4;  // u*, m/s
  double direction_mean = 0.0;     // math angle of the velocity vector, rad
  double direction_spread = 0.0;   // rad
  double roughness = 0.1;          // z0, m
};

struct SynthConfig {
  std::size_t n_samples = 1000;
  std::vector<Regime> regimes{Regime{}};
  double noise_std = 0.5;
  std::size_t altitude_count = 47;
  std::pair<double, double> altitude_range{20.0, 250.0};
  std::uint64_t seed = 0;
  SpeedBins speed_bins = SpeedBins::reference();

  /// Every violation, empty when valid.
  std::vector<std::string> violations() const;
};

inline constexpr double kVonKarman = 0.4;

/// Neutral log-law speed (u*/kappa) ln(z/z0).
double log_law_speed(double friction_velocity, double roughness, double altitude) noexcept;

/// Deterministic given config.seed; sample i uses its own RNG stream.
Dataset synth_generate(const SynthConfig& config);

struct HoldoutSplit {
  Dataset train;
  Dataset test;
  bool holdout_absent = false;
};

HoldoutSplit split_holdout(const Dataset& dataset, const ConditionLabel& holdout);

/// Labels present in the dataset, sorted.
std::vector<ConditionLabel> labels_present(const Dataset& dataset);

}  // namespace windgen
