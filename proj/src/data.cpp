#include "windgen/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <unordered_map>

#include "text.hpp"
#include "windgen/error.hpp"
#include "windgen/random.hpp"

namespace windgen {

using text::format_double;
using text::parse_double;
using text::split_csv;
using text::trim;

SpeedBins SpeedBins::reference() { return SpeedBins{{0.0, 2.23, 5.36, 8.05, 15.65}}; }

void SpeedBins::validate() const {
  if (edges.size() < 2) throw InputError("speed bins need at least two edges");
  if (edges.front() != 0.0) throw InputError("first speed bin edge must be 0");
  for (std::size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1])) throw InputError("speed bin edges must be strictly increasing");
}

int SpeedBins::bin_of(double speed) const {
  if (!(speed >= 0.0)) throw InputError("speed must be non-negative, got " + format_double(speed));
  // upper_bound gives the first edge > speed; the bin is the one before it.
  auto it = std::upper_bound(edges.begin(), edges.end(), speed);
  auto idx = static_cast<int>(it - edges.begin()) - 1;
  return std::min(idx, static_cast<int>(count()) - 1);
}

std::optional<int> DirectionSet::find(std::string_view token) noexcept {
  for (std::size_t i = 0; i < kSize; ++i)
    if (kTokens[i] == token) return static_cast<int>(i);
  return std::nullopt;
}

int DirectionSet::index_of(std::string_view token) {
  auto idx = find(token);
  if (!idx) throw InputError("unknown compass direction '" + std::string(token) + "'");
  return *idx;
}

std::string_view DirectionSet::token(int index) {
  if (index < 0 || index >= static_cast<int>(kSize))
    throw InputError("direction index out of range: " + std::to_string(index));
  return kTokens[static_cast<std::size_t>(index)];
}

double DirectionSet::bearing_deg(int index) { return 360.0 / kSize * index; }

int DirectionSet::nearest(double bearing) noexcept {
  double b = std::fmod(bearing, 360.0);
  if (b < 0) b += 360.0;
  auto idx = static_cast<long>(std::lround(b / (360.0 / kSize)));
  return static_cast<int>(idx % static_cast<long>(kSize));
}

std::pair<double, double> uv_from_speed_bearing(double speed, double bearing_deg) noexcept {
  const double b = bearing_deg * std::numbers::pi / 180.0;
  return {-speed * std::sin(b), -speed * std::cos(b)};
}

std::pair<double, double> speed_bearing_from_uv(double u, double v) noexcept {
  double b = std::atan2(-u, -v) * 180.0 / std::numbers::pi;
  if (b < 0) b += 360.0;
  if (b >= 360.0) b -= 360.0;
  return {std::hypot(u, v), b};
}

ConditionLabel encode_condition(double speed, std::string_view direction, const SpeedBins& bins) {
  return encode_condition(speed, DirectionSet::index_of(direction), bins);
}

ConditionLabel encode_condition(double speed, int direction, const SpeedBins& bins) {
  if (direction < 0 || direction >= static_cast<int>(DirectionSet::size()))
    throw InputError("direction index out of range: " + std::to_string(direction));
  return ConditionLabel{bins.bin_of(speed), direction};
}

std::pair<double, double> encode_condition_uv(double speed, std::string_view direction) {
  if (!(speed >= 0.0)) throw InputError("speed must be non-negative");
  return uv_from_speed_bearing(speed, DirectionSet::bearing_deg(DirectionSet::index_of(direction)));
}

std::string format_label(const ConditionLabel& label) {
  return std::string(DirectionSet::token(label.direction)) + ":" + std::to_string(label.speed_bin);
}

ConditionLabel parse_label(std::string_view text) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos)
    throw InputError("condition '" + std::string(text) + "' must look like DIRECTION:BIN, e.g. SW:2");
  const auto dir = DirectionSet::find(text.substr(0, colon));
  if (!dir) throw InputError("unknown direction in condition '" + std::string(text) + "'");
  const auto bin_text = text.substr(colon + 1);
  int bin = -1;
  const auto [ptr, ec] = std::from_chars(bin_text.data(), bin_text.data() + bin_text.size(), bin);
  if (ec != std::errc() || ptr != bin_text.data() + bin_text.size() || bin < 0)
    throw InputError("bad speed bin in condition '" + std::string(text) + "'");
  return ConditionLabel{bin, *dir};
}

void Dataset::validate() const {
  if (altitudes.empty()) throw InputError("dataset has no altitudes");
  for (std::size_t i = 1; i < altitudes.size(); ++i)
    if (!(altitudes[i] > altitudes[i - 1])) throw InputError("altitudes must be strictly increasing");
  for (const auto& p : profiles)
    if (p.u.size() != altitudes.size() || p.v.size() != altitudes.size())
      throw InputError("profile length does not match altitude count");
}

std::vector<double> evenly_spaced(double lo, double hi, std::size_t count) {
  std::vector<double> out(count);
  if (count == 1) {
    out[0] = lo;
    return out;
  }
  for (std::size_t i = 0; i < count; ++i)
    out[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(count - 1);
  return out;
}

Dataset load_dataset(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  std::string header_line;
  if (!std::getline(in, header_line) || trim(header_line).empty())
    throw EmptyFileError("empty file: " + path.string());
  schema.speed_bins.validate();

  const auto header = split_csv(header_line);
  std::unordered_map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) col.emplace(std::string(header[i]), i);
  auto require = [&](const std::string& name) {
    auto it = col.find(name);
    if (it == col.end()) throw SchemaError("missing column '" + name + "'");
    return it->second;
  };

  std::size_t count = 0;
  if (schema.altitude_count) {
    count = *schema.altitude_count;
  } else {
    while (col.count(schema.u_prefix + std::to_string(count + 1))) ++count;
  }
  if (count == 0) throw SchemaError("missing column '" + schema.u_prefix + "1'");
  std::vector<std::size_t> u_cols(count), v_cols(count);
  for (std::size_t a = 0; a < count; ++a) {
    u_cols[a] = require(schema.u_prefix + std::to_string(a + 1));
    v_cols[a] = require(schema.v_prefix + std::to_string(a + 1));
  }
  const auto speed_col = require(schema.speed_column);
  const auto dir_col = require(schema.direction_column);
  // Generated sample files carry no timestamp column.
  const auto ts_col = col.find(schema.timestamp_column);

  Dataset ds;
  ds.altitudes = evenly_spaced(schema.altitude_range.first, schema.altitude_range.second, count);
  ds.speed_bins = schema.speed_bins;

  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_csv(line);
    if (fields.size() != header.size())
      throw RowError(row, "expected " + std::to_string(header.size()) + " fields, got " +
                              std::to_string(fields.size()));
    WindProfile p;
    p.u.resize(count);
    p.v.resize(count);
    bool finite = true;
    auto number = [&](std::size_t c) {
      auto v = parse_double(fields[c]);
      if (!v) throw RowError(row, "cannot parse '" + std::string(fields[c]) + "' in column '" +
                                      std::string(header[c]) + "'");
      if (!std::isfinite(*v)) finite = false;
      return *v;
    };
    for (std::size_t a = 0; a < count; ++a) {
      p.u[a] = number(u_cols[a]);
      p.v[a] = number(v_cols[a]);
    }
    p.macro_speed = number(speed_col);
    auto dir = DirectionSet::find(fields[dir_col]);
    if (!dir) throw RowError(row, "unknown direction token '" + std::string(fields[dir_col]) + "'");
    if (!finite) {
      ++ds.dropped_count;
      continue;
    }
    if (p.macro_speed < 0) throw RowError(row, "negative macro_speed");
    p.condition = encode_condition(p.macro_speed, *dir, ds.speed_bins);
    if (ts_col != col.end()) p.timestamp = std::string(fields[ts_col->second]);
    ds.profiles.push_back(std::move(p));
  }
  if (row == 0) throw EmptyFileError("no data rows in " + path.string());
  return ds;
}

void write_dataset(const std::filesystem::path& path, const Dataset& dataset, bool include_timestamp) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  const std::size_t count = dataset.altitude_count();
  if (include_timestamp) out << "timestamp,";
  for (std::size_t a = 1; a <= count; ++a) out << "u_" << a << ',';
  for (std::size_t a = 1; a <= count; ++a) out << "v_" << a << ',';
  out << "macro_speed,macro_direction\n";
  for (std::size_t i = 0; i < dataset.profiles.size(); ++i) {
    const auto& p = dataset.profiles[i];
    if (include_timestamp) out << (p.timestamp.empty() ? std::to_string(i) : p.timestamp) << ',';
    for (double x : p.u) out << format_double(x) << ',';
    for (double x : p.v) out << format_double(x) << ',';
    out << format_double(p.macro_speed) << ',' << DirectionSet::token(p.condition.direction) << '\n';
  }
  if (!out) throw Error("failed writing " + path.string());
}

std::vector<double> flatten(const WindProfile& profile) {
  std::vector<double> x(profile.u);
  x.insert(x.end(), profile.v.begin(), profile.v.end());
  return x;
}

Eigen::MatrixXd to_matrix(std::span<const WindProfile> profiles) {
  if (profiles.empty()) return {};
  const auto a = static_cast<Eigen::Index>(profiles.front().u.size());
  Eigen::MatrixXd m(static_cast<Eigen::Index>(profiles.size()), 2 * a);
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    for (Eigen::Index j = 0; j < a; ++j) {
      m(r, j) = profiles[i].u[static_cast<std::size_t>(j)];
      m(r, a + j) = profiles[i].v[static_cast<std::size_t>(j)];
    }
  }
  return m;
}

Scaler fit_scaler(const Eigen::MatrixXd& rows) {
  if (rows.rows() == 0) throw InputError("cannot fit a scaler on an empty dataset");
  Scaler s;
  const auto n = static_cast<double>(rows.rows());
  s.mean.resize(static_cast<std::size_t>(rows.cols()));
  s.std.resize(s.mean.size());
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    const double mu = rows.col(j).sum() / n;
    const double var = (rows.col(j).array() - mu).square().sum() / n;
    s.mean[static_cast<std::size_t>(j)] = mu;
    s.std[static_cast<std::size_t>(j)] = std::max(std::sqrt(var), Scaler::kMinStd);
  }
  return s;
}

Scaler fit_scaler(const Dataset& dataset) {
  if (dataset.empty()) throw InputError("cannot fit a scaler on an empty dataset");
  return fit_scaler(to_matrix(dataset.profiles));
}

std::vector<double> apply_scaler(std::span<const double> x, const Scaler& scaler,
                                 ScaleDirection direction) {
  if (x.size() != scaler.size())
    throw InputError("scaler expects " + std::to_string(scaler.size()) + " elements, got " +
                     std::to_string(x.size()));
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    out[i] = direction == ScaleDirection::kForward ? (x[i] - scaler.mean[i]) / scaler.std[i]
                                                   : x[i] * scaler.std[i] + scaler.mean[i];
  return out;
}

Eigen::MatrixXd apply_scaler(const Eigen::MatrixXd& rows, const Scaler& scaler,
                             ScaleDirection direction) {
  if (static_cast<std::size_t>(rows.cols()) != scaler.size())
    throw InputError("scaler width mismatch");
  Eigen::MatrixXd out(rows.rows(), rows.cols());
  for (Eigen::Index j = 0; j < rows.cols(); ++j) {
    const double mu = scaler.mean[static_cast<std::size_t>(j)];
    const double sd = scaler.std[static_cast<std::size_t>(j)];
    if (direction == ScaleDirection::kForward)
      out.col(j) = (rows.col(j).array() - mu) / sd;
    else
      out.col(j) = rows.col(j).array() * sd + mu;
  }
  return out;
}

std::vector<std::string> SynthConfig::violations() const {
  std::vector<std::string> v;
  if (n_samples == 0) v.push_back("n_samples must be positive");
  if (regimes.empty()) v.push_back("at least one regime is required");
  double total = 0.0;
  for (std::size_t i = 0; i < regimes.size(); ++i) {
    const auto& r = regimes[i];
    const std::string tag = "regime " + std::to_string(i) + ": ";
    if (!(r.weight > 0)) v.push_back(tag + "weight must be positive");
    if (!(r.roughness > 0)) v.push_back(tag + "roughness z0 must be positive");
    if (!(r.friction_velocity >= 0)) v.push_back(tag + "friction velocity must be non-negative");
    if (!(r.direction_spread >= 0)) v.push_back(tag + "direction spread must be non-negative");
    if (!(altitude_range.first > r.roughness)) v.push_back(tag + "minimum altitude must exceed z0");
    total += r.weight;
  }
  if (!regimes.empty() && std::abs(total - 1.0) > 1e-9) v.push_back("regime weights must sum to 1");
  if (!(noise_std >= 0)) v.push_back("noise_std must be non-negative");
  if (altitude_count == 0) v.push_back("altitude_count must be positive");
  if (altitude_count > 1 && !(altitude_range.second > altitude_range.first))
    v.push_back("altitude range must be increasing");
  try {
    speed_bins.validate();
  } catch (const InputError& e) {
    v.push_back(e.what());
  }
  return v;
}

double log_law_speed(double friction_velocity, double roughness, double altitude) noexcept {
  return friction_velocity / kVonKarman * std::log(altitude / roughness);
}

Dataset synth_generate(const SynthConfig& config) {
  if (auto v = config.violations(); !v.empty()) {
    std::string msg = "invalid synth config:";
    for (const auto& s : v) msg += " " + s + ";";
    throw InputError(msg);
  }
  Dataset ds;
  ds.altitudes = evenly_spaced(config.altitude_range.first, config.altitude_range.second,
                               config.altitude_count);
  ds.speed_bins = config.speed_bins;
  ds.profiles.resize(config.n_samples);
  const std::size_t a_count = config.altitude_count;

  std::vector<double> cumulative;
  double acc = 0.0;
  for (const auto& r : config.regimes) cumulative.push_back(acc += r.weight);

  for (std::size_t i = 0; i < config.n_samples; ++i) {
    Rng rng = make_rng(config.seed, i);
    std::uniform_real_distribution<double> unif(0.0, acc);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double pick = unif(rng);
    auto r_idx = static_cast<std::size_t>(
        std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
    r_idx = std::min(r_idx, config.regimes.size() - 1);
    const auto& regime = config.regimes[r_idx];
    const double theta = regime.direction_mean + regime.direction_spread * normal(rng);
    const double c = std::cos(theta), s = std::sin(theta);

    auto& p = ds.profiles[i];
    p.u.resize(a_count);
    p.v.resize(a_count);
    double speed_sum = 0.0;
    for (std::size_t a = 0; a < a_count; ++a) {
      const double speed = log_law_speed(regime.friction_velocity, regime.roughness, ds.altitudes[a]);
      p.u[a] = speed * c + config.noise_std * normal(rng);
      p.v[a] = speed * s + config.noise_std * normal(rng);
      speed_sum += std::hypot(p.u[a], p.v[a]);
    }
    p.macro_speed = speed_sum / static_cast<double>(a_count);
    // theta is the direction the wind blows toward; the label names its origin.
    const double bearing = 270.0 - theta * 180.0 / std::numbers::pi;
    p.condition = encode_condition(p.macro_speed, DirectionSet::nearest(bearing), ds.speed_bins);
    p.timestamp = std::to_string(i);
  }
  return ds;
}

HoldoutSplit split_holdout(const Dataset& dataset, const ConditionLabel& holdout) {
  HoldoutSplit split;
  split.train.altitudes = split.test.altitudes = dataset.altitudes;
  split.train.speed_bins = split.test.speed_bins = dataset.speed_bins;
  split.train.scaler = split.test.scaler = dataset.scaler;
  for (const auto& p : dataset.profiles)
    (p.condition == holdout ? split.test : split.train).profiles.push_back(p);
  split.holdout_absent = split.test.empty();
  return split;
}

std::vector<ConditionLabel> labels_present(const Dataset& dataset) {
  std::vector<ConditionLabel> labels;
  for (const auto& p : dataset.profiles) labels.push_back(p.condition);
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  return labels;
}

}  // namespace windgen
