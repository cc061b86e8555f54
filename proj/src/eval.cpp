#include "windgen/eval.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "text.hpp"
#include "windgen/error.hpp"
#include "windgen/log.hpp"
#include "windgen/random.hpp"

namespace windgen {

namespace {

constexpr std::string_view kMissing = "missing";

std::string opt_number(const std::optional<double>& x) {
  return x ? text::format_double(*x) : std::string(kMissing);
}

std::optional<double> parse_opt_number(std::string_view s, const std::string& file) {
  if (s == kMissing) return std::nullopt;
  auto v = text::parse_double(s);
  if (!v) throw SchemaError(file + ": bad number '" + std::string(s) + "'");
  return v;
}

double parse_number(std::string_view s, const std::string& file) {
  auto v = parse_opt_number(s, file);
  if (!v) throw SchemaError(file + ": unexpected missing value");
  return *v;
}

std::size_t parse_count(std::string_view s, const std::string& file) {
  return static_cast<std::size_t>(parse_number(s, file));
}

// CSV cells are unquoted, so free text loses its commas and line breaks.
std::string cell_text(std::string s) {
  std::replace(s.begin(), s.end(), ',', ';');
  std::replace(s.begin(), s.end(), '\n', ' ');
  std::replace(s.begin(), s.end(), '\r', ' ');
  return s;
}

ConditionLabel parse_label(std::string_view bin, std::string_view dir, const std::string& file) {
  return ConditionLabel{static_cast<int>(parse_number(bin, file)), DirectionSet::index_of(dir)};
}

std::vector<double> per_altitude(std::span<const WindProfile> real, std::span<const WindProfile> gen,
                                 std::size_t altitudes, int k) {
  std::vector<double> out(altitudes);
  for (std::size_t a = 0; a < altitudes; ++a)
    out[a] = symmetrized_kl(uv_at_altitude(real, a), uv_at_altitude(gen, a), k);
  return out;
}

void check_vocabulary(const Generator& model, const Dataset& data) {
  if (model.altitudes().size() != data.altitude_count())
    throw InputError("model has " + std::to_string(model.altitudes().size()) + " altitudes but the dataset has " +
                     std::to_string(data.altitude_count()));
  if (model.speed_bins().edges != data.speed_bins.edges)
    throw InputError("model speed bins differ from the dataset's speed bins");
}

std::vector<WindProfile> with_label(const Dataset& data, const ConditionLabel& label) {
  std::vector<WindProfile> out;
  for (const auto& p : data.profiles)
    if (p.condition == label) out.push_back(p);
  return out;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

CsvTable read_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path.string());
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw SchemaError(path.string() + ": missing header");
  for (auto f : text::split_csv(line)) t.header.emplace_back(f);
  while (std::getline(in, line)) {
    if (text::trim(line).empty()) continue;
    std::vector<std::string> row;
    for (auto f : text::split_csv(line)) row.emplace_back(f);
    if (row.size() != t.header.size())
      throw SchemaError(path.string() + ": row has " + std::to_string(row.size()) + " fields, expected " +
                        std::to_string(t.header.size()));
    t.rows.push_back(std::move(row));
  }
  return t;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  return out;
}

const std::vector<std::string> kKlHeader = {"model", "altitude_index", "altitude_m", "kl"};
const std::vector<std::string> kConditionalHeader = {
    "model", "speed_bin", "direction", "altitude_index", "altitude_m", "real_mean", "real_std",
    "generated_mean", "generated_std", "kl", "real_count", "generated_count", "low_support"};
const std::vector<std::string> kKfoldHeader = {"model", "speed_bin", "direction", "status", "kl",
                                               "train_count", "test_count", "sample_count", "audit", "error"};
const std::vector<std::string> kBivariateHeader = {"model", "speed_bin", "direction", "u", "v"};

void write_header(std::ostream& out, const std::vector<std::string>& header) {
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
}

void expect_header(const CsvTable& t, const std::vector<std::string>& header, const std::string& file) {
  if (t.header != header) throw SchemaError(file + ": unexpected header");
}

}  // namespace

std::string_view fold_status_name(FoldStatus status) noexcept {
  switch (status) {
    case FoldStatus::kOk: return "ok";
    case FoldStatus::kMissing: return "missing";
    case FoldStatus::kFailed: return "failed";
  }
  return "failed";
}

std::vector<double> kl_by_altitude(const Dataset& real, std::span<const WindProfile> generated, int k) {
  if (real.empty() || generated.empty()) throw InputError("kl_by_altitude needs non-empty sample sets");
  for (const auto& p : generated)
    if (p.altitude_count() != real.altitude_count())
      throw InputError("generated profiles have " + std::to_string(p.altitude_count()) +
                       " altitudes, the dataset has " + std::to_string(real.altitude_count()));
  return per_altitude(real.profiles, generated, real.altitude_count(), k);
}

std::vector<WindProfile> generate_like(const Generator& model, const Dataset& reference, std::uint64_t seed) {
  check_vocabulary(model, reference);
  std::map<ConditionLabel, std::size_t> counts;
  for (const auto& p : reference.profiles) ++counts[p.condition];
  std::vector<WindProfile> out;
  for (const auto& [label, count] : counts) {
    try {
      auto g = model.generate(label, count, fold_seed(seed, label));
      out.insert(out.end(), std::make_move_iterator(g.begin()), std::make_move_iterator(g.end()));
    } catch (const NoMassError& e) {
      log_warning(std::string("skipping ") + format_label(label) + ": " + e.what());
    }
  }
  return out;
}

std::vector<ConditionalEntry> conditional_report(const Generator& model, const std::string& model_name,
                                                 const Dataset& data, std::span<const ConditionLabel> conditions,
                                                 std::size_t n_per_condition, std::uint64_t seed) {
  check_vocabulary(model, data);
  std::vector<ConditionalEntry> out;
  for (const auto& label : conditions) {
    if (label.speed_bin < 0 || static_cast<std::size_t>(label.speed_bin) >= data.speed_bins.count() ||
        label.direction < 0 || static_cast<std::size_t>(label.direction) >= DirectionSet::size())
      throw InputError("condition " + format_label(label) + " is outside the vocabulary");
    ConditionalEntry e;
    e.model = model_name;
    e.condition = label;
    const auto real = with_label(data, label);
    e.real_count = real.size();
    e.low_support = real.size() < kLowSupportThreshold;
    if (!real.empty()) e.real = profile_stats(real);
    e.kl.assign(data.altitude_count(), std::nullopt);
    std::vector<WindProfile> gen;
    try {
      gen = model.generate(label, n_per_condition, fold_seed(seed, label));
    } catch (const NoMassError& err) {
      log_warning(err.what());
    }
    e.generated_count = gen.size();
    if (!gen.empty()) {
      e.generated = profile_stats(gen);
      if (real.size() >= 2 && gen.size() >= 2) {
        const auto kl = per_altitude(real, gen, data.altitude_count(), 1);
        std::copy(kl.begin(), kl.end(), e.kl.begin());
      }
    }
    out.push_back(std::move(e));
  }
  return out;
}

std::uint64_t fold_seed(std::uint64_t seed, const ConditionLabel& label) {
  const std::string key = format_label(label);
  return derive_seed(seed, fnv1a64(key.data(), key.size()));
}

std::vector<KfoldCell> kfold_generalization(const ModelTrainer& trainer, const std::string& model_name,
                                            const Dataset& data, std::span<const ConditionLabel> grid,
                                            std::uint64_t seed) {
  const auto present = labels_present(data);
  for (const auto& label : grid)
    if (!std::binary_search(present.begin(), present.end(), label))
      throw InputError("grid label " + format_label(label) + " is not present in the dataset");

  std::vector<KfoldCell> cells;
  for (const auto& label : grid) {
    KfoldCell cell;
    cell.model = model_name;
    cell.condition = label;
    const auto split = split_holdout(data, label);
    cell.train_count = split.train.size();
    cell.test_count = split.test.size();
    cell.audit_passed =
        std::none_of(split.train.profiles.begin(), split.train.profiles.end(),
                     [&](const WindProfile& p) { return p.condition == label; }) &&
        std::all_of(split.test.profiles.begin(), split.test.profiles.end(),
                    [&](const WindProfile& p) { return p.condition == label; }) &&
        split.train.size() + split.test.size() == data.size();
    try {
      if (!cell.audit_passed) throw Error("label audit failed: held-out profiles leaked into training");
      if (split.train.empty()) throw InputError("training split is empty");
      const auto fs = fold_seed(seed, label);
      auto model = trainer(split.train, fs);
      std::vector<WindProfile> gen;
      try {
        gen = model->generate(label, split.test.size(), derive_seed(fs, 1));
      } catch (const NoMassError& err) {
        cell.error = err.what();
      }
      cell.sample_count = gen.size();
      if (gen.empty()) {
        cell.status = FoldStatus::kMissing;
      } else {
        cell.kl = symmetrized_kl(altitude_averaged_uv(gen), altitude_averaged_uv(split.test.profiles), 1);
      }
    } catch (const std::exception& err) {
      cell.status = FoldStatus::kFailed;
      cell.error = err.what();
      log_warning("fold " + format_label(label) + " failed: " + cell.error);
    }
    cells.push_back(std::move(cell));
  }
  return cells;
}

void emit_report(const EvalReport& report, const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw InputError("cannot create " + out_dir.string() + ": " + ec.message());
  auto altitude = [&](std::size_t a) {
    return a < report.altitudes.size() ? text::format_double(report.altitudes[a]) : std::string(kMissing);
  };

  {
    auto out = open_out(out_dir / "kl_by_altitude.csv");
    write_header(out, kKlHeader);
    for (const auto& curve : report.kl_by_altitude)
      for (std::size_t a = 0; a < curve.values.size(); ++a)
        out << curve.model << ',' << a << ',' << altitude(a) << ',' << opt_number(curve.values[a]) << '\n';
  }
  {
    auto out = open_out(out_dir / "conditional_profiles.csv");
    write_header(out, kConditionalHeader);
    for (const auto& e : report.conditional_profiles)
      for (std::size_t a = 0; a < e.kl.size(); ++a) {
        out << e.model << ',' << e.condition.speed_bin << ',' << DirectionSet::token(e.condition.direction) << ','
            << a << ',' << altitude(a) << ','
            << opt_number(e.real ? std::optional(e.real->mean[a]) : std::nullopt) << ','
            << opt_number(e.real ? std::optional(e.real->std[a]) : std::nullopt) << ','
            << opt_number(e.generated ? std::optional(e.generated->mean[a]) : std::nullopt) << ','
            << opt_number(e.generated ? std::optional(e.generated->std[a]) : std::nullopt) << ','
            << opt_number(a < e.kl.size() ? e.kl[a] : std::nullopt) << ',' << e.real_count << ','
            << e.generated_count << ',' << (e.low_support ? 1 : 0) << '\n';
      }
  }
  {
    auto out = open_out(out_dir / "kfold_grid.csv");
    write_header(out, kKfoldHeader);
    for (const auto& c : report.kfold_grid)
      out << c.model << ',' << c.condition.speed_bin << ',' << DirectionSet::token(c.condition.direction) << ','
          << fold_status_name(c.status) << ',' << opt_number(c.kl) << ',' << c.train_count << ',' << c.test_count
          << ',' << c.sample_count << ',' << (c.audit_passed ? "pass" : "fail") << ',' << cell_text(c.error)
          << '\n';
  }
  {
    auto out = open_out(out_dir / "bivariate_samples.csv");
    write_header(out, kBivariateHeader);
    for (const auto& p : report.bivariate_samples)
      out << p.model << ',' << p.condition.speed_bin << ',' << DirectionSet::token(p.condition.direction) << ','
          << text::format_double(p.u) << ',' << text::format_double(p.v) << '\n';
  }
  {
    nlohmann::json j;
    j["schema_version"] = kReportSchemaVersion;
    j["altitudes"] = report.altitudes;
    j["metadata"] = report.metadata;
    auto out = open_out(out_dir / "report.json");
    out << j.dump(2) << '\n';
  }
}

EvalReport read_report(const std::filesystem::path& dir) {
  EvalReport r;
  {
    std::ifstream in(dir / "report.json");
    if (!in) throw InputError("cannot open " + (dir / "report.json").string());
    nlohmann::json j;
    try {
      in >> j;
      if (j.at("schema_version").get<int>() != kReportSchemaVersion)
        throw SchemaError("unsupported report schema version");
      r.altitudes = j.at("altitudes").get<std::vector<double>>();
      r.metadata = j.at("metadata");
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("malformed report.json: ") + e.what());
    }
  }
  {
    const std::string file = "kl_by_altitude.csv";
    const auto t = read_table(dir / file);
    expect_header(t, kKlHeader, file);
    for (const auto& row : t.rows) {
      if (r.kl_by_altitude.empty() || r.kl_by_altitude.back().model != row[0])
        r.kl_by_altitude.push_back(KlCurve{row[0], {}});
      r.kl_by_altitude.back().values.push_back(parse_opt_number(row[3], file));
    }
  }
  {
    const std::string file = "conditional_profiles.csv";
    const auto t = read_table(dir / file);
    expect_header(t, kConditionalHeader, file);
    for (const auto& row : t.rows) {
      const auto label = parse_label(row[1], row[2], file);
      if (parse_count(row[3], file) == 0) {
        ConditionalEntry e;
        e.model = row[0];
        e.condition = label;
        e.real_count = parse_count(row[10], file);
        e.generated_count = parse_count(row[11], file);
        e.low_support = row[12] == "1";
        if (row[5] != kMissing) e.real = ProfileStats{};
        if (row[7] != kMissing) e.generated = ProfileStats{};
        r.conditional_profiles.push_back(std::move(e));
      }
      auto& e = r.conditional_profiles.back();
      if (e.real) {
        e.real->mean.push_back(parse_number(row[5], file));
        e.real->std.push_back(parse_number(row[6], file));
      }
      if (e.generated) {
        e.generated->mean.push_back(parse_number(row[7], file));
        e.generated->std.push_back(parse_number(row[8], file));
      }
      e.kl.push_back(parse_opt_number(row[9], file));
    }
  }
  {
    const std::string file = "kfold_grid.csv";
    const auto t = read_table(dir / file);
    expect_header(t, kKfoldHeader, file);
    for (const auto& row : t.rows) {
      KfoldCell c;
      c.model = row[0];
      c.condition = parse_label(row[1], row[2], file);
      c.status = row[3] == "ok" ? FoldStatus::kOk : row[3] == "missing" ? FoldStatus::kMissing : FoldStatus::kFailed;
      c.kl = parse_opt_number(row[4], file);
      c.train_count = parse_count(row[5], file);
      c.test_count = parse_count(row[6], file);
      c.sample_count = parse_count(row[7], file);
      c.audit_passed = row[8] == "pass";
      c.error = row[9];
      r.kfold_grid.push_back(std::move(c));
    }
  }
  {
    const std::string file = "bivariate_samples.csv";
    const auto t = read_table(dir / file);
    expect_header(t, kBivariateHeader, file);
    for (const auto& row : t.rows)
      r.bivariate_samples.push_back(
          BivariatePoint{row[0], parse_label(row[1], row[2], file), parse_number(row[3], file), parse_number(row[4], file)});
  }
  return r;
}

}  // namespace windgen
