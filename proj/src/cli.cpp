#include "windgen/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "windgen/config.hpp"
#include "windgen/error.hpp"
#include "windgen/eval.hpp"
#include "windgen/log.hpp"
#include "windgen/model.hpp"
#include "windgen/random.hpp"

#ifndef WINDGEN_VERSION
#define WINDGEN_VERSION "0.0.0"
#endif

namespace windgen {

const char* version() noexcept { return WINDGEN_VERSION; }

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::size_t> threads;
  std::optional<std::string> model;
};

struct Run {
  json config;  // effective config, after command-line overrides
  RunConfig parsed;
};

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  const std::string s = buf.str();
  return fnv1a64(s.data(), s.size());
}

std::string hex(std::uint64_t x) {
  std::ostringstream s;
  s << std::hex << std::setw(16) << std::setfill('0') << x;
  return s.str();
}

Run load_run(const CommonFlags& flags, bool need_config) {
  json j = json::object();
  if (!flags.config.empty()) j = read_config_file(flags.config);
  else if (need_config) throw ConfigError({"--config is required for this command"});
  if (!j.is_object()) throw ConfigError({"config: must be an object"});
  if (flags.seed) j["seed"] = *flags.seed;
  if (flags.out) j["out"] = *flags.out;
  if (flags.threads) j["threads"] = *flags.threads;
  if (flags.model) j["model"]["kind"] = *flags.model;
  Run r{j, parse_run_config(j, need_config)};
  return r;
}

fs::path prepare_out(const RunConfig& c) {
  std::error_code ec;
  fs::create_directories(c.out, ec);
  if (ec) throw InputError("cannot create output directory " + c.out.string() + ": " + ec.message());
  return c.out;
}

Dataset load_data(const RunConfig& c) {
  if (c.data.synth) return synth_generate(*c.data.synth);
  if (!c.data.path || c.data.path->empty()) throw InputError("no dataset given (use data.path, data.synth or --data)");
  Dataset d = load_dataset(*c.data.path, c.data.schema);
  if (d.empty()) throw InputError("dataset " + c.data.path->string() + " has no usable rows");
  return d;
}

void write_manifest(const fs::path& dir, const std::string& command, const Run& run,
                    const std::vector<std::string>& outputs, json details = json::object()) {
  json m;
  m["command"] = command;
  m["version"] = version();
  m["seed"] = run.parsed.seed;
  m["config"] = run.config;
  // The output directory and worker count do not change results.
  json effective = run.config;
  effective.erase("out");
  effective.erase("threads");
  const std::string canon = canonical_config(effective);
  m["config_hash"] = hex(fnv1a64(canon.data(), canon.size()));
  json files = json::array();
  for (const auto& name : outputs) files.push_back({{"file", name}, {"fnv1a64", hex(file_hash(dir / name))}});
  m["outputs"] = files;
  m["details"] = std::move(details);
  std::ofstream out(dir / "manifest.json", std::ios::binary);
  if (!out) throw InputError("cannot write " + (dir / "manifest.json").string());
  out << m.dump(2) << '\n';
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<ConditionLabel> default_grid(const Dataset& data) {
  std::vector<std::size_t> counts(DirectionSet::size(), 0);
  for (const auto& p : data.profiles) ++counts[static_cast<std::size_t>(p.condition.direction)];
  std::vector<int> dirs(DirectionSet::size());
  std::iota(dirs.begin(), dirs.end(), 0);
  std::stable_sort(dirs.begin(), dirs.end(), [&](int a, int b) {
    return counts[static_cast<std::size_t>(a)] > counts[static_cast<std::size_t>(b)];
  });
  dirs.resize(4);
  std::sort(dirs.begin(), dirs.end());
  const auto present = labels_present(data);
  std::vector<ConditionLabel> grid;
  for (int bin = 0; bin < static_cast<int>(std::min<std::size_t>(data.speed_bins.count(), 4)); ++bin)
    for (int d : dirs)
      if (std::binary_search(present.begin(), present.end(), ConditionLabel{bin, d})) grid.push_back({bin, d});
  return grid;
}

std::vector<BivariatePoint> bivariate(const std::string& model, std::span<const WindProfile> profiles,
                                      std::size_t limit) {
  std::vector<BivariatePoint> out;
  if (profiles.empty() || limit == 0) return out;
  const std::size_t n = std::min(limit, profiles.size());
  const auto uv = altitude_averaged_uv(profiles);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = i * profiles.size() / n;
    out.push_back({model, profiles[j].condition, uv(static_cast<Eigen::Index>(j), 0), uv(static_cast<Eigen::Index>(j), 1)});
  }
  return out;
}

const std::vector<std::string> kReportFiles = {"kl_by_altitude.csv", "conditional_profiles.csv", "kfold_grid.csv",
                                               "bivariate_samples.csv", "report.json"};

int cmd_synth(const CommonFlags& flags, std::ostream& out) {
  const Run run = load_run(flags, true);
  if (!run.parsed.data.synth) throw ConfigError({"data.synth is required for synth"});
  const Dataset d = synth_generate(*run.parsed.data.synth);
  const fs::path dir = prepare_out(run.parsed);
  write_dataset(dir / "data.csv", d);
  write_manifest(dir, "synth", run, {"data.csv"}, {{"profiles", d.size()}});
  out << "wrote " << d.size() << " profiles to " << (dir / "data.csv").string() << '\n';
  return 0;
}

int cmd_train(const CommonFlags& flags, std::ostream& out) {
  const Run run = load_run(flags, true);
  const RunConfig& c = run.parsed;
  const Dataset d = load_data(c);
  ModelTrainReport report;
  auto model = train_generator(d, c.model, derive_seed(c.seed, 1), &report);
  const fs::path dir = prepare_out(c);
  save_generator(dir / "model.ckpt", *model);
  json tr;
  tr["kind"] = std::string(model_kind_name(c.model.kind));
  tr["training_profiles"] = d.size();
  tr["dropped_rows"] = d.dropped_count;
  if (report.gmm) {
    tr["best_k"] = report.gmm->selection.best_k;
    json curve = json::array();
    for (const auto& [k, b] : report.gmm->selection.bic_curve) curve.push_back({{"k", k}, {"bic", b}});
    tr["bic_curve"] = curve;
    tr["skipped_k"] = report.gmm->selection.skipped;
    tr["pca_explained_variance_ratio"] =
        std::vector<double>(report.gmm->pca_ratio.data(), report.gmm->pca_ratio.data() + report.gmm->pca_ratio.size());
  }
  if (report.dgm) tr["losses"] = report.dgm->losses;
  write_json(dir / "train_report.json", tr);
  write_manifest(dir, "train", run, {"model.ckpt", "train_report.json"});
  out << "trained " << model_kind_name(c.model.kind) << " on " << d.size() << " profiles; wrote "
      << (dir / "model.ckpt").string() << '\n';
  return 0;
}

int cmd_sample(const CommonFlags& flags, const std::string& checkpoint, const std::string& condition,
               std::size_t n, std::ostream& out) {
  const Run run = load_run(flags, false);
  const RunConfig& c = run.parsed;
  const ConditionLabel label = parse_label(condition);
  auto model = load_generator(checkpoint);
  model->set_threads(c.threads);
  if (static_cast<std::size_t>(label.speed_bin) >= model->speed_bins().count())
    throw InputError("speed bin " + std::to_string(label.speed_bin) + " outside the model's " +
                     std::to_string(model->speed_bins().count()) + " bins");
  json details = {{"checkpoint", checkpoint}, {"condition", format_label(label)}, {"n", n}};
  std::vector<WindProfile> profiles;
  if (auto* gmm = dynamic_cast<GmmGenerator*>(model.get())) {
    auto s = conditional_sample(gmm->pipeline(), ConditionQuery::exactly(label), n, c.seed);
    details["acceptance_rate"] = s.acceptance_rate;
    details["draws"] = s.draws;
    profiles = std::move(s.profiles);
  } else {
    profiles = model->generate(label, n, c.seed);
  }
  Dataset ds;
  ds.altitudes = model->altitudes();
  ds.speed_bins = model->speed_bins();
  ds.profiles = std::move(profiles);
  const fs::path dir = prepare_out(c);
  write_dataset(dir / "samples.csv", ds, false);
  details["samples"] = ds.size();
  details["checkpoint_fnv1a64"] = hex(file_hash(checkpoint));
  write_manifest(dir, "sample", run, {"samples.csv"}, details);
  out << "wrote " << ds.size() << " samples for " << format_label(label) << " to " << (dir / "samples.csv").string()
      << '\n';
  return 0;
}

int cmd_eval(const CommonFlags& flags, const std::vector<std::string>& checkpoints, const std::string& data_path,
             std::ostream& out) {
  CommonFlags f = flags;
  const Run run = [&] {
    if (!data_path.empty()) {
      json j = f.config.empty() ? json::object() : read_config_file(f.config);
      j["data"] = {{"path", data_path}};
      f.config.clear();
      if (f.seed) j["seed"] = *f.seed;
      if (f.out) j["out"] = *f.out;
      if (f.threads) j["threads"] = *f.threads;
      return Run{j, parse_run_config(j)};
    }
    return load_run(f, true);
  }();
  const RunConfig& c = run.parsed;
  const Dataset d = load_data(c);

  EvalReport report;
  report.altitudes = d.altitudes;
  report.bivariate_samples = bivariate("data", d.profiles, c.eval.bivariate_points);
  const auto conditions = c.eval.conditions.empty() ? labels_present(d) : c.eval.conditions;
  std::map<std::string, int> seen;
  json models = json::array();
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    auto model = load_generator(checkpoints[i]);
    model->set_threads(c.threads);
    std::string name(model_kind_name(model->kind()));
    if (const int k = ++seen[name]; k > 1) name += "_" + std::to_string(k);
    const auto gen = generate_like(*model, d, derive_seed(c.seed, 2 * i));
    KlCurve curve{name, std::vector<std::optional<double>>(d.altitude_count())};
    if (!gen.empty()) {
      const auto kl = kl_by_altitude(d, gen, 1);
      std::copy(kl.begin(), kl.end(), curve.values.begin());
    }
    report.kl_by_altitude.push_back(std::move(curve));
    auto entries = conditional_report(*model, name, d, conditions, c.eval.n_per_condition, derive_seed(c.seed, 2 * i + 1));
    report.conditional_profiles.insert(report.conditional_profiles.end(), entries.begin(), entries.end());
    auto pts = bivariate(name, gen, c.eval.bivariate_points);
    report.bivariate_samples.insert(report.bivariate_samples.end(), pts.begin(), pts.end());
    models.push_back({{"name", name}, {"checkpoint", checkpoints[i]}, {"fnv1a64", hex(file_hash(checkpoints[i]))},
                      {"generated", gen.size()}});
  }
  report.metadata = {{"command", "eval"}, {"version", version()}, {"seed", c.seed}, {"models", models},
                     {"n_per_condition", c.eval.n_per_condition}, {"profiles", d.size()}};
  const fs::path dir = prepare_out(c);
  emit_report(report, dir);
  write_manifest(dir, "eval", run, kReportFiles, {{"models", models}});
  out << "evaluated " << checkpoints.size() << " model(s) against " << d.size() << " profiles; report in "
      << dir.string() << '\n';
  return 0;
}

int cmd_kfold(const CommonFlags& flags, std::ostream& out) {
  const Run run = load_run(flags, true);
  const RunConfig& c = run.parsed;
  const Dataset d = load_data(c);
  const auto grid = c.kfold.grid.empty() ? default_grid(d) : c.kfold.grid;
  const ModelSpec spec = c.model;
  const ModelTrainer trainer = [&](const Dataset& train, std::uint64_t seed) {
    auto m = train_generator(train, spec, seed);
    m->set_threads(c.threads);
    return m;
  };
  EvalReport report;
  report.altitudes = d.altitudes;
  const std::string name(model_kind_name(spec.kind));
  report.kfold_grid = kfold_generalization(trainer, name, d, grid, c.seed);
  report.metadata = {{"command", "kfold"}, {"version", version()}, {"seed", c.seed}, {"model", name},
                     {"cells", report.kfold_grid.size()}, {"profiles", d.size()}};
  const fs::path dir = prepare_out(c);
  emit_report(report, dir);
  write_manifest(dir, "kfold", run, kReportFiles);
  std::size_t ok = 0;
  for (const auto& cell : report.kfold_grid) ok += cell.status == FoldStatus::kOk;
  out << "k-fold grid: " << ok << " of " << report.kfold_grid.size() << " cells produced samples; report in "
      << dir.string() << '\n';
  return 0;
}

std::string help_footer() {
  std::ostringstream s;
  s << "\nConditions are written DIRECTION:BIN, e.g. SW:2.\nSpeed bins (m/s):";
  const auto bins = SpeedBins::reference();
  for (std::size_t i = 0; i < bins.count(); ++i)
    s << "\n  " << i << ": [" << bins.edges[i] << ", " << bins.edges[i + 1] << (i + 1 == bins.count() ? "+)" : ")");
  s << "\nDirections (wind blowing from):";
  for (auto t : DirectionSet::kTokens) s << ' ' << t;
  s << '\n';
  return s.str();
}

void error_line(std::ostream& err, const std::string& kind, const std::string& message,
                const std::vector<std::string>& issues = {}) {
  json e = {{"error", kind}, {"message", message}};
  if (!issues.empty()) e["issues"] = issues;
  err << e.dump() << '\n';
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional wind-profile generators: GMM, DDPM and flow matching."};
  app.footer(help_footer());
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Log progress to stderr");

  CommonFlags flags;
  std::string checkpoint, condition, data_path;
  std::vector<std::string> checkpoints;
  std::size_t n = 100;
  auto common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("--config", flags.config, "JSON run configuration");
    if (config_required) opt->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "Seed; overrides the config");
    sub->add_option("--out", flags.out, "Output directory; overrides the config");
    sub->add_option("--threads", flags.threads, "Worker cap for sampling")->check(CLI::PositiveNumber);
  };
  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset");
  common(synth, true);
  auto* train = app.add_subcommand("train", "Train a model and write a checkpoint");
  common(train, true);
  train->add_option("--model", flags.model, "gmm, ddpm or fm; overrides the config");
  auto* sample = app.add_subcommand("sample", "Sample profiles for one condition");
  common(sample, false);
  sample->add_option("--checkpoint", checkpoint, "Model checkpoint")->required()->check(CLI::ExistingFile);
  sample->add_option("--condition", condition, "Condition such as SW:2")->required();
  sample->add_option("-n", n, "Number of profiles")->check(CLI::PositiveNumber);
  auto* eval = app.add_subcommand("eval", "Compare one or more models against a dataset");
  common(eval, false);
  eval->add_option("--checkpoint", checkpoints, "Model checkpoint (repeatable)")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data_path, "Dataset CSV; overrides the config's data source");
  auto* kfold = app.add_subcommand("kfold", "Hold out each grid condition in turn");
  common(kfold, true);
  kfold->add_option("--model", flags.model, "gmm, ddpm or fm; overrides the config");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  if (!rev.empty()) rev.pop_back();
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp& e) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    error_line(err, "usage", e.what());
    return kExitUsage;
  }

  set_log_sink([&err](LogLevel level, std::string_view m) {
    err << (level == LogLevel::kWarning ? "warning: " : "") << m << '\n';
  });
  set_log_level(verbose ? LogLevel::kInfo : LogLevel::kWarning);
  struct SinkReset {
    ~SinkReset() {
      set_log_sink(stderr_log_sink());
      set_log_level(LogLevel::kWarning);
    }
  } reset;
  (void)reset;

  try {
    if (*synth) return cmd_synth(flags, out);
    if (*train) return cmd_train(flags, out);
    if (*sample) return cmd_sample(flags, checkpoint, condition, n, out);
    if (*eval) return cmd_eval(flags, checkpoints, data_path, out);
    if (*kfold) return cmd_kfold(flags, out);
  } catch (const ConfigError& e) {
    error_line(err, "config", e.what(), e.issues());
    return kExitUsage;
  } catch (const NoMassError& e) {
    error_line(err, "no_mass", e.what());
    return kExitRuntime;
  } catch (const Error& e) {
    error_line(err, "runtime", e.what());
    return kExitRuntime;
  } catch (const std::exception& e) {
    error_line(err, "internal", e.what());
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace windgen
