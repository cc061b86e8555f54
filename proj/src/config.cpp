#include "windgen/config.hpp"

#include <fstream>
#include <numbers>
#include <set>

#include "windgen/error.hpp"

namespace windgen {

using nlohmann::json;

namespace {

// Walks one JSON object, recording type errors and unknown keys.
class Reader {
 public:
  Reader(const json* node, std::string path, std::vector<std::string>& errors)
      : node_(node), path_(std::move(path)), errors_(errors) {
    if (node_ && !node_->is_object()) {
      fail("must be an object");
      node_ = nullptr;
    }
  }
  Reader(const Reader&) = delete;

  ~Reader() {
    if (!node_) return;
    for (const auto& [key, value] : node_->items())
      if (!seen_.count(key)) errors_.push_back(where(key) + ": unknown key");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return node_ && node_->contains(key);
  }

  const json* raw(const std::string& key) { return has(key) ? &node_->at(key) : nullptr; }

  Reader child(const std::string& key) { return Reader(raw(key), where(key), errors_); }

  void get(const std::string& key, double& dst) {
    if (auto* v = raw(key)) {
      if (v->is_number()) dst = v->get<double>();
      else fail(key, "must be a number");
    }
  }
  void get(const std::string& key, std::size_t& dst) {
    if (auto* v = raw(key)) {
      if (v->is_number_integer() && v->get<std::int64_t>() >= 0) dst = v->get<std::size_t>();
      else fail(key, "must be a non-negative integer");
    }
  }
  void get(const std::string& key, int& dst) {
    if (auto* v = raw(key)) {
      if (v->is_number_integer()) dst = v->get<int>();
      else fail(key, "must be an integer");
    }
  }
  void get(const std::string& key, bool& dst) {
    if (auto* v = raw(key)) {
      if (v->is_boolean()) dst = v->get<bool>();
      else fail(key, "must be true or false");
    }
  }
  void get(const std::string& key, std::string& dst) {
    if (auto* v = raw(key)) {
      if (v->is_string()) dst = v->get<std::string>();
      else fail(key, "must be a string");
    }
  }
  void get(const std::string& key, std::vector<double>& dst) {
    if (auto* v = raw(key)) {
      if (v->is_array() && std::all_of(v->begin(), v->end(), [](const json& x) { return x.is_number(); }))
        dst = v->get<std::vector<double>>();
      else fail(key, "must be an array of numbers");
    }
  }
  void get(const std::string& key, std::pair<double, double>& dst) {
    std::vector<double> v;
    if (!has(key)) return;
    get(key, v);
    if (v.size() == 2) dst = {v[0], v[1]};
    else fail(key, "must be a [low, high] pair");
  }
  void get_labels(const std::string& key, std::vector<ConditionLabel>& dst) {
    if (auto* v = raw(key)) {
      if (!v->is_array()) return fail(key, "must be an array of DIRECTION:BIN strings");
      for (const auto& item : *v) {
        if (!item.is_string()) {
          fail(key, "must be an array of DIRECTION:BIN strings");
          continue;
        }
        try {
          dst.push_back(parse_label(item.get<std::string>()));
        } catch (const InputError& e) {
          fail(key, e.what());
        }
      }
    }
  }

  void fail(const std::string& key, const std::string& what) { errors_.push_back(where(key) + ": " + what); }
  void fail(const std::string& what) { errors_.push_back((path_.empty() ? "config" : path_) + ": " + what); }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  bool present() const noexcept { return node_ != nullptr; }

 private:
  const json* node_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

void read_synth(Reader& r, SynthConfig& s) {
  r.get("n_samples", s.n_samples);
  r.get("noise_std", s.noise_std);
  r.get("altitude_count", s.altitude_count);
  r.get("altitude_range", s.altitude_range);
  r.get("speed_bins", s.speed_bins.edges);
  if (auto* regimes = r.raw("regimes")) {
    if (!regimes->is_array()) {
      r.fail("regimes", "must be an array of objects");
    } else {
      s.regimes.clear();
      std::vector<std::string> errors;
      for (std::size_t i = 0; i < regimes->size(); ++i) {
        Reader g(&(*regimes)[i], r.where("regimes[" + std::to_string(i) + "]"), errors);
        Regime reg;
        double mean_deg = reg.direction_mean * 180.0 / std::numbers::pi;
        double spread_deg = reg.direction_spread * 180.0 / std::numbers::pi;
        g.get("weight", reg.weight);
        g.get("friction_velocity", reg.friction_velocity);
        g.get("direction_mean_deg", mean_deg);
        g.get("direction_spread_deg", spread_deg);
        g.get("roughness", reg.roughness);
        reg.direction_mean = mean_deg * std::numbers::pi / 180.0;
        reg.direction_spread = spread_deg * std::numbers::pi / 180.0;
        s.regimes.push_back(reg);
      }
      for (auto& e : errors) r.fail(e);
    }
  }
}

void read_schema(Reader& r, CsvSchema& s) {
  r.get("timestamp_column", s.timestamp_column);
  r.get("u_prefix", s.u_prefix);
  r.get("v_prefix", s.v_prefix);
  r.get("speed_column", s.speed_column);
  r.get("direction_column", s.direction_column);
  if (r.has("altitude_count")) {
    std::size_t a = 0;
    r.get("altitude_count", a);
    s.altitude_count = a;
  }
  r.get("altitude_range", s.altitude_range);
  r.get("speed_bins", s.speed_bins.edges);
}

void read_model(Reader& r, ModelSpec& m, std::vector<std::string>& errors) {
  std::string kind = std::string(model_kind_name(m.kind));
  r.get("kind", kind);
  try {
    m.kind = parse_model_kind(kind);
  } catch (const InputError& e) {
    r.fail("kind", e.what());
  }
  {
    Reader g = r.child("gmm");
    auto pc = static_cast<std::size_t>(m.gmm.pca_components);
    g.get("pca_components", pc);
    m.gmm.pca_components = static_cast<Eigen::Index>(pc);
    if (g.has("k_max")) {
      std::size_t k_max = 0;
      g.get("k_max", k_max);
      m.gmm.k_grid.clear();
      for (std::size_t k = 1; k <= k_max; ++k) m.gmm.k_grid.push_back(static_cast<int>(k));
    }
    Reader em = g.child("em");
    em.get("tol", m.gmm.em.tol);
    em.get("max_iter", m.gmm.em.max_iter);
    em.get("restarts", m.gmm.em.restarts);
    em.get("reg_covar", m.gmm.em.reg_covar);
  }
  auto& d = m.dgm;
  {
    Reader u = r.child("unet");
    u.get("base_width", d.base_width);
    u.get("depth", d.depth);
    u.get("time_embed_dim", d.time_embed_dim);
    u.get("groups", d.groups);
  }
  {
    Reader s = r.child("ddpm");
    s.get("timesteps", d.timesteps);
    s.get("beta_start", d.beta_start);
    s.get("beta_end", d.beta_end);
  }
  {
    Reader f = r.child("flow");
    f.get("sigma", d.flow.sigma);
    f.get("n_steps", d.flow.n_steps);
    std::string integrator(integrator_name(d.flow.integrator));
    f.get("integrator", integrator);
    try {
      d.flow.integrator = parse_integrator(integrator);
    } catch (const InputError& e) {
      f.fail("integrator", e.what());
    }
  }
  {
    Reader t = r.child("train");
    t.get("steps", d.train.steps);
    t.get("batch_size", d.train.batch_size);
    t.get("learning_rate", d.train.learning_rate);
    t.get("cosine_decay", d.train.cosine_decay);
    t.get("final_lr_fraction", d.train.final_lr_fraction);
  }
  if (m.kind == ModelKind::kGmm) {
    if (m.gmm.pca_components < 1) errors.push_back("model.gmm.pca_components must be positive");
    if (m.gmm.k_grid.empty()) errors.push_back("model.gmm.k_max must be positive");
    if (!(m.gmm.em.tol > 0)) errors.push_back("model.gmm.em.tol must be positive");
    if (m.gmm.em.max_iter < 1) errors.push_back("model.gmm.em.max_iter must be positive");
    if (m.gmm.em.restarts < 1) errors.push_back("model.gmm.em.restarts must be positive");
    if (!(m.gmm.em.reg_covar >= 0)) errors.push_back("model.gmm.em.reg_covar must be non-negative");
  } else {
    DgmSpec check = d;
    check.kind = m.kind;
    for (auto& v : check.violations()) errors.push_back("model: " + v);
  }
}

}  // namespace

RunConfig parse_run_config(const json& j, bool require_data) {
  std::vector<std::string> errors;
  RunConfig c;
  {
    Reader root(&j, "", errors);
    static_assert(std::is_same_v<std::uint64_t, std::size_t>);
    root.get("seed", c.seed);
    std::string out = c.out.string();
    root.get("out", out);
    c.out = out;
    root.get("threads", c.threads);
    if (c.threads == 0) errors.push_back("threads must be positive");

    {
      Reader d = root.child("data");
      const bool has_path = d.has("path");
      const bool has_synth = d.has("synth");
      if (has_path && has_synth) errors.push_back("data: data.path and data.synth are mutually exclusive");
      else if (!has_path && !has_synth && require_data) errors.push_back("data: one of data.path and data.synth is required");
      if (has_path) {
        std::string p;
        d.get("path", p);
        c.data.path = p;
      }
      if (has_synth) {
        c.data.synth = SynthConfig{};
        Reader s = d.child("synth");
        read_synth(s, *c.data.synth);
        c.data.synth->seed = c.seed;
        for (auto& v : c.data.synth->violations()) errors.push_back("data.synth: " + v);
      }
      Reader sch = d.child("schema");
      read_schema(sch, c.data.schema);
      try {
        c.data.schema.speed_bins.validate();
      } catch (const InputError& e) {
        errors.push_back(std::string("data.schema.speed_bins: ") + e.what());
      }
    }
    {
      Reader m = root.child("model");
      read_model(m, c.model, errors);
    }
    {
      Reader e = root.child("eval");
      e.get("n_per_condition", c.eval.n_per_condition);
      e.get_labels("conditions", c.eval.conditions);
      e.get("bivariate_points", c.eval.bivariate_points);
      if (c.eval.n_per_condition == 0) errors.push_back("eval.n_per_condition must be positive");
    }
    {
      Reader k = root.child("kfold");
      k.get_labels("grid", c.kfold.grid);
    }
  }
  if (!errors.empty()) throw ConfigError(std::move(errors));
  return c;
}

json read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError({"cannot open config file " + path.string()});
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError({path.string() + ": " + e.what()});
  }
}

std::string canonical_config(const json& j) { return j.dump(); }

}  // namespace windgen
