#include "windgen/model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "windgen/error.hpp"
#include "windgen/log.hpp"
#include "windgen/nn/adam.hpp"
#include "windgen/random.hpp"

namespace windgen {

using nlohmann::json;

namespace {

constexpr std::string_view kKindKey = "kind";

nn::Tensor vector_tensor(const std::vector<double>& v) { return nn::Tensor({v.size()}, v); }

nn::Tensor eigen_tensor(const Eigen::MatrixXd& m) {
  nn::Tensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) t[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  return t;
}

nn::Tensor eigen_tensor(const Eigen::VectorXd& v) {
  return nn::Tensor({static_cast<std::size_t>(v.size())}, std::vector<double>(v.data(), v.data() + v.size()));
}

Eigen::MatrixXd tensor_matrix(const nn::Tensor& t) {
  if (t.rank() != 2) throw SchemaError("expected a matrix tensor, got " + nn::shape_string(t.shape()));
  Eigen::MatrixXd m(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = t[static_cast<std::size_t>(r * m.cols() + c)];
  return m;
}

Eigen::VectorXd tensor_vector(const nn::Tensor& t) {
  return Eigen::Map<const Eigen::VectorXd>(t.data(), static_cast<Eigen::Index>(t.size()));
}

void put_context(json& meta, const std::vector<double>& altitudes, const SpeedBins& bins) {
  meta["altitudes"] = altitudes;
  meta["speed_bins"] = bins.edges;
  meta["directions"] = std::vector<std::string>(DirectionSet::kTokens.begin(), DirectionSet::kTokens.end());
}

void check_directions(const json& meta) {
  const auto expected = std::vector<std::string>(DirectionSet::kTokens.begin(), DirectionSet::kTokens.end());
  if (meta.at("directions").get<std::vector<std::string>>() != expected)
    throw SchemaError("checkpoint direction vocabulary does not match this build");
}

Scaler read_scaler(const Checkpoint& ckpt) {
  Scaler s;
  s.mean = ckpt.tensor("scaler.mean").storage();
  s.std = ckpt.tensor("scaler.std").storage();
  if (s.mean.size() != s.std.size()) throw SchemaError("scaler mean/std lengths differ");
  return s;
}

json unet_json(const nn::UNetConfig& c) {
  return {{"in_channels", c.in_channels},   {"sequence_length", c.sequence_length},
          {"base_width", c.base_width},     {"depth", c.depth},
          {"speed_classes", c.speed_classes}, {"direction_classes", c.direction_classes},
          {"time_embed_dim", c.time_embed_dim}, {"groups", c.groups},
          {"zero_init_output", c.zero_init_output}};
}

nn::UNetConfig unet_from_json(const json& j) {
  nn::UNetConfig c;
  c.in_channels = j.at("in_channels").get<std::size_t>();
  c.sequence_length = j.at("sequence_length").get<std::size_t>();
  c.base_width = j.at("base_width").get<std::size_t>();
  c.depth = j.at("depth").get<std::size_t>();
  c.speed_classes = j.at("speed_classes").get<std::size_t>();
  c.direction_classes = j.at("direction_classes").get<std::size_t>();
  c.time_embed_dim = j.at("time_embed_dim").get<std::size_t>();
  c.groups = j.at("groups").get<std::size_t>();
  c.zero_init_output = j.at("zero_init_output").get<bool>();
  return c;
}

NoiseSchedule schedule_from_betas(const std::vector<double>& beta) {
  NoiseSchedule s;
  s.T = beta.size();
  double prod = 1.0;
  for (double b : beta) {
    prod *= 1.0 - b;
    s.beta.push_back(b);
    s.alpha.push_back(1.0 - b);
    s.alpha_bar.push_back(prod);
    s.sigma.push_back(std::sqrt(b));
  }
  s.validate();
  return s;
}

}  // namespace

std::string_view model_kind_name(ModelKind kind) noexcept {
  switch (kind) {
    case ModelKind::kGmm: return "gmm";
    case ModelKind::kDdpm: return "ddpm";
    case ModelKind::kFm: return "fm";
  }
  return "unknown";
}

ModelKind parse_model_kind(std::string_view name) {
  if (name == "gmm") return ModelKind::kGmm;
  if (name == "ddpm") return ModelKind::kDdpm;
  if (name == "fm") return ModelKind::kFm;
  throw InputError("unknown model kind '" + std::string(name) + "' (expected gmm, ddpm or fm)");
}

std::vector<std::string> TrainConfig::violations() const {
  std::vector<std::string> v;
  if (steps == 0) v.push_back("train.steps must be positive");
  if (batch_size == 0) v.push_back("train.batch_size must be positive");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) v.push_back("train.learning_rate must be positive");
  if (!(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0))
    v.push_back("train.final_lr_fraction must lie in (0, 1]");
  return v;
}

std::vector<std::string> DgmSpec::violations() const {
  std::vector<std::string> v;
  if (kind == ModelKind::kGmm) v.push_back("model kind must be ddpm or fm");
  if (base_width == 0) v.push_back("base_width must be positive");
  if (depth == 0 || depth > 8) v.push_back("depth must lie in 1..8");
  if (time_embed_dim == 0 || time_embed_dim % 2 != 0) v.push_back("time_embed_dim must be even and positive");
  if (groups == 0) v.push_back("groups must be positive");
  if (kind == ModelKind::kDdpm) {
    if (timesteps < 2) v.push_back("timesteps must be at least 2");
    if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0))
      v.push_back("need 0 < beta_start < beta_end < 1");
  }
  if (kind == ModelKind::kFm) {
    if (!(flow.sigma > 0.0)) v.push_back("flow.sigma must be positive");
    if (flow.n_steps == 0) v.push_back("flow.n_steps must be positive");
  }
  for (auto& s : train.violations()) v.push_back(s);
  return v;
}

double bin_center(const SpeedBins& bins, int bin) {
  if (bin < 0 || static_cast<std::size_t>(bin) >= bins.count())
    throw InputError("speed bin " + std::to_string(bin) + " out of range");
  const auto b = static_cast<std::size_t>(bin);
  return 0.5 * (bins.edges[b] + bins.edges[b + 1]);
}

DgmModel::DgmModel(ModelKind kind, nn::UNet1d net, Scaler scaler, std::vector<double> altitudes,
                   SpeedBins bins)
    : kind_(kind),
      net_(std::move(net)),
      scaler_(std::move(scaler)),
      altitudes_(std::move(altitudes)),
      bins_(std::move(bins)) {
  layout_.channels = net_.config().in_channels;
  layout_.length = net_.config().sequence_length;
  layout_.valid_length = altitudes_.size();
  layout_.validate();
  if (scaler_.size() != layout_.channels * layout_.valid_length)
    throw SchemaError("scaler size does not match the altitude count");
}

void DgmModel::set_flow(const FlowConfig& flow) {
  flow.validate();
  flow_ = flow;
}

nn::Tensor DgmModel::encode(std::span<const WindProfile> profiles) const {
  const std::size_t a = layout_.valid_length;
  nn::Tensor x({profiles.size(), layout_.channels, layout_.length});
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    if (profiles[i].altitude_count() != a) throw InputError("profile altitude count does not match the model");
    const auto z = apply_scaler(flatten(profiles[i]), scaler_, ScaleDirection::kForward);
    for (std::size_t c = 0; c < layout_.channels; ++c)
      std::copy_n(z.begin() + static_cast<std::ptrdiff_t>(c * a), a, x.data() + (i * layout_.channels + c) * layout_.length);
  }
  layout_.replicate_pad(x);
  return x;
}

std::vector<WindProfile> DgmModel::decode(const nn::Tensor& x, std::span<const ConditionLabel> labels) const {
  const std::size_t a = layout_.valid_length;
  const std::size_t n = x.dim(0);
  if (labels.size() != n) throw InputError("decode needs one label per row");
  std::vector<WindProfile> out(n);
  std::vector<double> z(2 * a);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < 2; ++c)
      std::copy_n(x.data() + (i * layout_.channels + c) * layout_.length, a, z.begin() + static_cast<std::ptrdiff_t>(c * a));
    const auto raw = apply_scaler(z, scaler_, ScaleDirection::kInverse);
    out[i].u.assign(raw.begin(), raw.begin() + static_cast<std::ptrdiff_t>(a));
    out[i].v.assign(raw.begin() + static_cast<std::ptrdiff_t>(a), raw.end());
    out[i].condition = labels[i];
    out[i].macro_speed = bin_center(bins_, labels[i].speed_bin);
  }
  return out;
}

FieldFn DgmModel::field() const {
  return [this](const nn::Tensor& x, std::span<const double> t, std::span<const ConditionLabel> c) {
    return net_.evaluate(x, t, c);
  };
}

std::vector<WindProfile> DgmModel::sample(std::span<const ConditionLabel> labels, std::uint64_t seed,
                                          const SamplerOptions& options) const {
  for (const auto& l : labels)
    if (l.speed_bin < 0 || static_cast<std::size_t>(l.speed_bin) >= net_.config().speed_classes ||
        l.direction < 0 || static_cast<std::size_t>(l.direction) >= net_.config().direction_classes)
      throw InputError("condition " + format_label(l) + " is outside the model vocabulary");
  const nn::Tensor x = kind_ == ModelKind::kDdpm
                           ? ddpm_sample(field(), *schedule_, labels, layout_, seed, options)
                           : fm_sample(field(), flow_, labels, layout_, seed, options);
  return decode(x, labels);
}

DgmModel DgmModel::train(const Dataset& data, const DgmSpec& spec, TrainReport* report) {
  if (auto v = spec.violations(); !v.empty()) throw InputError("invalid model spec: " + v.front());
  if (data.empty()) throw InputError("cannot train on an empty dataset");
  data.validate();

  nn::UNetConfig uc;
  uc.in_channels = 2;
  uc.depth = spec.depth;
  uc.sequence_length = nn::padded_length(data.altitude_count(), spec.depth);
  uc.base_width = spec.base_width;
  uc.time_embed_dim = spec.time_embed_dim;
  uc.groups = spec.groups;
  uc.speed_classes = data.speed_bins.count();
  uc.direction_classes = DirectionSet::size();

  const std::uint64_t seed = spec.train.seed;
  DgmModel model(spec.kind, nn::UNet1d(uc, derive_seed(seed, 0)), fit_scaler(data), data.altitudes,
                 data.speed_bins);
  if (spec.kind == ModelKind::kDdpm) model.schedule_ = linear_schedule(spec.timesteps, spec.beta_start, spec.beta_end);
  model.flow_ = spec.flow;

  const nn::Tensor all = model.encode(data.profiles);
  const std::size_t n = data.size(), row = model.layout_.row_size();
  const std::size_t batch = std::min(spec.train.batch_size, n);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng order_rng = make_rng(seed, 1);
  Rng draw_rng = make_rng(seed, 2);
  std::shuffle(order.begin(), order.end(), order_rng);
  std::size_t cursor = 0;

  nn::AdamState adam;
  nn::AdamConfig ac;
  nn::Tensor x({batch, uc.in_channels, uc.sequence_length});
  std::vector<ConditionLabel> labels(batch);
  if (report) report->losses.reserve(spec.train.steps);
  for (std::size_t step = 0; step < spec.train.steps; ++step) {
    for (std::size_t b = 0; b < batch; ++b) {
      if (cursor == n) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      const std::size_t i = order[cursor++];
      std::copy_n(all.data() + i * row, row, x.data() + b * row);
      labels[b] = data.profiles[i].condition;
    }
    const StepResult r = spec.kind == ModelKind::kDdpm
                             ? ddpm_train_step(model.net_, x, labels, *model.schedule_, model.layout_, draw_rng)
                             : fm_train_step(model.net_, x, labels, model.flow_, model.layout_, draw_rng);
    ac.lr = spec.train.learning_rate;
    if (spec.train.cosine_decay) {
      const double progress = static_cast<double>(step) / static_cast<double>(spec.train.steps);
      const double f = spec.train.final_lr_fraction;
      ac.lr *= f + (1.0 - f) * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
    }
    nn::adam_step(adam, model.net_.params(), r.gradients, ac);
    if (report) report->losses.push_back(r.loss);
  }
  log_info(std::string(model_kind_name(spec.kind)) + " training finished after " +
           std::to_string(spec.train.steps) + " steps");
  return model;
}

Checkpoint DgmModel::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.meta[std::string(kKindKey)] = std::string(model_kind_name(kind_));
  ckpt.meta["unet"] = unet_json(net_.config());
  put_context(ckpt.meta, altitudes_, bins_);
  ckpt.meta["flow"] = {{"sigma", flow_.sigma},
                       {"n_steps", flow_.n_steps},
                       {"integrator", std::string(integrator_name(flow_.integrator))}};
  ckpt.add("scaler.mean", vector_tensor(scaler_.mean));
  ckpt.add("scaler.std", vector_tensor(scaler_.std));
  if (schedule_) ckpt.add("schedule.beta", vector_tensor(schedule_->beta));
  net_.params().export_to(ckpt, "net.");
  return ckpt;
}

DgmModel DgmModel::from_checkpoint(const Checkpoint& ckpt) {
  try {
    const auto kind = parse_model_kind(ckpt.meta.at(std::string(kKindKey)).get<std::string>());
    if (kind == ModelKind::kGmm) throw SchemaError("checkpoint holds a gmm, not a diffusion or flow model");
    check_directions(ckpt.meta);
    const auto uc = unet_from_json(ckpt.meta.at("unet"));
    nn::UNet1d net(uc, 0);
    net.params().import_from(ckpt, "net.");
    DgmModel model(kind, std::move(net), read_scaler(ckpt), ckpt.meta.at("altitudes").get<std::vector<double>>(),
                   SpeedBins{ckpt.meta.at("speed_bins").get<std::vector<double>>()});
    model.bins_.validate();
    const auto& f = ckpt.meta.at("flow");
    model.flow_ = FlowConfig{f.at("sigma").get<double>(), f.at("n_steps").get<std::size_t>(),
                             parse_integrator(f.at("integrator").get<std::string>())};
    if (kind == ModelKind::kDdpm) model.schedule_ = schedule_from_betas(ckpt.tensor("schedule.beta").storage());
    return model;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed model checkpoint: ") + e.what());
  }
}

Checkpoint gmm_to_checkpoint(const GmmPipeline& p) {
  Checkpoint ckpt;
  ckpt.meta[std::string(kKindKey)] = "gmm";
  put_context(ckpt.meta, p.altitudes, p.speed_bins);
  ckpt.meta["layout"] = {{"macro_u", p.layout.macro_u}, {"macro_v", p.layout.macro_v}};
  ckpt.meta["pca_total_variance"] = p.pca.total_variance;
  ckpt.add("scaler.mean", vector_tensor(p.scaler.mean));
  ckpt.add("scaler.std", vector_tensor(p.scaler.std));
  ckpt.add("pca.components", eigen_tensor(p.pca.components));
  ckpt.add("pca.column_means", eigen_tensor(p.pca.column_means));
  ckpt.add("pca.explained_variance", eigen_tensor(p.pca.explained_variance));
  ckpt.add("pca.explained_variance_ratio", eigen_tensor(p.pca.explained_variance_ratio));
  ckpt.add("gmm.weights", eigen_tensor(p.gmm.weights));
  const auto k = static_cast<std::size_t>(p.gmm.components());
  const auto c = static_cast<std::size_t>(p.gmm.dim());
  nn::Tensor means({k, c}), covs({k, c, c});
  for (std::size_t j = 0; j < k; ++j) {
    for (std::size_t a = 0; a < c; ++a) {
      means[j * c + a] = p.gmm.means[j](static_cast<Eigen::Index>(a));
      for (std::size_t b = 0; b < c; ++b)
        covs[(j * c + a) * c + b] = p.gmm.covariances[j](static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    }
  }
  ckpt.add("gmm.means", std::move(means));
  ckpt.add("gmm.covariances", std::move(covs));
  return ckpt;
}

GmmPipeline gmm_from_checkpoint(const Checkpoint& ckpt) {
  try {
    if (ckpt.meta.at(std::string(kKindKey)).get<std::string>() != "gmm")
      throw SchemaError("checkpoint does not hold a gmm pipeline");
    check_directions(ckpt.meta);
    GmmPipeline p;
    p.altitudes = ckpt.meta.at("altitudes").get<std::vector<double>>();
    p.speed_bins.edges = ckpt.meta.at("speed_bins").get<std::vector<double>>();
    p.layout.macro_u = ckpt.meta.at("layout").at("macro_u").get<Eigen::Index>();
    p.layout.macro_v = ckpt.meta.at("layout").at("macro_v").get<Eigen::Index>();
    p.scaler = read_scaler(ckpt);
    p.pca.components = tensor_matrix(ckpt.tensor("pca.components"));
    p.pca.column_means = tensor_vector(ckpt.tensor("pca.column_means"));
    p.pca.explained_variance = tensor_vector(ckpt.tensor("pca.explained_variance"));
    p.pca.explained_variance_ratio = tensor_vector(ckpt.tensor("pca.explained_variance_ratio"));
    p.pca.total_variance = ckpt.meta.at("pca_total_variance").get<double>();
    p.gmm.weights = tensor_vector(ckpt.tensor("gmm.weights"));
    const auto& means = ckpt.tensor("gmm.means");
    const auto& covs = ckpt.tensor("gmm.covariances");
    const auto k = static_cast<std::size_t>(p.gmm.weights.size());
    if (means.rank() != 2 || means.dim(0) != k || covs.rank() != 3 || covs.dim(0) != k ||
        covs.dim(1) != means.dim(1) || covs.dim(2) != means.dim(1))
      throw SchemaError("gmm tensors have inconsistent shapes");
    const auto c = static_cast<Eigen::Index>(means.dim(1));
    for (std::size_t j = 0; j < k; ++j) {
      p.gmm.means.emplace_back(Eigen::Map<const Eigen::VectorXd>(means.data() + j * static_cast<std::size_t>(c), c));
      Eigen::MatrixXd cov(c, c);
      for (Eigen::Index a = 0; a < c; ++a)
        for (Eigen::Index b = 0; b < c; ++b)
          cov(a, b) = covs[(j * static_cast<std::size_t>(c) + static_cast<std::size_t>(a)) * static_cast<std::size_t>(c) +
                           static_cast<std::size_t>(b)];
      p.gmm.covariances.push_back(std::move(cov));
    }
    p.validate();
    return p;
  } catch (const json::exception& e) {
    throw SchemaError(std::string("malformed gmm checkpoint: ") + e.what());
  }
}

std::vector<WindProfile> GmmGenerator::generate(const ConditionLabel& label, std::size_t n,
                                                std::uint64_t seed) const {
  return conditional_sample(pipeline_, ConditionQuery::exactly(label), n, seed, max_draws_).profiles;
}

std::vector<WindProfile> DgmGenerator::generate(const ConditionLabel& label, std::size_t n,
                                                std::uint64_t seed) const {
  const std::vector<ConditionLabel> labels(n, label);
  SamplerOptions options;
  options.threads = threads();
  return model_.sample(labels, seed, options);
}

std::unique_ptr<Generator> train_generator(const Dataset& data, const ModelSpec& spec, std::uint64_t seed,
                                           ModelTrainReport* report) {
  if (spec.kind == ModelKind::kGmm) {
    GmmPipelineOptions options = spec.gmm;
    options.seed = seed;
    GmmFitReport fit;
    auto pipeline = fit_gmm_pipeline(data, options, &fit);
    if (report) report->gmm = std::move(fit);
    return std::make_unique<GmmGenerator>(std::move(pipeline));
  }
  DgmSpec dgm = spec.dgm;
  dgm.kind = spec.kind;
  dgm.train.seed = seed;
  TrainReport tr;
  auto model = DgmModel::train(data, dgm, &tr);
  if (report) report->dgm = std::move(tr);
  return std::make_unique<DgmGenerator>(std::move(model));
}

std::unique_ptr<Generator> generator_from_checkpoint(const Checkpoint& ckpt) {
  const auto it = ckpt.meta.find(std::string(kKindKey));
  if (it == ckpt.meta.end() || !it->is_string()) throw SchemaError("checkpoint has no model kind");
  if (parse_model_kind(it->get<std::string>()) == ModelKind::kGmm)
    return std::make_unique<GmmGenerator>(gmm_from_checkpoint(ckpt));
  return std::make_unique<DgmGenerator>(DgmModel::from_checkpoint(ckpt));
}

void save_generator(const std::filesystem::path& path, const Generator& model) {
  save_checkpoint(path, model.to_checkpoint());
}

std::unique_ptr<Generator> load_generator(const std::filesystem::path& path) {
  return generator_from_checkpoint(load_checkpoint(path));
}

}  // namespace windgen
