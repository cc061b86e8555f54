#include "windgen/nn/unet.hpp"

#include <cmath>
#include <numeric>
#include <random>

#include "windgen/error.hpp"
#include "windgen/random.hpp"

namespace windgen::nn {

namespace {

std::size_t groups_for(std::size_t requested, std::size_t channels) {
  return std::gcd(requested, channels);
}

}  // namespace

std::vector<std::string> UNetConfig::violations() const {
  std::vector<std::string> v;
  if (in_channels == 0) v.push_back("in_channels must be positive");
  if (base_width == 0) v.push_back("base_width must be positive");
  if (depth == 0) v.push_back("depth must be positive");
  if (sequence_length == 0 || depth > 16 || sequence_length % (std::size_t{1} << depth) != 0)
    v.push_back("sequence_length must be a positive multiple of 2^depth");
  if (time_embed_dim == 0 || time_embed_dim % 2 != 0) v.push_back("time_embed_dim must be even");
  if (speed_classes == 0 || direction_classes == 0) v.push_back("condition vocabularies must be non-empty");
  if (groups == 0) v.push_back("groups must be positive");
  return v;
}

std::size_t padded_length(std::size_t length, std::size_t depth) noexcept {
  const std::size_t m = std::size_t{1} << depth;
  return (length + m - 1) / m * m;
}

std::vector<double> time_embed(double t, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw InputError("time embedding dimension must be even");
  const std::size_t half = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    const double arg = 1000.0 * t * freq;
    out[2 * i] = std::sin(arg);
    out[2 * i + 1] = std::cos(arg);
  }
  return out;
}

UNet1d::UNet1d(UNetConfig config, std::uint64_t seed) : config_(std::move(config)) {
  if (auto v = config_.violations(); !v.empty()) throw InputError("invalid U-Net config: " + v.front());
  build(seed);
}

UNet1d::UNet1d(UNetConfig config, ParamStore params) : config_(std::move(config)) {
  if (auto v = config_.violations(); !v.empty()) throw InputError("invalid U-Net config: " + v.front());
  build(0);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& src = params.get(params_.name(i));
    if (src.shape() != params_.tensor(i).shape())
      throw SchemaError("parameter '" + params_.name(i) + "' has the wrong shape");
    params_.tensor(i) = src;
  }
}

void UNet1d::build(std::uint64_t seed) {
  std::uint64_t counter = 0;
  auto uniform = [&](Shape shape, std::size_t fan_in) {
    Rng rng = make_rng(seed, counter++);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Tensor t(std::move(shape));
    for (auto& x : t.values()) x = dist(rng);
    return t;
  };
  auto normal = [&](Shape shape) {
    Rng rng = make_rng(seed, counter++);
    std::normal_distribution<double> dist(0.0, 1.0);
    Tensor t(std::move(shape));
    for (auto& x : t.values()) x = dist(rng);
    return t;
  };
  auto conv = [&](const std::string& name, std::size_t cin, std::size_t cout, std::size_t k) {
    params_.add(name + ".w", uniform({cout, cin, k}, cin * k));
    params_.add(name + ".b", uniform({cout}, cin * k));
  };
  auto lin = [&](const std::string& name, std::size_t in, std::size_t out) {
    params_.add(name + ".w", uniform({out, in}, in));
    params_.add(name + ".b", uniform({out}, in));
  };
  auto norm = [&](const std::string& name, std::size_t ch) {
    params_.add(name + ".gamma", Tensor({ch}, 1.0));
    params_.add(name + ".beta", Tensor({ch}, 0.0));
  };
  const std::size_t d = config_.time_embed_dim;
  auto block = [&](const std::string& name, std::size_t cin, std::size_t cout) {
    conv(name + ".conv1", cin, cout, 3);
    norm(name + ".norm1", cout);
    lin(name + ".emb", d, cout);
    conv(name + ".conv2", cout, cout, 3);
    norm(name + ".norm2", cout);
    if (cin != cout) conv(name + ".skip", cin, cout, 1);
  };

  params_.add("cond.speed", normal({config_.speed_classes, d}));
  params_.add("cond.direction", normal({config_.direction_classes, d}));
  lin("time.fc1", d, d);
  lin("time.fc2", d, d);
  conv("in", config_.in_channels, config_.base_width, 3);
  for (std::size_t s = 0; s < config_.depth; ++s)
    block("down" + std::to_string(s), s == 0 ? config_.base_width : config_.stage_width(s - 1),
          config_.stage_width(s));
  const std::size_t deepest = config_.stage_width(config_.depth - 1);
  block("mid", deepest, deepest);
  for (std::size_t s = config_.depth; s-- > 0;) {
    const std::size_t below = s + 1 == config_.depth ? deepest : config_.stage_width(s + 1);
    block("up" + std::to_string(s), below + config_.stage_width(s), config_.stage_width(s));
  }
  norm("out.norm", config_.base_width);
  if (config_.zero_init_output) {
    params_.add("out.w", Tensor({config_.in_channels, config_.base_width, 3}));
    params_.add("out.b", Tensor({config_.in_channels}));
  } else {
    conv("out", config_.base_width, config_.in_channels, 3);
  }
}

Var UNet1d::res_block(BoundParams& p, const std::string& name, Var x, Var emb, std::size_t cin,
                      std::size_t cout) const {
  const std::size_t g = groups_for(config_.groups, cout);
  Var h = conv1d(x, p(name + ".conv1.w"), p(name + ".conv1.b"));
  h = silu(group_norm(h, p(name + ".norm1.gamma"), p(name + ".norm1.beta"), g));
  h = add_channel_bias(h, linear(emb, p(name + ".emb.w"), p(name + ".emb.b")));
  h = conv1d(h, p(name + ".conv2.w"), p(name + ".conv2.b"));
  h = silu(group_norm(h, p(name + ".norm2.gamma"), p(name + ".norm2.beta"), g));
  Var skip = cin == cout ? x : conv1d(x, p(name + ".skip.w"), p(name + ".skip.b"));
  return add(h, skip);
}

Var UNet1d::forward(Tape& tape, BoundParams& p, Var x, std::span<const double> t,
                    std::span<const ConditionLabel> conditions) const {
  const auto& xv = x.value();
  if (xv.rank() != 3 || xv.dim(1) != config_.in_channels || xv.dim(2) != config_.sequence_length)
    throw InputError("U-Net input must be [B, " + std::to_string(config_.in_channels) + ", " +
                     std::to_string(config_.sequence_length) + "], got " + shape_string(xv.shape()));
  const std::size_t batch = xv.dim(0);
  if (t.size() != batch || conditions.size() != batch)
    throw InputError("U-Net needs one time and one condition per batch row");
  xv.check_finite("U-Net input");

  const std::size_t d = config_.time_embed_dim;
  Tensor temb({batch, d});
  std::vector<int> speeds(batch), dirs(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto e = time_embed(t[b], d);
    std::copy(e.begin(), e.end(), temb.data() + b * d);
    speeds[b] = conditions[b].speed_bin;
    dirs[b] = conditions[b].direction;
  }
  Var emb = add(tape.constant(std::move(temb)),
                add(embedding(p("cond.speed"), speeds), embedding(p("cond.direction"), dirs)));
  emb = silu(linear(emb, p("time.fc1.w"), p("time.fc1.b")));
  emb = silu(linear(emb, p("time.fc2.w"), p("time.fc2.b")));

  Var h = conv1d(x, p("in.w"), p("in.b"));
  std::vector<Var> skips;
  for (std::size_t s = 0; s < config_.depth; ++s) {
    h = res_block(p, "down" + std::to_string(s), h, emb,
                  s == 0 ? config_.base_width : config_.stage_width(s - 1), config_.stage_width(s));
    skips.push_back(h);
    h = avg_pool2(h);
  }
  const std::size_t deepest = config_.stage_width(config_.depth - 1);
  h = res_block(p, "mid", h, emb, deepest, deepest);
  for (std::size_t s = config_.depth; s-- > 0;) {
    const std::size_t below = s + 1 == config_.depth ? deepest : config_.stage_width(s + 1);
    h = concat_channels(upsample2(h), skips[s]);
    h = res_block(p, "up" + std::to_string(s), h, emb, below + config_.stage_width(s),
                  config_.stage_width(s));
  }
  h = silu(group_norm(h, p("out.norm.gamma"), p("out.norm.beta"),
                      groups_for(config_.groups, config_.base_width)));
  Var out = conv1d(h, p("out.w"), p("out.b"));
  out.value().check_finite("U-Net output");
  return out;
}

Tensor UNet1d::evaluate(const Tensor& x, std::span<const double> t,
                        std::span<const ConditionLabel> conditions) const {
  Tape tape(false);
  BoundParams bound(tape, params_);
  return forward(tape, bound, tape.constant(x), t, conditions).value();
}

}  // namespace windgen::nn
