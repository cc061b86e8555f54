#include "windgen/fm.hpp"

#include <cmath>

#include "windgen/error.hpp"

namespace windgen {

std::string_view integrator_name(Integrator integrator) noexcept {
  return integrator == Integrator::kHeun ? "heun" : "euler";
}

Integrator parse_integrator(std::string_view name) {
  if (name == "euler") return Integrator::kEuler;
  if (name == "heun") return Integrator::kHeun;
  throw InputError("unknown integrator '" + std::string(name) + "' (expected euler or heun)");
}

void FlowConfig::validate() const {
  if (!(sigma > 0.0) || !std::isfinite(sigma)) throw InputError("flow sigma must be positive");
  if (n_steps < 1) throw InputError("flow n_steps must be at least 1");
}

std::vector<double> fm_path_point(std::span<const double> x0, std::span<const double> x1, double t,
                                  double sigma, std::span<const double> eta) {
  if (!(t >= 0.0 && t <= 1.0)) throw InputError("flow time " + std::to_string(t) + " outside [0, 1]");
  if (!(sigma >= 0.0)) throw InputError("flow path sigma must be non-negative");
  if (x0.size() != x1.size() || eta.size() != x0.size())
    throw InputError("flow path: source, target and noise differ in size");
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = t * x1[i] + (1.0 - t) * x0[i] + sigma * eta[i];
  return out;
}

std::vector<double> fm_path_sample(std::span<const double> x0, std::span<const double> x1, double t,
                                   double sigma, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> eta(x0.size());
  for (auto& e : eta) e = normal(rng);
  return fm_path_point(x0, x1, t, sigma, eta);
}

FmDraws fm_draws(std::size_t batch, const SequenceLayout& layout, Rng& rng) {
  FmDraws d;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  d.t.resize(batch);
  for (auto& t : d.t) t = unit(rng);
  d.x0 = nn::Tensor({batch, layout.channels, layout.length});
  d.eta = nn::Tensor(d.x0.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    fill_normal_row(d.x0, b, layout, rng);
    fill_normal_row(d.eta, b, layout, rng);
  }
  return d;
}

nn::Var fm_loss(nn::Tape& tape, const TrainableField& model, const nn::Tensor& x1,
                std::span<const ConditionLabel> conditions, const FmDraws& draws,
                const FlowConfig& config, const SequenceLayout& layout) {
  const std::size_t batch = x1.dim(0);
  const std::size_t row = layout.row_size();
  if (x1.size() != batch * row || draws.x0.shape() != x1.shape() || draws.eta.shape() != x1.shape() ||
      draws.t.size() != batch)
    throw InputError("fm_loss: batch, draws and layout disagree");
  nn::Tensor xt(x1.shape());
  nn::Tensor target(x1.shape());
  for (std::size_t b = 0; b < batch; ++b) {
    const auto off = b * row;
    const auto p = fm_path_point(draws.x0.values().subspan(off, row), x1.values().subspan(off, row),
                                 draws.t[b], config.sigma, draws.eta.values().subspan(off, row));
    std::copy(p.begin(), p.end(), xt.data() + off);
    for (std::size_t i = 0; i < row; ++i) target[off + i] = x1[off + i] - draws.x0[off + i];
  }
  nn::Var pred = model(tape, tape.constant(std::move(xt)), draws.t, conditions);
  nn::Var loss = nn::masked_mse(pred, tape.constant(std::move(target)), layout.mask());
  if (!std::isfinite(loss.value()[0])) {
    double xmax = 0.0;
    for (double v : x1.values()) xmax = std::max(xmax, std::abs(v));
    throw NumericalError("non-finite flow matching loss (batch " + std::to_string(batch) +
                         ", max |x1| = " + std::to_string(xmax) + ")");
  }
  return loss;
}

StepResult fm_train_step(const nn::UNet1d& net, const nn::Tensor& x1,
                         std::span<const ConditionLabel> conditions, const FlowConfig& config,
                         const SequenceLayout& layout, Rng& rng) {
  const FmDraws draws = fm_draws(x1.dim(0), layout, rng);
  auto [loss, grads] = net.loss_and_gradients([&](nn::Tape& tape, nn::BoundParams& bound) {
    const TrainableField field = [&](nn::Tape& tp, nn::Var x, std::span<const double> t,
                                     std::span<const ConditionLabel> c) {
      return net.forward(tp, bound, x, t, c);
    };
    return fm_loss(tape, field, x1, conditions, draws, config, layout);
  });
  return {loss, std::move(grads)};
}

void fm_integrate(nn::Tensor& x, const FieldFn& model, std::span<const ConditionLabel> conditions,
                  const FlowConfig& config, const SequenceLayout& layout) {
  config.validate();
  const std::size_t m = conditions.size();
  const double dt = 1.0 / static_cast<double>(config.n_steps);
  std::vector<double> t0(m), t1(m);
  for (std::size_t s = 0; s < config.n_steps; ++s) {
    std::fill(t0.begin(), t0.end(), static_cast<double>(s) * dt);
    const nn::Tensor v0 = model(x, t0, conditions);
    if (config.integrator == Integrator::kEuler) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += dt * v0[i];
    } else {
      std::fill(t1.begin(), t1.end(), static_cast<double>(s + 1) * dt);
      nn::Tensor pred = x;
      for (std::size_t i = 0; i < x.size(); ++i) pred[i] += dt * v0[i];
      layout.replicate_pad(pred);
      const nn::Tensor v1 = model(pred, t1, conditions);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] += 0.5 * dt * (v0[i] + v1[i]);
    }
    layout.replicate_pad(x);
    if (!x.all_finite()) throw NumericalError("non-finite flow state at step " + std::to_string(s + 1));
  }
}

nn::Tensor fm_sample(const FieldFn& model, const FlowConfig& config,
                     std::span<const ConditionLabel> conditions, const SequenceLayout& layout,
                     std::uint64_t seed, const SamplerOptions& options) {
  config.validate();
  layout.validate();
  const std::size_t n = conditions.size();
  const std::size_t row = layout.row_size();
  nn::Tensor out({n, layout.channels, layout.length});
  parallel_chunks(n, options.chunk_size, options.threads, [&](std::size_t begin, std::size_t end) {
    const std::size_t m = end - begin;
    nn::Tensor x({m, layout.channels, layout.length});
    for (std::size_t r = 0; r < m; ++r) {
      Rng rng = make_rng(seed, begin + r);
      fill_normal_row(x, r, layout, rng);
    }
    fm_integrate(x, model, conditions.subspan(begin, m), config, layout);
    std::copy(x.values().begin(), x.values().end(), out.data() + begin * row);
  });
  return out;
}

}  // namespace windgen
