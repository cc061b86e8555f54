#include "windgen/ddpm.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "windgen/error.hpp"

namespace windgen {

void NoiseSchedule::validate() const {
  if (T < 1 || beta.size() != T || alpha.size() != T || alpha_bar.size() != T || sigma.size() != T)
    throw InputError("noise schedule arrays must all have length T");
  for (std::size_t i = 0; i < T; ++i) {
    if (!(beta[i] > 0.0 && beta[i] < 1.0)) throw InputError("noise schedule beta outside (0, 1)");
    if (i > 0 && !(alpha_bar[i] < alpha_bar[i - 1]))
      throw InputError("noise schedule alpha_bar is not strictly decreasing");
  }
}

NoiseSchedule linear_schedule(std::size_t T, double beta_start, double beta_end) {
  if (T < 2) throw InputError("linear schedule needs T >= 2");
  if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0))
    throw InputError("linear schedule needs 0 < beta_start < beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  double prod = 1.0;
  for (std::size_t i = 0; i < T; ++i) {
    const double b = beta_start + (beta_end - beta_start) * static_cast<double>(i) / static_cast<double>(T - 1);
    prod *= 1.0 - b;
    s.beta.push_back(b);
    s.alpha.push_back(1.0 - b);
    s.alpha_bar.push_back(prod);
    s.sigma.push_back(std::sqrt(b));
  }
  return s;
}

std::vector<double> forward_corrupt(std::span<const double> x0, std::size_t t,
                                    std::span<const double> eps, const NoiseSchedule& schedule) {
  if (t < 1 || t > schedule.T)
    throw InputError("timestep " + std::to_string(t) + " outside 1.." + std::to_string(schedule.T));
  if (eps.size() != x0.size()) throw InputError("forward_corrupt: eps and x0 differ in size");
  const double a = std::sqrt(schedule.alpha_bar[t - 1]);
  const double b = std::sqrt(1.0 - schedule.alpha_bar[t - 1]);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

DdpmDraws ddpm_draws(std::size_t batch, const SequenceLayout& layout, const NoiseSchedule& schedule,
                     Rng& rng) {
  DdpmDraws d;
  std::uniform_int_distribution<std::size_t> pick(1, schedule.T);
  d.timesteps.resize(batch);
  for (auto& t : d.timesteps) t = pick(rng);
  d.eps = nn::Tensor({batch, layout.channels, layout.length});
  for (std::size_t b = 0; b < batch; ++b) fill_normal_row(d.eps, b, layout, rng);
  return d;
}

nn::Var ddpm_loss(nn::Tape& tape, const TrainableField& model, const nn::Tensor& x0,
                  std::span<const ConditionLabel> conditions, const DdpmDraws& draws,
                  const NoiseSchedule& schedule, const SequenceLayout& layout) {
  const std::size_t batch = x0.dim(0);
  const std::size_t row = layout.row_size();
  if (x0.size() != batch * row || draws.eps.shape() != x0.shape() || draws.timesteps.size() != batch)
    throw InputError("ddpm_loss: batch, draws and layout disagree");
  nn::Tensor xt(x0.shape());
  std::vector<double> tnorm(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto t = draws.timesteps[b];
    const auto noisy = forward_corrupt(x0.values().subspan(b * row, row), t,
                                       draws.eps.values().subspan(b * row, row), schedule);
    std::copy(noisy.begin(), noisy.end(), xt.data() + b * row);
    tnorm[b] = static_cast<double>(t) / static_cast<double>(schedule.T);
  }
  nn::Var pred = model(tape, tape.constant(std::move(xt)), tnorm, conditions);
  const auto mask = layout.mask();
  nn::Var loss = nn::masked_mse(pred, tape.constant(draws.eps), mask);
  if (!std::isfinite(loss.value()[0])) {
    const auto [lo, hi] = std::minmax_element(draws.timesteps.begin(), draws.timesteps.end());
    double xmax = 0.0;
    for (double v : x0.values()) xmax = std::max(xmax, std::abs(v));
    throw NumericalError("non-finite diffusion loss (batch " + std::to_string(batch) + ", t in [" +
                         std::to_string(*lo) + ", " + std::to_string(*hi) +
                         "], max |x0| = " + std::to_string(xmax) + ")");
  }
  return loss;
}

StepResult ddpm_train_step(const nn::UNet1d& net, const nn::Tensor& x0,
                           std::span<const ConditionLabel> conditions, const NoiseSchedule& schedule,
                           const SequenceLayout& layout, Rng& rng) {
  const DdpmDraws draws = ddpm_draws(x0.dim(0), layout, schedule, rng);
  auto [loss, grads] = net.loss_and_gradients([&](nn::Tape& tape, nn::BoundParams& bound) {
    const TrainableField field = [&](nn::Tape& tp, nn::Var x, std::span<const double> t,
                                     std::span<const ConditionLabel> c) {
      return net.forward(tp, bound, x, t, c);
    };
    return ddpm_loss(tape, field, x0, conditions, draws, schedule, layout);
  });
  return {loss, std::move(grads)};
}

void ddpm_reverse_step(nn::Tensor& x, const nn::Tensor& eps_hat, std::size_t t,
                       const NoiseSchedule& schedule, std::span<const double> z) {
  const double alpha = schedule.alpha[t - 1];
  const double coef = (1.0 - alpha) / std::sqrt(1.0 - schedule.alpha_bar[t - 1]);
  const double inv = 1.0 / std::sqrt(alpha);
  const double sigma = t > 1 ? schedule.sigma[t - 1] : 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    x[i] = inv * (x[i] - coef * eps_hat[i]);
    if (sigma != 0.0) x[i] += sigma * z[i];
  }
}

nn::Tensor ddpm_sample(const FieldFn& model, const NoiseSchedule& schedule,
                       std::span<const ConditionLabel> conditions, const SequenceLayout& layout,
                       std::uint64_t seed, const SamplerOptions& options) {
  schedule.validate();
  layout.validate();
  const std::size_t n = conditions.size();
  const std::size_t row = layout.row_size();
  nn::Tensor out({n, layout.channels, layout.length});
  parallel_chunks(n, options.chunk_size, options.threads, [&](std::size_t begin, std::size_t end) {
    const std::size_t m = end - begin;
    std::vector<Rng> rngs;
    rngs.reserve(m);
    for (std::size_t i = begin; i < end; ++i) rngs.push_back(make_rng(seed, i));
    nn::Tensor x({m, layout.channels, layout.length});
    for (std::size_t r = 0; r < m; ++r) fill_normal_row(x, r, layout, rngs[r]);
    nn::Tensor z(x.shape());
    const auto labels = conditions.subspan(begin, m);
    std::vector<double> tnorm(m);
    for (std::size_t t = schedule.T; t >= 1; --t) {
      std::fill(tnorm.begin(), tnorm.end(), static_cast<double>(t) / static_cast<double>(schedule.T));
      const nn::Tensor eps_hat = model(x, tnorm, labels);
      if (t > 1)
        for (std::size_t r = 0; r < m; ++r) fill_normal_row(z, r, layout, rngs[r]);
      ddpm_reverse_step(x, eps_hat, t, schedule, z.values());
      layout.replicate_pad(x);
      if (!x.all_finite())
        throw NumericalError("non-finite diffusion state at t = " + std::to_string(t));
    }
    std::copy(x.values().begin(), x.values().end(), out.data() + begin * row);
  });
  return out;
}

}  // namespace windgen
