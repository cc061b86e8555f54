#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "windgen/nn/tape.hpp"
#include "windgen/nn/unet.hpp"
#include "windgen/random.hpp"
#include "windgen/sequence.hpp"

namespace windgen {

/// Discrete diffusion schedule. Arrays are indexed by t - 1 for t in 1..T.
struct NoiseSchedule {
  std::size_t T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
  std::vector<double> sigma;  // sigma_t^2 = beta_t

  void validate() const;
};

inline constexpr std::size_t kDefaultTimesteps = 500;
inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 0.02;

/// Linearly spaced betas from beta_start to beta_end.
NoiseSchedule linear_schedule(std::size_t T = kDefaultTimesteps, double beta_start = kDefaultBetaStart,
                              double beta_end = kDefaultBetaEnd);

/// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps, elementwise.
std::vector<double> forward_corrupt(std::span<const double> x0, std::size_t t,
                                    std::span<const double> eps, const NoiseSchedule& schedule);

/// Random quantities of one training batch.
struct DdpmDraws {
  std::vector<std::size_t> timesteps;  // 1..T per row
  nn::Tensor eps;                      // same shape as the batch
};

DdpmDraws ddpm_draws(std::size_t batch, const SequenceLayout& layout, const NoiseSchedule& schedule,
                     Rng& rng);

/// Masked mean squared error between eps and the network's prediction at the
/// corrupted batch. x0 [B, C, L].
nn::Var ddpm_loss(nn::Tape& tape, const TrainableField& model, const nn::Tensor& x0,
                  std::span<const ConditionLabel> conditions, const DdpmDraws& draws,
                  const NoiseSchedule& schedule, const SequenceLayout& layout);

/// Draws t and eps from `rng`, evaluates ddpm_loss on `net` and backpropagates.
StepResult ddpm_train_step(const nn::UNet1d& net, const nn::Tensor& x0,
                           std::span<const ConditionLabel> conditions, const NoiseSchedule& schedule,
                           const SequenceLayout& layout, Rng& rng);

/// One reverse step applied in place to every row of x, given the predicted noise.
void ddpm_reverse_step(nn::Tensor& x, const nn::Tensor& eps_hat, std::size_t t,
                       const NoiseSchedule& schedule, std::span<const double> z);

/// Ancestral sampling from x_T ~ N(0, I); z = 0 on the final step. Returns
/// [n, C, L] in normalized space. Row i draws from its own stream, so output
/// does not depend on chunking or threads.
nn::Tensor ddpm_sample(const FieldFn& model, const NoiseSchedule& schedule,
                       std::span<const ConditionLabel> conditions, const SequenceLayout& layout,
                       std::uint64_t seed, const SamplerOptions& options = {});

}  // namespace windgen
