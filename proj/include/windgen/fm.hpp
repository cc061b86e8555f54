#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "windgen/nn/tape.hpp"
#include "windgen/nn/unet.hpp"
#include "windgen/random.hpp"
#include "windgen/sequence.hpp"

namespace windgen {

enum class Integrator { kEuler, kHeun };

std::string_view integrator_name(Integrator integrator) noexcept;
Integrator parse_integrator(std::string_view name);

/// Time runs from the Gaussian source at t = 0 to the data at t = 1.
struct FlowConfig {
  double sigma = 0.01;
  std::size_t n_steps = 100;
  Integrator integrator = Integrator::kEuler;

  void validate() const;
  bool operator==(const FlowConfig&) const = default;
};

/// t x1 + (1 - t) x0 + sigma * eta.
std::vector<double> fm_path_point(std::span<const double> x0, std::span<const double> x1, double t,
                                  double sigma, std::span<const double> eta);
/// As fm_path_point with eta drawn from `rng`.
std::vector<double> fm_path_sample(std::span<const double> x0, std::span<const double> x1, double t,
                                   double sigma, Rng& rng);

struct FmDraws {
  std::vector<double> t;  // U(0, 1) per row
  nn::Tensor x0;          // source noise, batch shape
  nn::Tensor eta;         // path noise, batch shape
};

FmDraws fm_draws(std::size_t batch, const SequenceLayout& layout, Rng& rng);

/// Masked mean squared error between the predicted velocity at x_t and x1 - x0.
nn::Var fm_loss(nn::Tape& tape, const TrainableField& model, const nn::Tensor& x1,
                std::span<const ConditionLabel> conditions, const FmDraws& draws,
                const FlowConfig& config, const SequenceLayout& layout);

StepResult fm_train_step(const nn::UNet1d& net, const nn::Tensor& x1,
                         std::span<const ConditionLabel> conditions, const FlowConfig& config,
                         const SequenceLayout& layout, Rng& rng);

/// Integrates dx/dt = v(x, t) from t = 0 to 1 in place on x.
void fm_integrate(nn::Tensor& x, const FieldFn& model, std::span<const ConditionLabel> conditions,
                  const FlowConfig& config, const SequenceLayout& layout);

/// x0 ~ N(0, I) per row from its own stream, then fm_integrate. [n, C, L].
nn::Tensor fm_sample(const FieldFn& model, const FlowConfig& config,
                     std::span<const ConditionLabel> conditions, const SequenceLayout& layout,
                     std::uint64_t seed, const SamplerOptions& options = {});

}  // namespace windgen
