#include "windgen/nn/adam.hpp"

#include <cmath>

#include "windgen/error.hpp"

namespace windgen::nn {

void adam_step(AdamState& state, ParamStore& params, const Gradients& grads, const AdamConfig& config) {
  if (grads.size() != params.size()) throw InputError("gradient count does not match parameters");
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (grads[i].shape() != params.tensor(i).shape())
      throw InputError("gradient shape mismatch for '" + params.name(i) + "'");
    if (!grads[i].all_finite()) throw NumericalError("non-finite gradient in '" + params.name(i) + "'");
  }
  if (state.m.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m.emplace_back(params.tensor(i).shape());
      state.v.emplace_back(params.tensor(i).shape());
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params.tensor(i);
    auto& m = state.m[i];
    auto& v = state.v[i];
    const auto& g = grads[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g[j];
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g[j] * g[j];
      p[j] -= config.lr * (m[j] / c1) / (std::sqrt(v[j] / c2) + config.eps);
    }
  }
}

}  // namespace windgen::nn
