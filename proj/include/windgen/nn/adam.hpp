#pragma once

#include <cstdint>
#include <vector>

#include "windgen/nn/params.hpp"

namespace windgen::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates, one tensor per parameter.
struct AdamState {
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

/// Bias-corrected Adam update in place. Rejects non-finite gradients before
/// touching any parameter, naming the offending entry.
void adam_step(AdamState& state, ParamStore& params, const Gradients& grads, const AdamConfig& config);

}  // namespace windgen::nn
