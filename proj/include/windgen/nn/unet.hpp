#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "windgen/data.hpp"
#include "windgen/nn/params.hpp"
#include "windgen/nn/tape.hpp"

namespace windgen::nn {

struct UNetConfig {
  std::size_t in_channels = 2;
  std::size_t sequence_length = 48;  // padded length
  std::size_t base_width = 32;
  std::size_t depth = 2;
  std::size_t speed_classes = 4;
  std::size_t direction_classes = DirectionSet::size();
  std::size_t time_embed_dim = 64;
  std::size_t groups = 8;
  bool zero_init_output = true;

  std::size_t stage_width(std::size_t stage) const noexcept { return base_width << stage; }
  std::vector<std::string> violations() const;
  bool operator==(const UNetConfig&) const = default;
};

/// Smallest length >= `length` divisible by 2^depth.
std::size_t padded_length(std::size_t length, std::size_t depth) noexcept;

/// Interleaved sin/cos features of 1000 t at geometrically spaced frequencies.
std::vector<double> time_embed(double t, std::size_t dim);

/// Conditioned 1D U-Net. Each resolution stage runs two conv -> group norm ->
/// SiLU layers with a residual connection; the summed time and condition
/// embeddings are projected and added per channel in every block.
class UNet1d {
 public:
  UNet1d(UNetConfig config, std::uint64_t seed);
  UNet1d(UNetConfig config, ParamStore params);

  const UNetConfig& config() const noexcept { return config_; }
  const ParamStore& params() const noexcept { return params_; }
  ParamStore& params() noexcept { return params_; }

  /// x [B, in_channels, sequence_length]; t in [0, 1] per row; one label per row.
  Var forward(Tape& tape, BoundParams& bound, Var x, std::span<const double> t,
              std::span<const ConditionLabel> conditions) const;

  /// Loss-agnostic training call: binds parameters on `tape`, builds the loss
  /// via `loss_fn`, backpropagates and returns the loss value and gradients.
  template <typename LossFn>
  std::pair<double, Gradients> loss_and_gradients(LossFn&& loss_fn) const {
    Tape tape;
    BoundParams bound(tape, params_);
    Var loss = loss_fn(tape, bound);
    tape.backward(loss);
    return {loss.value()[0], bound.gradients()};
  }

  /// Forward pass without gradient recording.
  Tensor evaluate(const Tensor& x, std::span<const double> t,
                  std::span<const ConditionLabel> conditions) const;

 private:
  void build(std::uint64_t seed);
  Var res_block(BoundParams& p, const std::string& name, Var x, Var emb, std::size_t cin,
                std::size_t cout) const;

  UNetConfig config_;
  ParamStore params_;
};

}  // namespace windgen::nn
