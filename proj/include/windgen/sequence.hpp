#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "windgen/data.hpp"
#include "windgen/nn/params.hpp"
#include "windgen/nn/tape.hpp"
#include "windgen/random.hpp"

namespace windgen {

/// Network call inside a recorded computation. x [B, C, L]; one time in [0, 1]
/// and one label per row.
using TrainableField = std::function<nn::Var(nn::Tape&, nn::Var x, std::span<const double> t,
                                             std::span<const ConditionLabel> conditions)>;

/// Inference-only network call. Must be safe to call concurrently.
using FieldFn = std::function<nn::Tensor(const nn::Tensor& x, std::span<const double> t,
                                         std::span<const ConditionLabel> conditions)>;

/// Channel-major sequence of `valid_length` positions stored in a buffer of
/// `length` positions. Positions past valid_length repeat the last valid one.
struct SequenceLayout {
  std::size_t channels = 2;
  std::size_t length = 48;
  std::size_t valid_length = 47;

  std::size_t row_size() const noexcept { return channels * length; }
  /// 1 on valid positions, 0 on padding.
  std::vector<double> mask() const;
  /// Overwrites the padded tail of every (row, channel) with its last valid value.
  void replicate_pad(nn::Tensor& x) const;
  void validate() const;
};

/// Splits [0, n) into fixed chunks and runs `fn(begin, end)` on up to
/// `threads` workers. Chunk boundaries do not depend on the thread count.
void parallel_chunks(std::size_t n, std::size_t chunk, std::size_t threads,
                     const std::function<void(std::size_t, std::size_t)>& fn);

struct StepResult {
  double loss = 0.0;
  nn::Gradients gradients;  // aligned with the parameter store
};

struct SamplerOptions {
  std::size_t chunk_size = 256;
  std::size_t threads = 1;
};

/// Fills the valid positions of row `row` with standard normals from `rng`
/// and replicates into the padding.
void fill_normal_row(nn::Tensor& x, std::size_t row, const SequenceLayout& layout, Rng& rng);

}  // namespace windgen
