#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "windgen/checkpoint.hpp"
#include "windgen/data.hpp"
#include "windgen/ddpm.hpp"
#include "windgen/fm.hpp"
#include "windgen/gmm.hpp"
#include "windgen/nn/unet.hpp"
#include "windgen/sequence.hpp"

namespace windgen {

enum class ModelKind { kGmm, kDdpm, kFm };

std::string_view model_kind_name(ModelKind kind) noexcept;
ModelKind parse_model_kind(std::string_view name);

struct TrainConfig {
  std::size_t steps = 4000;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  /// Cosine decay from learning_rate to learning_rate * final_lr_fraction.
  bool cosine_decay = false;
  double final_lr_fraction = 0.1;
  std::uint64_t seed = 0;

  std::vector<std::string> violations() const;
};

/// Architecture and process settings for a diffusion or flow model. The
/// sequence length and vocabularies come from the training data.
struct DgmSpec {
  ModelKind kind = ModelKind::kDdpm;
  std::size_t base_width = 32;
  std::size_t depth = 2;
  std::size_t time_embed_dim = 64;
  std::size_t groups = 8;
  std::size_t timesteps = kDefaultTimesteps;
  double beta_start = kDefaultBetaStart;
  double beta_end = kDefaultBetaEnd;
  FlowConfig flow;
  TrainConfig train;

  std::vector<std::string> violations() const;
};

struct TrainReport {
  std::vector<double> losses;  // one per step
};

/// Representative macro speed of a bin: its midpoint.
double bin_center(const SpeedBins& bins, int bin);

/// Trained diffusion or flow model with everything needed to sample in m/s.
class DgmModel {
 public:
  static DgmModel train(const Dataset& data, const DgmSpec& spec, TrainReport* report = nullptr);

  ModelKind kind() const noexcept { return kind_; }
  const nn::UNet1d& network() const noexcept { return net_; }
  const Scaler& scaler() const noexcept { return scaler_; }
  const std::vector<double>& altitudes() const noexcept { return altitudes_; }
  const SpeedBins& speed_bins() const noexcept { return bins_; }
  const SequenceLayout& layout() const noexcept { return layout_; }
  const std::optional<NoiseSchedule>& schedule() const noexcept { return schedule_; }
  const FlowConfig& flow() const noexcept { return flow_; }
  /// Integration settings used by later sample() calls.
  void set_flow(const FlowConfig& flow);

  /// Scaled, padded [n, 2, L] tensor of the profiles.
  nn::Tensor encode(std::span<const WindProfile> profiles) const;
  /// Crops, unscales and labels rows of a [n, 2, L] tensor.
  std::vector<WindProfile> decode(const nn::Tensor& x, std::span<const ConditionLabel> labels) const;

  FieldFn field() const;
  /// One profile per label, in m/s.
  std::vector<WindProfile> sample(std::span<const ConditionLabel> labels, std::uint64_t seed,
                                  const SamplerOptions& options = {}) const;

  Checkpoint to_checkpoint() const;
  static DgmModel from_checkpoint(const Checkpoint& ckpt);

 private:
  DgmModel(ModelKind kind, nn::UNet1d net, Scaler scaler, std::vector<double> altitudes, SpeedBins bins);

  ModelKind kind_;
  nn::UNet1d net_;
  Scaler scaler_;
  std::vector<double> altitudes_;
  SpeedBins bins_;
  SequenceLayout layout_;
  std::optional<NoiseSchedule> schedule_;
  FlowConfig flow_;
};

Checkpoint gmm_to_checkpoint(const GmmPipeline& pipeline);
GmmPipeline gmm_from_checkpoint(const Checkpoint& ckpt);

/// Common face of every trained model.
class Generator {
 public:
  virtual ~Generator() = default;

  virtual ModelKind kind() const noexcept = 0;
  virtual const std::vector<double>& altitudes() const noexcept = 0;
  virtual const SpeedBins& speed_bins() const noexcept = 0;
  /// Profiles labelled `label`. Rejection-based models may throw NoMassError.
  virtual std::vector<WindProfile> generate(const ConditionLabel& label, std::size_t n,
                                            std::uint64_t seed) const = 0;
  virtual Checkpoint to_checkpoint() const = 0;

  void set_threads(std::size_t threads) noexcept { threads_ = threads == 0 ? 1 : threads; }
  std::size_t threads() const noexcept { return threads_; }

 private:
  std::size_t threads_ = 1;
};

class GmmGenerator final : public Generator {
 public:
  explicit GmmGenerator(GmmPipeline pipeline, std::uint64_t max_draws = kDefaultMaxDraws)
      : pipeline_(std::move(pipeline)), max_draws_(max_draws) {}

  ModelKind kind() const noexcept override { return ModelKind::kGmm; }
  const std::vector<double>& altitudes() const noexcept override { return pipeline_.altitudes; }
  const SpeedBins& speed_bins() const noexcept override { return pipeline_.speed_bins; }
  std::vector<WindProfile> generate(const ConditionLabel& label, std::size_t n,
                                    std::uint64_t seed) const override;
  Checkpoint to_checkpoint() const override { return gmm_to_checkpoint(pipeline_); }

  const GmmPipeline& pipeline() const noexcept { return pipeline_; }
  void set_max_draws(std::uint64_t max_draws) noexcept { max_draws_ = max_draws; }

 private:
  GmmPipeline pipeline_;
  std::uint64_t max_draws_;
};

class DgmGenerator final : public Generator {
 public:
  explicit DgmGenerator(DgmModel model) : model_(std::move(model)) {}

  ModelKind kind() const noexcept override { return model_.kind(); }
  const std::vector<double>& altitudes() const noexcept override { return model_.altitudes(); }
  const SpeedBins& speed_bins() const noexcept override { return model_.speed_bins(); }
  std::vector<WindProfile> generate(const ConditionLabel& label, std::size_t n,
                                    std::uint64_t seed) const override;
  Checkpoint to_checkpoint() const override { return model_.to_checkpoint(); }

  const DgmModel& model() const noexcept { return model_; }
  DgmModel& model() noexcept { return model_; }

 private:
  DgmModel model_;
};

/// Everything needed to train any model kind.
struct ModelSpec {
  ModelKind kind = ModelKind::kGmm;
  GmmPipelineOptions gmm;
  DgmSpec dgm;
};

struct ModelTrainReport {
  std::optional<GmmFitReport> gmm;
  std::optional<TrainReport> dgm;
};

/// Trains from scratch; `seed` overrides the seeds inside `spec`.
std::unique_ptr<Generator> train_generator(const Dataset& data, const ModelSpec& spec,
                                           std::uint64_t seed, ModelTrainReport* report = nullptr);

void save_generator(const std::filesystem::path& path, const Generator& model);
std::unique_ptr<Generator> load_generator(const std::filesystem::path& path);
std::unique_ptr<Generator> generator_from_checkpoint(const Checkpoint& ckpt);

}  // namespace windgen
