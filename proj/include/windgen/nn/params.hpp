#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "windgen/checkpoint.hpp"
#include "windgen/nn/tape.hpp"
#include "windgen/nn/tensor.hpp"

namespace windgen::nn {

/// Named parameter tensors in insertion order.
class ParamStore {
 public:
  Tensor& add(std::string name, Tensor init);

  std::size_t size() const noexcept { return tensors_.size(); }
  const std::string& name(std::size_t i) const { return names_.at(i); }
  const Tensor& tensor(std::size_t i) const { return tensors_.at(i); }
  Tensor& tensor(std::size_t i) { return tensors_.at(i); }
  std::optional<std::size_t> find(std::string_view name) const;
  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);

  /// Total number of scalars.
  std::size_t parameter_count() const noexcept;

  /// Appends every tensor to `ckpt` under `prefix` + name.
  void export_to(Checkpoint& ckpt, const std::string& prefix = "") const;
  /// Reads tensors named `prefix` + name in stored order; shapes must match.
  void import_from(const Checkpoint& ckpt, const std::string& prefix = "");
  /// Standalone parameter file.
  void save(const std::filesystem::path& path) const;
  static ParamStore load(const std::filesystem::path& path);

  bool operator==(const ParamStore& other) const;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> tensors_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Gradients aligned with ParamStore order.
using Gradients = std::vector<Tensor>;

/// Binds store entries onto a tape as leaves on first use.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamStore& store);

  Var operator()(std::string_view name);
  /// One tensor per store entry; entries never bound get exact zeros.
  Gradients gradients();

 private:
  Tape& tape_;
  const ParamStore& store_;
  std::vector<std::optional<Var>> bound_;
};

}  // namespace windgen::nn
