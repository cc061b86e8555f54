#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "windgen/nn/tensor.hpp"

namespace windgen {

/// Binary container shared by every model artifact:
///
///   magic "WGCKPT\0\0" | u32 format version | u64 metadata length | metadata JSON
///   | u32 tensor count | per tensor: u32 name length, name, u32 rank,
///   u64 dims[rank], f64 values (little-endian)
struct Checkpoint {
  static constexpr std::uint32_t kFormatVersion = 1;

  nlohmann::json meta = nlohmann::json::object();
  std::vector<std::pair<std::string, nn::Tensor>> tensors;

  const nn::Tensor& tensor(const std::string& name) const;
  void add(std::string name, nn::Tensor value) { tensors.emplace_back(std::move(name), std::move(value)); }
};

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& in);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace windgen
