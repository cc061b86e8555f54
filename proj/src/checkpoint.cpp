#include "windgen/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "windgen/error.hpp"

namespace windgen {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

constexpr char kMagic[8] = {'W', 'G', 'C', 'K', 'P', 'T', '\0', '\0'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T value{};
  if (!in.read(reinterpret_cast<char*>(&value), sizeof(T))) throw SchemaError("truncated checkpoint");
  return value;
}

std::string get_bytes(std::istream& in, std::uint64_t n) {
  if (n > (1ULL << 32)) throw SchemaError("implausible block length in checkpoint");
  std::string s(n, '\0');
  if (n && !in.read(s.data(), static_cast<std::streamsize>(n))) throw SchemaError("truncated checkpoint");
  return s;
}

}  // namespace

const nn::Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw SchemaError("checkpoint has no tensor '" + name + "'");
}

void write_checkpoint(std::ostream& out, const Checkpoint& ckpt) {
  out.write(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, Checkpoint::kFormatVersion);
  const std::string meta = ckpt.meta.dump();
  put<std::uint64_t>(out, meta.size());
  out.write(meta.data(), static_cast<std::streamsize>(meta.size()));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (auto d : t.shape()) put<std::uint64_t>(out, d);
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw Error("failed writing checkpoint");
}

Checkpoint read_checkpoint(std::istream& in) {
  char magic[8];
  if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kMagic, sizeof(magic)) != 0)
    throw SchemaError("not a windgen checkpoint");
  const auto version = get<std::uint32_t>(in);
  if (version != Checkpoint::kFormatVersion)
    throw SchemaError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint ckpt;
  const auto meta_len = get<std::uint64_t>(in);
  try {
    ckpt.meta = nlohmann::json::parse(get_bytes(in, meta_len));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad checkpoint metadata: ") + e.what());
  }
  const auto count = get<std::uint32_t>(in);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name = get_bytes(in, get<std::uint32_t>(in));
    const auto rank = get<std::uint32_t>(in);
    if (rank > 8) throw SchemaError("implausible tensor rank in checkpoint");
    nn::Shape shape(rank);
    for (auto& d : shape) d = get<std::uint64_t>(in);
    nn::Tensor t(shape);
    if (t.size() && !in.read(reinterpret_cast<char*>(t.data()),
                             static_cast<std::streamsize>(t.size() * sizeof(double))))
      throw SchemaError("truncated tensor '" + name + "'");
    ckpt.tensors.emplace_back(std::move(name), std::move(t));
  }
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  write_checkpoint(out, ckpt);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace windgen
