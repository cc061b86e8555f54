#include "windgen/nn/params.hpp"

#include "windgen/error.hpp"

namespace windgen::nn {

Tensor& ParamStore::add(std::string name, Tensor init) {
  if (index_.count(name)) throw InputError("duplicate parameter '" + name + "'");
  index_.emplace(name, tensors_.size());
  names_.push_back(std::move(name));
  tensors_.push_back(std::move(init));
  return tensors_.back();
}

std::optional<std::size_t> ParamStore::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const Tensor& ParamStore::get(std::string_view name) const {
  auto i = find(name);
  if (!i) throw InputError("unknown parameter '" + std::string(name) + "'");
  return tensors_[*i];
}

Tensor& ParamStore::get(std::string_view name) {
  auto i = find(name);
  if (!i) throw InputError("unknown parameter '" + std::string(name) + "'");
  return tensors_[*i];
}

std::size_t ParamStore::parameter_count() const noexcept {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

void ParamStore::export_to(Checkpoint& ckpt, const std::string& prefix) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) ckpt.add(prefix + names_[i], tensors_[i]);
}

void ParamStore::import_from(const Checkpoint& ckpt, const std::string& prefix) {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    const auto& t = ckpt.tensor(prefix + names_[i]);
    if (t.shape() != tensors_[i].shape())
      throw SchemaError("parameter '" + names_[i] + "' has shape " + shape_string(t.shape()) +
                        ", expected " + shape_string(tensors_[i].shape()));
    tensors_[i] = t;
  }
}

void ParamStore::save(const std::filesystem::path& path) const {
  Checkpoint ckpt;
  ckpt.meta["kind"] = "parameters";
  export_to(ckpt);
  save_checkpoint(path, ckpt);
}

ParamStore ParamStore::load(const std::filesystem::path& path) {
  const auto ckpt = load_checkpoint(path);
  ParamStore store;
  for (const auto& [name, t] : ckpt.tensors) store.add(name, t);
  return store;
}

bool ParamStore::operator==(const ParamStore& other) const {
  if (names_ != other.names_) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i)
    if (tensors_[i].shape() != other.tensors_[i].shape() ||
        tensors_[i].storage() != other.tensors_[i].storage())
      return false;
  return true;
}

BoundParams::BoundParams(Tape& tape, const ParamStore& store)
    : tape_(tape), store_(store), bound_(store.size()) {}

Var BoundParams::operator()(std::string_view name) {
  auto i = store_.find(name);
  if (!i) throw InputError("unknown parameter '" + std::string(name) + "'");
  auto& slot = bound_[*i];
  if (!slot) slot = tape_.variable(store_.tensor(*i));
  return *slot;
}

Gradients BoundParams::gradients() {
  Gradients out;
  out.reserve(store_.size());
  for (std::size_t i = 0; i < store_.size(); ++i) {
    if (bound_[i] && tape_.recording())
      out.push_back(tape_.grad(*bound_[i]));
    else
      out.emplace_back(store_.tensor(i).shape());
  }
  return out;
}

}  // namespace windgen::nn
