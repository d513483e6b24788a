#include "cegm/params.hpp"

#include "cegm/error.hpp"

namespace cegm {

std::string_view role_name(Role r) noexcept {
  return r == Role::kEmbeddingAligned ? "embedding-aligned" : "generic";
}

void NamedTensors::insert(std::string name, Tensor value) {
  if (index_.contains(name)) throw Error("duplicate tensor name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.emplace_back(std::move(name), std::move(value));
}

bool NamedTensors::contains(std::string_view name) const {
  return index_.contains(std::string(name));
}

Tensor& NamedTensors::at(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw Error("no tensor named '" + std::string(name) + "'");
  return entries_[it->second].second;
}

const Tensor& NamedTensors::at(std::string_view name) const {
  return const_cast<NamedTensors&>(*this).at(name);
}

void ParamSet::add(std::string name, Tensor value, Role role) {
  if (index_.contains(name)) throw Error("duplicate parameter name '" + name + "'");
  index_.emplace(name, entries_.size());
  entries_.push_back(ParamEntry{std::move(name), std::move(value), role});
}

bool ParamSet::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t ParamSet::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw Error("no parameter named '" + std::string(name) + "'");
  return it->second;
}

const ParamEntry& ParamSet::entry(std::string_view name) const { return entries_[index_of(name)]; }
Tensor& ParamSet::value(std::string_view name) { return entries_[index_of(name)].value; }
const Tensor& ParamSet::value(std::string_view name) const { return entries_[index_of(name)].value; }

NamedTensors ParamSet::zeros_like() const {
  NamedTensors out;
  for (const auto& e : entries_) out.insert(e.name, Tensor::zeros_like(e.value));
  return out;
}

void ParamSet::check_embedding_dim(std::size_t d) const {
  for (const auto& e : entries_) {
    if (e.role == Role::kEmbeddingAligned && e.value.last_extent() != d)
      throw ShapeError("embedding-aligned parameter '" + e.name + "' has trailing extent " +
                       std::to_string(e.value.last_extent()) + ", context dimension is " +
                       std::to_string(d));
  }
}

std::size_t ParamSet::total_bytes() const noexcept {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.value.numel() * sizeof(double);
  return n;
}

}  // namespace cegm
