#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cegm/tensor.hpp"

namespace cegm {

// Whether a tensor's trailing dimension lives in context-embedding space.
enum class Role { kGeneric, kEmbeddingAligned };

std::string_view role_name(Role r) noexcept;

// Insertion-ordered map of uniquely named tensors. Used for gradients and
// optimizer slots; iteration order is always insertion order.
class NamedTensors {
 public:
  using Entry = std::pair<std::string, Tensor>;

  void insert(std::string name, Tensor value);
  bool contains(std::string_view name) const;
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }

  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  bool operator==(const NamedTensors& o) const { return entries_ == o.entries_; }

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

using GradMap = NamedTensors;

struct ParamEntry {
  std::string name;
  Tensor value;
  Role role = Role::kGeneric;

  bool operator==(const ParamEntry&) const = default;
};

// Named model parameters with role tags, in insertion order.
class ParamSet {
 public:
  void add(std::string name, Tensor value, Role role = Role::kGeneric);
  bool contains(std::string_view name) const;
  const ParamEntry& entry(std::string_view name) const;
  Tensor& value(std::string_view name);
  const Tensor& value(std::string_view name) const;
  Role role(std::string_view name) const { return entry(name).role; }

  std::size_t size() const noexcept { return entries_.size(); }
  auto begin() noexcept { return entries_.begin(); }
  auto end() noexcept { return entries_.end(); }
  auto begin() const noexcept { return entries_.begin(); }
  auto end() const noexcept { return entries_.end(); }

  // Zero tensor per parameter, same names and shapes.
  NamedTensors zeros_like() const;
  // Throws ShapeError if any embedding-aligned tensor's trailing extent != d.
  void check_embedding_dim(std::size_t d) const;
  std::size_t total_bytes() const noexcept;

  bool operator==(const ParamSet& o) const { return entries_ == o.entries_; }

 private:
  std::size_t index_of(std::string_view name) const;

  std::vector<ParamEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

}  // namespace cegm
