#pragma once

// Binary checkpoint, all integers and floats little-endian:
//
//   "CEGM1"                         5-byte magic
//   u32 format version (1)
//   u64 vocab_size, embed_dim, window, hidden
//   u64 seed
//   32  config identity hash (SHA-256)
//   u64 epochs completed
//   u32 parameter count, then per parameter:
//       str name, u8 role, tensor
//   optimizer state:
//       u8 kind, f64 lambda, u8 has_prev_loss, f64 prev_loss, u64 step,
//       u32 slot count, then per slot: str name, u32 count, (str name, tensor)*
//
//   str    = u32 length + bytes
//   tensor = u32 rank + u64 extent * rank + f64 payload (row-major)

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "cegm/models.hpp"
#include "cegm/optimizer.hpp"
#include "cegm/params.hpp"

namespace cegm::harness {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  CharLMSpec model;  // all zero for tasks without a CharLM
  std::uint64_t seed = 0;
  std::array<std::uint8_t, 32> config_hash{};
  std::uint64_t epochs_completed = 0;
  ParamSet params;
  OptimizerSnapshot optimizer;

  bool operator==(const Checkpoint&) const = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
// Throws FormatError on bad magic, unknown version, or truncation.
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cegm::harness
