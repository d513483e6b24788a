#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "cegm/autodiff.hpp"
#include "cegm/models.hpp"
#include "cegm/tensor.hpp"

namespace cegm {

// ---- Character corpus ------------------------------------------------------

// Byte-level ids: each distinct byte gets its rank among the corpus's
// distinct bytes (ascending byte value), folded modulo vocab_size.
std::vector<std::size_t> map_bytes(std::string_view corpus, std::size_t vocab_size);

struct Window {
  std::vector<std::size_t> inputs;
  std::size_t target = 0;
};

// Stride-1 windows: inputs ids[i, i+w), target ids[i+w].
std::vector<Window> char_windows(std::span<const std::size_t> ids, std::size_t w);

// Fisher-Yates shuffle driven by SplitMix64(seed).
void shuffle_windows(std::vector<Window>& windows, std::uint64_t seed);

// Consecutive batches of batch_size; the last one may be short.
std::vector<TaskBatch> batch_windows(std::span<const Window> windows, std::size_t batch_size);

// map_bytes -> char_windows -> shuffle_windows(seed) -> batch_windows.
// Throws ConfigError if the corpus is empty or not longer than the window.
std::vector<TaskBatch> make_char_dataset(std::string_view corpus, const CharLMSpec& spec,
                                         std::size_t batch_size, std::uint64_t seed);

// ---- Copy / retention task -------------------------------------------------

inline constexpr std::array<std::size_t, 4> kCopySeqLens{8, 16, 32, 64};

// Uniform random windows whose target is the first token of the window.
// Throws ConfigError unless seq_len is in kCopySeqLens.
std::vector<TaskBatch> make_copy_task(std::size_t seq_len, std::size_t vocab_size,
                                      std::size_t num_batches, std::size_t batch_size,
                                      std::uint64_t seed);

// ---- Input noise -----------------------------------------------------------

inline constexpr std::array<int, 5> kNoiseLevels{0, 10, 20, 30, 40};

struct NoiseSpec {
  int level = 0;  // percent, one of kNoiseLevels

  void validate() const;
};

struct NoisyBatch {
  TaskBatch batch;
  std::size_t replaced = 0;  // tokens that drew a replacement
};

// Each input token is independently replaced with probability level/100 by
// a uniform id in [0, vocab_size). Targets are never touched.
NoisyBatch inject_noise(const TaskBatch& batch, const NoiseSpec& spec, std::size_t vocab_size,
                        std::uint64_t seed);

// ---- Convex quadratic ------------------------------------------------------

// L(theta) = 0.5 theta^T A theta with SPD A.
class QuadraticTask {
 public:
  explicit QuadraticTask(Tensor a);

  const Tensor& matrix() const noexcept { return a_; }
  std::size_t dim() const noexcept { return a_.shape()[0]; }

  double loss(const Tensor& theta) const;
  Tensor grad(const Tensor& theta) const;
  // Records 0.5 * sum(theta * (A theta)) with theta bound to params["theta"].
  NodeId build_loss(Graph& graph, const ParamSet& params) const;

 private:
  Tensor a_;
};

// A = Q diag(spectrum) Q^T with Q a seeded random rotation and the spectrum
// log-spaced in [1, conditioning]. conditioning == 1 gives exactly I.
QuadraticTask quadratic_task(std::size_t dim, double conditioning, std::uint64_t seed);

// ---- Embedding coherence ---------------------------------------------------

struct Coherence {
  double value = 0.0;
  bool zero_vector = false;  // a pooled vector was zero; value is 0
};

// Cosine of the mean-pooled embedding rows of two token sequences.
Coherence embedding_coherence(const Tensor& table, std::span<const std::size_t> tokens_a,
                              std::span<const std::size_t> tokens_b);

}  // namespace cegm
