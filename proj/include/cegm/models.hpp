#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "cegm/autodiff.hpp"
#include "cegm/context.hpp"
#include "cegm/params.hpp"

namespace cegm {

// Token-id windows with one class target per window.
struct TaskBatch {
  std::size_t batch = 0;
  std::size_t window = 0;
  std::vector<std::size_t> inputs;   // batch x window, row-major
  std::vector<std::size_t> targets;  // batch

  std::span<const std::size_t> input_row(std::size_t b) const {
    return std::span<const std::size_t>(inputs).subspan(b * window, window);
  }
  bool operator==(const TaskBatch&) const = default;
};

struct CharLMSpec {
  std::size_t vocab_size = 64;
  std::size_t embed_dim = 16;
  std::size_t window = 8;
  std::size_t hidden = 32;

  void validate() const;
  bool operator==(const CharLMSpec&) const = default;
};

// embedding[V,d] -> mean over the window -> tanh(x W1 + b1) -> h W2^T + b2.
//
// Parameters, in order:
//   embedding      [V, d]  embedding-aligned
//   hidden.weight  [d, h]
//   hidden.bias    [h]
//   output.weight  [V, h]  embedding-aligned when h == d
//   output.bias    [V]
class CharLM {
 public:
  explicit CharLM(CharLMSpec spec);

  const CharLMSpec& spec() const noexcept { return spec_; }

  ParamSet init_params(std::uint64_t seed) const;

  struct Forward {
    NodeId logits;
    NodeId loss;
  };
  // Records the forward pass of `batch` on `graph`.
  Forward forward(Graph& graph, const ParamSet& params, const TaskBatch& batch) const;
  NodeId logits(Graph& graph, const ParamSet& params, const TaskBatch& batch) const;

  // Embedding rows of the batch's distinct tokens, ascending id order.
  static ContextBatch context_for(const ParamSet& params, const TaskBatch& batch);

 private:
  CharLMSpec spec_;
};

// argmax of each logits row versus targets.
std::size_t count_correct(const Tensor& logits, std::span<const std::size_t> targets);

}  // namespace cegm
