#pragma once

// Define-by-run reverse-mode differentiation over Tensor values.
//
// A Graph is an append-only tape: every builder call evaluates its op
// immediately, caches the value, and returns the new node id. Inputs always
// refer to earlier ids, so the tape is topologically ordered by construction
// and backward() is a single reverse sweep that visits each node once.

#include <deque>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "cegm/params.hpp"
#include "cegm/tensor.hpp"

namespace cegm {

using NodeId = std::size_t;

enum class OpKind {
  kInput,
  kParam,
  kMatmul,
  kAdd,
  kMultiply,
  kScale,
  kSum,
  kTanh,
  kRelu,
  kMeanPool,
  kSoftmax,
  kEmbedding,
  kCrossEntropy,
};

std::string_view op_name(OpKind k) noexcept;

class Graph {
 public:
  // Constant leaf; receives no gradient.
  NodeId input(Tensor value);
  // Leaf bound to a named parameter; its gradient is reported by backward().
  NodeId param(const ParamSet& params, std::string_view name);

  // Rank-1 or rank-2 product. Rank-1 left operands act as a single row and
  // rank-1 right operands as a single column; the unit extent is dropped
  // from the result. With transpose_b the right operand is taken as [n,k].
  NodeId matmul(NodeId a, NodeId b, bool transpose_b = false);
  // Same-shape sum, or b a rank-1 bias added to every trailing row of a.
  NodeId add(NodeId a, NodeId b);
  NodeId multiply(NodeId a, NodeId b);
  NodeId scale(NodeId a, double factor);
  // Sum of all entries, rank-0 result.
  NodeId sum(NodeId a);
  NodeId tanh(NodeId a);
  NodeId relu(NodeId a);
  // Mean over one axis; the axis is removed from the shape.
  NodeId mean_pool(NodeId a, std::size_t axis);
  // Softmax over the trailing axis, max-subtracted.
  NodeId softmax(NodeId a);
  // Rows of table[V,d] selected by ids; result shape is ids_shape + [d].
  NodeId embedding(NodeId table, std::vector<std::size_t> ids, Shape ids_shape);
  // Mean cross-entropy of logits[B,V] against class targets, softmax fused.
  // d(loss)/d(logits) = (softmax(logits) - onehot(targets)) / B.
  NodeId cross_entropy(NodeId logits, std::vector<std::size_t> targets);

  // The reference stays valid for the lifetime of the graph.
  const Tensor& value(NodeId id) const;
  OpKind kind(NodeId id) const;
  std::size_t size() const noexcept { return nodes_.size(); }

  // Gradient of the single-element node `loss` w.r.t. every parameter in
  // `params`. Parameters that do not appear on the tape get zeros.
  GradMap backward(NodeId loss, const ParamSet& params) const;

 private:
  struct Node {
    OpKind kind;
    std::vector<NodeId> inputs;
    Tensor value;
    std::string param_name{};          // kParam
    std::vector<std::size_t> ids{};    // kEmbedding ids, kCrossEntropy targets
    Tensor aux{};                      // kCrossEntropy probabilities
    std::size_t axis = 0;             // kMeanPool
    double factor = 0.0;              // kScale
    bool transpose_b = false;         // kMatmul
  };

  NodeId push(Node node);
  const Node& node(NodeId id) const;
  [[noreturn]] void shape_error(OpKind kind, const std::string& detail) const;

  std::deque<Node> nodes_;  // deque: value() references survive later pushes
};

}  // namespace cegm
