#include "cegm/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <optional>

#include "cegm/error.hpp"
#include "cegm/kernels.hpp"

namespace cegm {

std::string_view op_name(OpKind k) noexcept {
  switch (k) {
    case OpKind::kInput: return "input";
    case OpKind::kParam: return "param";
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kMultiply: return "multiply";
    case OpKind::kScale: return "scale";
    case OpKind::kSum: return "sum";
    case OpKind::kTanh: return "tanh";
    case OpKind::kRelu: return "relu";
    case OpKind::kMeanPool: return "mean-pool";
    case OpKind::kSoftmax: return "softmax";
    case OpKind::kEmbedding: return "embedding-lookup";
    case OpKind::kCrossEntropy: return "cross-entropy";
  }
  return "?";
}

namespace {

struct MatmulDims {
  std::size_t m, k, n;
  Shape out;
};

// Row-wise stable softmax over the trailing extent.
void softmax_rows(std::span<const double> in, std::span<double> out, std::size_t width) {
  for (std::size_t r = 0; r < in.size() / width; ++r) {
    const double* x = in.data() + r * width;
    double* y = out.data() + r * width;
    const double mx = *std::max_element(x, x + width);
    double z = 0.0;
    for (std::size_t j = 0; j < width; ++j) z += (y[j] = std::exp(x[j] - mx));
    for (std::size_t j = 0; j < width; ++j) y[j] /= z;
  }
}

// Strides for reducing `axis`: shape = outer x len x inner.
struct AxisSplit {
  std::size_t outer, len, inner;
};

AxisSplit split_axis(const Shape& s, std::size_t axis) {
  AxisSplit a{1, s[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) a.outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) a.inner *= s[i];
  return a;
}

}  // namespace

const Graph::Node& Graph::node(NodeId id) const {
  if (id >= nodes_.size())
    throw Error("node id " + std::to_string(id) + " does not exist (graph has " +
                std::to_string(nodes_.size()) + " nodes)");
  return nodes_[id];
}

void Graph::shape_error(OpKind kind, const std::string& detail) const {
  throw ShapeError("node " + std::to_string(nodes_.size()) + " (" + std::string(op_name(kind)) +
                   "): " + detail);
}

NodeId Graph::push(Node n) {
  if (!n.value.all_finite())
    throw NumericError("node " + std::to_string(nodes_.size()) + " (" +
                       std::string(op_name(n.kind)) + ") produced a non-finite value");
  nodes_.push_back(std::move(n));
  return nodes_.size() - 1;
}

const Tensor& Graph::value(NodeId id) const { return node(id).value; }
OpKind Graph::kind(NodeId id) const { return node(id).kind; }

NodeId Graph::input(Tensor value) {
  Node n{.kind = OpKind::kInput, .inputs = {}, .value = std::move(value)};
  return push(std::move(n));
}

NodeId Graph::param(const ParamSet& params, std::string_view name) {
  Node n{.kind = OpKind::kParam, .inputs = {}, .value = params.value(name)};
  n.param_name = std::string(name);
  return push(std::move(n));
}

NodeId Graph::matmul(NodeId ia, NodeId ib, bool transpose_b) {
  const Tensor& a = node(ia).value;
  const Tensor& b = node(ib).value;
  if (a.rank() < 1 || a.rank() > 2 || b.rank() < 1 || b.rank() > 2)
    shape_error(OpKind::kMatmul, "operands must be rank 1 or 2, got " + shape_to_string(a.shape()) +
                                     " and " + shape_to_string(b.shape()));
  MatmulDims d{};
  d.m = a.rank() == 2 ? a.shape()[0] : 1;
  d.k = a.last_extent();
  std::size_t bk = 0;
  if (!transpose_b) {
    bk = b.shape()[0];
    d.n = b.rank() == 2 ? b.shape()[1] : 1;
  } else {
    bk = b.last_extent();
    d.n = b.rank() == 2 ? b.shape()[0] : 1;
  }
  if (bk != d.k)
    shape_error(OpKind::kMatmul, "expected inner extent " + std::to_string(d.k) + ", got " +
                                     std::to_string(bk) + " (shapes " + shape_to_string(a.shape()) +
                                     " x " + shape_to_string(b.shape()) + ")");
  if (a.rank() == 2) d.out.push_back(d.m);
  if (b.rank() == 2) d.out.push_back(d.n);
  Tensor out(d.out);
  if (!transpose_b)
    kernels::active().gemm_nn(d.m, d.k, d.n, a.data().data(), b.data().data(), out.data().data(), false);
  else
    kernels::active().gemm_nt(d.m, d.k, d.n, a.data().data(), b.data().data(), out.data().data(), false);
  Node n{.kind = OpKind::kMatmul, .inputs = {ia, ib}, .value = std::move(out)};
  n.transpose_b = transpose_b;
  return push(std::move(n));
}

NodeId Graph::add(NodeId ia, NodeId ib) {
  const Tensor& a = node(ia).value;
  const Tensor& b = node(ib).value;
  Tensor out(a.shape());
  if (a.same_shape(b)) {
    kernels::active().add(a.data().data(), b.data().data(), out.data().data(), a.numel());
  } else if (b.rank() == 1 && b.numel() == a.last_extent()) {
    const std::size_t w = a.last_extent();
    for (std::size_t r = 0; r < a.leading_rows(); ++r)
      kernels::active().add(a.row(r).data(), b.data().data(), out.row(r).data(), w);
  } else {
    shape_error(OpKind::kAdd, "expected " + shape_to_string(a.shape()) + " or bias [" +
                                  std::to_string(a.last_extent()) + "], got " +
                                  shape_to_string(b.shape()));
  }
  return push(Node{.kind = OpKind::kAdd, .inputs = {ia, ib}, .value = std::move(out)});
}

NodeId Graph::multiply(NodeId ia, NodeId ib) {
  const Tensor& a = node(ia).value;
  const Tensor& b = node(ib).value;
  if (!a.same_shape(b))
    shape_error(OpKind::kMultiply, "expected " + shape_to_string(a.shape()) + ", got " +
                                       shape_to_string(b.shape()));
  Tensor out(a.shape());
  kernels::active().mul(a.data().data(), b.data().data(), out.data().data(), a.numel());
  return push(Node{.kind = OpKind::kMultiply, .inputs = {ia, ib}, .value = std::move(out)});
}

NodeId Graph::scale(NodeId ia, double factor) {
  const Tensor& a = node(ia).value;
  Tensor out(a.shape());
  kernels::scale(factor, a.data(), out.data());
  Node n{.kind = OpKind::kScale, .inputs = {ia}, .value = std::move(out)};
  n.factor = factor;
  return push(std::move(n));
}

NodeId Graph::sum(NodeId ia) {
  const Tensor& a = node(ia).value;
  double s = 0.0;
  for (double v : a.data()) s += v;
  return push(Node{.kind = OpKind::kSum, .inputs = {ia}, .value = Tensor::scalar(s)});
}

NodeId Graph::tanh(NodeId ia) {
  const Tensor& a = node(ia).value;
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = std::tanh(a[i]);
  return push(Node{.kind = OpKind::kTanh, .inputs = {ia}, .value = std::move(out)});
}

NodeId Graph::relu(NodeId ia) {
  const Tensor& a = node(ia).value;
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] > 0.0 ? a[i] : 0.0;
  return push(Node{.kind = OpKind::kRelu, .inputs = {ia}, .value = std::move(out)});
}

NodeId Graph::mean_pool(NodeId ia, std::size_t axis) {
  const Tensor& a = node(ia).value;
  if (axis >= a.rank())
    shape_error(OpKind::kMeanPool, "axis " + std::to_string(axis) + " out of range for shape " +
                                       shape_to_string(a.shape()));
  const AxisSplit s = split_axis(a.shape(), axis);
  Shape out_shape = a.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  Tensor out(out_shape);
  const double inv = 1.0 / static_cast<double>(s.len);
  for (std::size_t o = 0; o < s.outer; ++o) {
    double* dst = out.data().data() + o * s.inner;
    for (std::size_t l = 0; l < s.len; ++l)
      kernels::active().add(dst, a.data().data() + (o * s.len + l) * s.inner, dst, s.inner);
    kernels::active().scale(inv, dst, dst, s.inner);
  }
  Node n{.kind = OpKind::kMeanPool, .inputs = {ia}, .value = std::move(out)};
  n.axis = axis;
  return push(std::move(n));
}

NodeId Graph::softmax(NodeId ia) {
  const Tensor& a = node(ia).value;
  if (a.rank() == 0) shape_error(OpKind::kSoftmax, "softmax needs rank >= 1");
  Tensor out(a.shape());
  softmax_rows(a.data(), out.data(), a.last_extent());
  return push(Node{.kind = OpKind::kSoftmax, .inputs = {ia}, .value = std::move(out)});
}

NodeId Graph::embedding(NodeId itable, std::vector<std::size_t> ids, Shape ids_shape) {
  const Tensor& table = node(itable).value;
  if (table.rank() != 2)
    shape_error(OpKind::kEmbedding, "table must be rank 2, got " + shape_to_string(table.shape()));
  if (shape_numel(ids_shape) != ids.size())
    shape_error(OpKind::kEmbedding, "ids shape " + shape_to_string(ids_shape) + " does not hold " +
                                        std::to_string(ids.size()) + " ids");
  const std::size_t vocab = table.shape()[0];
  const std::size_t d = table.shape()[1];
  Shape out_shape = ids_shape;
  out_shape.push_back(d);
  Tensor out(out_shape);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= vocab)
      shape_error(OpKind::kEmbedding, "id " + std::to_string(ids[i]) + " out of range for table of " +
                                          std::to_string(vocab) + " rows");
    std::copy_n(table.row(ids[i]).data(), d, out.row(i).data());
  }
  Node n{.kind = OpKind::kEmbedding, .inputs = {itable}, .value = std::move(out)};
  n.ids = std::move(ids);
  return push(std::move(n));
}

NodeId Graph::cross_entropy(NodeId ilogits, std::vector<std::size_t> targets) {
  const Tensor& logits = node(ilogits).value;
  if (logits.rank() != 2)
    shape_error(OpKind::kCrossEntropy, "logits must be [batch, classes], got " +
                                           shape_to_string(logits.shape()));
  const std::size_t batch = logits.shape()[0];
  const std::size_t classes = logits.shape()[1];
  if (targets.size() != batch)
    shape_error(OpKind::kCrossEntropy, "expected " + std::to_string(batch) + " targets, got " +
                                           std::to_string(targets.size()));
  Tensor probs(logits.shape());
  double total = 0.0;
  for (std::size_t r = 0; r < batch; ++r) {
    if (targets[r] >= classes)
      shape_error(OpKind::kCrossEntropy, "target " + std::to_string(targets[r]) + " out of range for " +
                                             std::to_string(classes) + " classes");
    const auto x = logits.row(r);
    const double mx = *std::max_element(x.begin(), x.end());
    double z = 0.0;
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(x[j] - mx);
    const double log_z = std::log(z);
    for (std::size_t j = 0; j < classes; ++j) probs.row(r)[j] = std::exp(x[j] - mx - log_z);
    total += log_z - (x[targets[r]] - mx);
  }
  Node n{.kind = OpKind::kCrossEntropy,
         .inputs = {ilogits},
         .value = Tensor::scalar(total / static_cast<double>(batch))};
  n.ids = std::move(targets);
  n.aux = std::move(probs);
  return push(std::move(n));
}

GradMap Graph::backward(NodeId loss, const ParamSet& params) const {
  if (node(loss).value.numel() != 1)
    throw ShapeError("backward: loss node " + std::to_string(loss) + " is not scalar (shape " +
                     shape_to_string(node(loss).value.shape()) + ")");
  const auto& kt = kernels::active();
  std::vector<std::optional<Tensor>> adj(loss + 1);
  adj[loss] = Tensor(node(loss).value.shape(), 1.0);

  auto accumulate = [&](NodeId id, const Tensor& g) {
    if (!adj[id]) {
      adj[id] = g;
    } else {
      kt.add(adj[id]->data().data(), g.data().data(), adj[id]->data().data(), g.numel());
    }
  };
  auto slot = [&](NodeId id) -> Tensor& {
    if (!adj[id]) adj[id] = Tensor::zeros_like(nodes_[id].value);
    return *adj[id];
  };

  GradMap grads = params.zeros_like();

  for (NodeId id = loss + 1; id-- > 0;) {
    if (!adj[id]) continue;
    const Node& n = nodes_[id];
    const Tensor& g = *adj[id];
    switch (n.kind) {
      case OpKind::kInput:
        break;
      case OpKind::kParam:
        if (grads.contains(n.param_name)) {
          Tensor& dst = grads.at(n.param_name);
          if (!dst.same_shape(g))
            throw ShapeError("backward: parameter '" + n.param_name + "' changed shape");
          kt.add(dst.data().data(), g.data().data(), dst.data().data(), g.numel());
        }
        break;
      case OpKind::kMatmul: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        const std::size_t m = a.rank() == 2 ? a.shape()[0] : 1;
        const std::size_t k = a.last_extent();
        const std::size_t nn = (g.numel()) / m;
        Tensor& da = slot(n.inputs[0]);
        Tensor& db = slot(n.inputs[1]);
        if (!n.transpose_b) {
          kt.gemm_nt(m, nn, k, g.data().data(), b.data().data(), da.data().data(), true);
          kt.gemm_tn(m, k, nn, a.data().data(), g.data().data(), db.data().data(), true);
        } else {
          kt.gemm_nn(m, nn, k, g.data().data(), b.data().data(), da.data().data(), true);
          kt.gemm_tn(m, nn, k, g.data().data(), a.data().data(), db.data().data(), true);
        }
        break;
      }
      case OpKind::kAdd: {
        const Tensor& b = nodes_[n.inputs[1]].value;
        accumulate(n.inputs[0], g);
        if (b.same_shape(g)) {
          accumulate(n.inputs[1], g);
        } else {
          Tensor& db = slot(n.inputs[1]);
          for (std::size_t r = 0; r < g.leading_rows(); ++r)
            kt.add(db.data().data(), g.row(r).data(), db.data().data(), db.numel());
        }
        break;
      }
      case OpKind::kMultiply: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const Tensor& b = nodes_[n.inputs[1]].value;
        Tensor t(g.shape());
        kt.mul(g.data().data(), b.data().data(), t.data().data(), g.numel());
        accumulate(n.inputs[0], t);
        kt.mul(g.data().data(), a.data().data(), t.data().data(), g.numel());
        accumulate(n.inputs[1], t);
        break;
      }
      case OpKind::kScale: {
        Tensor t(g.shape());
        kt.scale(n.factor, g.data().data(), t.data().data(), g.numel());
        accumulate(n.inputs[0], t);
        break;
      }
      case OpKind::kSum: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        accumulate(n.inputs[0], Tensor(a.shape(), g.item()));
        break;
      }
      case OpKind::kTanh: {
        Tensor t(g.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) t[i] = g[i] * (1.0 - n.value[i] * n.value[i]);
        accumulate(n.inputs[0], t);
        break;
      }
      case OpKind::kRelu: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        Tensor t(g.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) t[i] = a[i] > 0.0 ? g[i] : 0.0;
        accumulate(n.inputs[0], t);
        break;
      }
      case OpKind::kMeanPool: {
        const Tensor& a = nodes_[n.inputs[0]].value;
        const AxisSplit s = split_axis(a.shape(), n.axis);
        const double inv = 1.0 / static_cast<double>(s.len);
        Tensor& da = slot(n.inputs[0]);
        for (std::size_t o = 0; o < s.outer; ++o)
          for (std::size_t l = 0; l < s.len; ++l)
            kt.axpy(inv, g.data().data() + o * s.inner, da.data().data() + (o * s.len + l) * s.inner,
                    s.inner);
        break;
      }
      case OpKind::kSoftmax: {
        const std::size_t w = g.last_extent();
        Tensor t(g.shape());
        for (std::size_t r = 0; r < g.leading_rows(); ++r) {
          const auto y = n.value.row(r);
          const auto gy = g.row(r);
          const double inner = kt.dot(y.data(), gy.data(), w);
          auto dx = t.row(r);
          for (std::size_t j = 0; j < w; ++j) dx[j] = y[j] * (gy[j] - inner);
        }
        accumulate(n.inputs[0], t);
        break;
      }
      case OpKind::kEmbedding: {
        Tensor& dt = slot(n.inputs[0]);
        const std::size_t d = dt.last_extent();
        for (std::size_t i = 0; i < n.ids.size(); ++i)
          kt.add(dt.row(n.ids[i]).data(), g.row(i).data(), dt.row(n.ids[i]).data(), d);
        break;
      }
      case OpKind::kCrossEntropy: {
        const std::size_t batch = n.aux.shape()[0];
        Tensor t = n.aux;
        for (std::size_t r = 0; r < batch; ++r) t.row(r)[n.ids[r]] -= 1.0;
        kt.scale(g.item() / static_cast<double>(batch), t.data().data(), t.data().data(), t.numel());
        accumulate(n.inputs[0], t);
        break;
      }
    }
  }
  for (const auto& [name, t] : grads)
    if (!t.all_finite()) throw NumericError("backward: non-finite gradient for '" + name + "'");
  return grads;
}

}  // namespace cegm
