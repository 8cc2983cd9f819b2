#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vgw/tensor.hpp"

namespace vgw {

using NodeId = int32_t;

enum class Op : uint8_t {
  kLeaf,
  kMatmul,
  kAdd,
  kMul,
  kScale,
  kSoftmax,     // over the last axis, max-subtracted
  kLayerNorm,   // over the last axis, eps 1e-6, no affine
  kGelu,        // exact erf form
  kSigmoid,
  kConcatTokens,  // over the leading (token) axis
  kSlice,
  kTranspose,
  kMean,   // over all elements, scalar result
  kSumSq,  // sum of squares over all elements, scalar result
};

const char* op_name(Op op);

// One gradient per named leaf, in leaf registration order.
struct GradEntry {
  std::string name;
  Tensor grad;
};
using GradMap = std::vector<GradEntry>;

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order,
// which is a topological order by construction; backward() walks the tape in
// exact reverse order with ordered accumulation, so gradients for identical
// inputs are bit-identical across runs.
//
// Every op validates operand shapes and checks its output for non-finite
// values, rejecting the graph with the op name on failure.
class Graph {
 public:
  // Borrowing leaf: the tensor must outlive the graph. Named leaves with
  // requires_grad are the differentiable parameters.
  NodeId leaf(const Tensor* value, std::string name = {}, bool requires_grad = false);
  // Owning constant (rotary tables, masks, data tensors).
  NodeId constant(Tensor value);

  NodeId matmul(NodeId a, NodeId b);
  // add/mul accept equal shapes, or a [1, d] / [d] second operand that is
  // broadcast across the rows of the first.
  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  NodeId softmax(NodeId a);
  NodeId layer_norm(NodeId a);
  NodeId gelu(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId concat_tokens(NodeId a, NodeId b);
  NodeId slice(NodeId a, int axis, int64_t start, int64_t len);
  NodeId transpose(NodeId a);
  NodeId mean(NodeId a);
  NodeId sum_sq(NodeId a);

  const Tensor& value(NodeId id) const;
  size_t size() const { return nodes_.size(); }

  // Reverse sweep from a scalar node. Returns gradients for every named
  // requires_grad leaf. May be called once per graph.
  GradMap backward(NodeId loss);

  static constexpr double kLayerNormEps = 1e-6;

 private:
  struct Node {
    Op op = Op::kLeaf;
    std::array<NodeId, 2> in{-1, -1};
    Tensor value;               // owned result (empty for borrowing leaves)
    const Tensor* ext = nullptr;  // borrowed leaf storage
    bool requires_grad = false;
    double scalar = 0.0;  // kScale factor
    int axis = 0;         // kSlice axis
    int64_t start = 0, len = 0;
    std::string name;
  };

  const Tensor& val(const Node& n) const { return n.ext ? *n.ext : n.value; }
  NodeId push(Node n);
  void check(NodeId id) const;
  const Node& node(NodeId id) const;

  std::vector<Node> nodes_;
  bool swept_ = false;
};

}  // namespace vgw
