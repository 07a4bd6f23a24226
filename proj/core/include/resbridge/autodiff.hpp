#pragma once

#include <vector>

#include "resbridge/tensor.hpp"

namespace resbridge {

// Reverse-mode tape over a fixed primitive set (matmul, add, row-broadcast
// add, sub, scalar/row scaling, tanh, gelu, mean-square, column concat,
// detach). Enough to express 2-3 layer MLPs and the bridge loss; not a
// general graph compiler.
//
// Node ids are indices into the tape; a tape is built per forward pass and
// discarded after backward().
class Tape {
 public:
  using NodeId = int;

  NodeId leaf(Tensor value);

  NodeId add(NodeId a, NodeId b);
  // mat [B, n] + row [n], broadcast over rows (bias add).
  NodeId add_rowvec(NodeId mat, NodeId row);
  NodeId sub(NodeId a, NodeId b);
  NodeId scale(NodeId a, double s);
  // Row i of `a` scaled by weights[i]; `a` must be [B, n].
  NodeId scale_rows(NodeId a, std::vector<double> weights);
  NodeId matmul(NodeId a, NodeId b);
  NodeId tanh(NodeId a);
  NodeId gelu(NodeId a);
  // Scalar: mean of squared entries.
  NodeId mean_sq(NodeId a);
  NodeId concat_cols(const std::vector<NodeId>& parts);
  // Value passes through, gradient is blocked.
  NodeId detach(NodeId a);

  const Tensor& value(NodeId id) const { return nodes_[static_cast<size_t>(id)].value; }
  const Tensor& grad(NodeId id) const { return nodes_[static_cast<size_t>(id)].grad; }

  // Accumulates gradients of the scalar at `loss` into every node; callable
  // more than once (gradients are reset each call).
  void backward(NodeId loss);

  size_t node_count() const { return nodes_.size(); }

 private:
  enum class Op {
    kLeaf, kAdd, kAddRowVec, kSub, kScale, kScaleRows, kMatmul,
    kTanh, kGelu, kMeanSq, kConcatCols, kDetach,
  };

  struct Node {
    Op op;
    std::vector<NodeId> in;
    double scalar = 0.0;
    std::vector<double> row_weights;
    Tensor value;
    Tensor grad;
  };

  NodeId push(Node n);

  std::vector<Node> nodes_;
};

}  // namespace resbridge
