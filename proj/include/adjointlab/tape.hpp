#pragma once

#include "adjointlab/tensor.hpp"

#include <any>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

namespace adjointlab {

using NodeId = int;

/// A coarse-grained differentiable operator. `forward` computes the output
/// from the input tensors and may cache data for the backward pass in `ctx`;
/// `backward` maps the upstream gradient to exactly one gradient per input,
/// each shape-matching its input. Both functions must be pure with respect to
/// their arguments so distinct graphs can evaluate concurrently.
struct CustomOp {
  using Inputs = std::vector<const Tensor*>;
  using ForwardFn = std::function<Tensor(const Inputs& inputs, std::any& ctx)>;
  using BackwardFn = std::function<std::vector<Tensor>(const Tensor& upstream, const std::any& ctx,
                                                       const Inputs& inputs, const Tensor& output)>;

  std::string name;
  ForwardFn forward;
  BackwardFn backward;
};

/// Name-keyed operator registry. Registration returns a stable handle; names
/// must be unique.
class OpRegistry {
 public:
  const CustomOp* register_op(CustomOp op);
  const CustomOp* find(const std::string& name) const;
  std::vector<std::string> names() const;

 private:
  std::vector<std::unique_ptr<CustomOp>> ops_;
  std::unordered_map<std::string, const CustomOp*> by_name_;
};

/// Loop construct: `n_steps`-fold composition of `step_op`, recorded as a
/// single graph node. The step op maps (carry, params...) -> carry of
/// identical shape. The backward pass recomputes intermediate carries from
/// checkpoints spaced `checkpoint_stride` apart instead of storing every
/// iterate; stride 0 selects ceil(sqrt(n_steps)).
struct ScanSpec {
  const CustomOp* step_op = nullptr;
  int n_steps = 0;
  std::vector<Eigen::Index> carry_shape;
  int checkpoint_stride = 0;
};

struct TapeNode {
  NodeId id = -1;
  std::string op_name;
  std::vector<NodeId> input_ids;
  Tensor value;
  bool has_value = false;
  std::any backward_context;
  const CustomOp* op = nullptr;                // null for placeholders and scans
  std::shared_ptr<const ScanSpec> scan;        // set for scan nodes
  std::vector<Eigen::Index> placeholder_dims;  // set for placeholders

  bool is_placeholder() const { return op == nullptr && scan == nullptr; }
};

/// Append-only computational graph of operator applications. Node ids are
/// contiguous and equal to append order, so id order is a topological order.
/// A graph is single-writer: record/forward_eval/backward must be externally
/// serialized per graph; distinct graphs are independent.
class TapeGraph {
 public:
  TapeGraph() : registry_(std::make_shared<OpRegistry>()) {}
  explicit TapeGraph(std::shared_ptr<OpRegistry> registry) : registry_(std::move(registry)) {}

  OpRegistry& registry() { return *registry_; }
  const OpRegistry& registry() const { return *registry_; }

  /// Externally fed leaf. `dims` fixes the shape of every feed.
  NodeId placeholder(std::vector<Eigen::Index> dims);

  /// Appends one node applying a registered op; does not evaluate.
  NodeId record(const std::string& op_name, const std::vector<NodeId>& inputs);

  /// Appends a scan node. inputs = {init, static_params...}; the result is the
  /// final carry.
  NodeId record_scan(ScanSpec spec, NodeId init, const std::vector<NodeId>& static_params);

  /// Evaluates every node in id order; every placeholder must be fed. Returns
  /// the value of each node. Backward contexts are cached per node.
  std::unordered_map<NodeId, Tensor> forward_eval(const std::map<NodeId, Tensor>& feeds);

  /// Reverse sweep from a scalar loss node. Gradients accumulate by summation
  /// at fan-out; the result holds one entry per ancestor of the loss
  /// (non-ancestors are absent).
  std::unordered_map<NodeId, Tensor> backward(NodeId loss_id) const;

  const Tensor& value(NodeId id) const;
  const TapeNode& node(NodeId id) const;
  NodeId num_nodes() const { return static_cast<NodeId>(nodes_.size()); }

 private:
  void check_node_id(NodeId id, const char* what) const;
  Tensor eval_scan(TapeNode& n, const CustomOp::Inputs& inputs) const;
  std::vector<Tensor> backward_scan(const TapeNode& n, const Tensor& upstream) const;

  std::shared_ptr<OpRegistry> registry_;
  std::vector<TapeNode> nodes_;
};

}  // namespace adjointlab
