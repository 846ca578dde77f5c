#include "adjointlab/tape.hpp"

#include <cmath>
#include <stdexcept>

namespace adjointlab {

namespace {

// Forward-pass payload of a scan node: the carries saved at the start of each
// checkpoint window.
struct ScanForwardContext {
  std::vector<Tensor> checkpoints;
};

int effective_stride(const ScanSpec& spec) {
  if (spec.checkpoint_stride > 0) return spec.checkpoint_stride;
  if (spec.n_steps <= 1) return 1;
  return static_cast<int>(std::ceil(std::sqrt(static_cast<double>(spec.n_steps))));
}

}  // namespace

const CustomOp* OpRegistry::register_op(CustomOp op) {
  if (op.name.empty()) throw std::invalid_argument("register_op: empty op name");
  if (by_name_.count(op.name)) {
    throw std::invalid_argument("register_op: duplicate op name '" + op.name + "'");
  }
  ops_.push_back(std::make_unique<CustomOp>(std::move(op)));
  const CustomOp* handle = ops_.back().get();
  by_name_.emplace(handle->name, handle);
  return handle;
}

const CustomOp* OpRegistry::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

std::vector<std::string> OpRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(ops_.size());
  for (const auto& op : ops_) out.push_back(op->name);
  return out;
}

void TapeGraph::check_node_id(NodeId id, const char* what) const {
  if (id < 0 || id >= num_nodes()) {
    throw std::invalid_argument(std::string(what) + ": unknown node id " + std::to_string(id));
  }
}

NodeId TapeGraph::placeholder(std::vector<Eigen::Index> dims) {
  TapeNode n;
  n.id = num_nodes();
  n.op_name = "placeholder";
  n.placeholder_dims = std::move(dims);
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

NodeId TapeGraph::record(const std::string& op_name, const std::vector<NodeId>& inputs) {
  const CustomOp* op = registry_->find(op_name);
  if (op == nullptr) throw std::invalid_argument("record: unregistered op name '" + op_name + "'");
  for (NodeId in : inputs) check_node_id(in, "record");
  TapeNode n;
  n.id = num_nodes();
  n.op_name = op_name;
  n.input_ids = inputs;
  n.op = op;
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

NodeId TapeGraph::record_scan(ScanSpec spec, NodeId init, const std::vector<NodeId>& static_params) {
  if (spec.step_op == nullptr) throw std::invalid_argument("record_scan: null step op");
  if (spec.n_steps < 0) throw std::invalid_argument("record_scan: n_steps < 0");
  if (spec.checkpoint_stride < 0) throw std::invalid_argument("record_scan: negative stride");
  if (spec.n_steps > 0 && spec.checkpoint_stride > spec.n_steps) {
    throw std::invalid_argument("record_scan: checkpoint_stride exceeds n_steps");
  }
  check_node_id(init, "record_scan");
  for (NodeId in : static_params) check_node_id(in, "record_scan");
  TapeNode n;
  n.id = num_nodes();
  n.op_name = "scan:" + spec.step_op->name;
  n.input_ids.push_back(init);
  n.input_ids.insert(n.input_ids.end(), static_params.begin(), static_params.end());
  n.scan = std::make_shared<const ScanSpec>(std::move(spec));
  nodes_.push_back(std::move(n));
  return nodes_.back().id;
}

Tensor TapeGraph::eval_scan(TapeNode& n, const CustomOp::Inputs& inputs) const {
  const ScanSpec& spec = *n.scan;
  Tensor carry = *inputs[0];
  if (carry.dims() != spec.carry_shape) {
    throw std::runtime_error("scan: init shape " + carry.shape_string() + " does not match carry shape");
  }
  const int stride = effective_stride(spec);
  ScanForwardContext ctx;
  CustomOp::Inputs step_inputs(inputs);
  for (int k = 0; k < spec.n_steps; ++k) {
    if (k % stride == 0) ctx.checkpoints.push_back(carry);
    step_inputs[0] = &carry;
    std::any step_ctx;
    Tensor next = spec.step_op->forward(step_inputs, step_ctx);
    if (!next.same_shape(carry)) {
      throw std::runtime_error("scan: carry shape drift at step " + std::to_string(k) + " in " + n.op_name);
    }
    carry = std::move(next);
  }
  n.backward_context = std::move(ctx);
  return carry;
}

std::unordered_map<NodeId, Tensor> TapeGraph::forward_eval(const std::map<NodeId, Tensor>& feeds) {
  for (const auto& [id, t] : feeds) {
    check_node_id(id, "forward_eval feed");
    if (!nodes_[id].is_placeholder()) {
      throw std::invalid_argument("forward_eval: feed targets non-placeholder node " + std::to_string(id));
    }
    (void)t;
  }
  for (TapeNode& n : nodes_) {
    n.value = Tensor();
    n.has_value = false;
    n.backward_context.reset();
  }
  for (TapeNode& n : nodes_) {
    if (n.is_placeholder()) {
      auto it = feeds.find(n.id);
      if (it == feeds.end()) {
        throw std::invalid_argument("forward_eval: missing feed for placeholder " + std::to_string(n.id));
      }
      if (it->second.dims() != n.placeholder_dims) {
        throw std::invalid_argument("forward_eval: feed shape " + it->second.shape_string() +
                                    " mismatches placeholder " + std::to_string(n.id));
      }
      n.value = it->second;
    } else {
      CustomOp::Inputs inputs;
      inputs.reserve(n.input_ids.size());
      for (NodeId in : n.input_ids) inputs.push_back(&nodes_[in].value);
      if (n.scan) {
        n.value = eval_scan(n, inputs);
      } else {
        std::any ctx;
        n.value = n.op->forward(inputs, ctx);
        n.backward_context = std::move(ctx);
      }
    }
    n.has_value = true;
  }
  std::unordered_map<NodeId, Tensor> out;
  out.reserve(nodes_.size());
  for (const TapeNode& n : nodes_) out.emplace(n.id, n.value);
  return out;
}

std::vector<Tensor> TapeGraph::backward_scan(const TapeNode& n, const Tensor& upstream) const {
  const ScanSpec& spec = *n.scan;
  const auto* fctx = std::any_cast<ScanForwardContext>(&n.backward_context);
  if (fctx == nullptr) throw std::logic_error("scan backward: missing forward context");
  const int stride = effective_stride(spec);

  CustomOp::Inputs params;
  for (size_t i = 1; i < n.input_ids.size(); ++i) params.push_back(&nodes_[n.input_ids[i]].value);

  Tensor g_carry = upstream;
  std::vector<Tensor> g_params;
  for (const Tensor* p : params) g_params.push_back(Tensor::zeros_like(*p));

  if (spec.n_steps > 0) {
    const int n_windows = static_cast<int>(fctx->checkpoints.size());
    for (int w = n_windows - 1; w >= 0; --w) {
      const int start = w * stride;
      const int end = std::min(start + stride, spec.n_steps);
      // Recompute the carries of this window from its checkpoint.
      std::vector<Tensor> carries;       // carries[k] = carry before step start+k
      std::vector<std::any> contexts;    // per-step backward context
      std::vector<Tensor> outputs;       // carry after each step
      carries.push_back(fctx->checkpoints[w]);
      CustomOp::Inputs step_inputs;
      step_inputs.push_back(nullptr);
      step_inputs.insert(step_inputs.end(), params.begin(), params.end());
      for (int k = start; k < end; ++k) {
        step_inputs[0] = &carries.back();
        std::any ctx;
        outputs.push_back(spec.step_op->forward(step_inputs, ctx));
        contexts.push_back(std::move(ctx));
        if (k + 1 < end) carries.push_back(outputs.back());
      }
      for (int k = end - 1; k >= start; --k) {
        const int local = k - start;
        step_inputs[0] = &carries[local];
        std::vector<Tensor> grads =
            spec.step_op->backward(g_carry, contexts[local], step_inputs, outputs[local]);
        if (grads.size() != step_inputs.size()) {
          throw std::logic_error("scan backward: step op returned wrong gradient count");
        }
        g_carry = std::move(grads[0]);
        for (size_t j = 0; j < g_params.size(); ++j) g_params[j] += grads[j + 1];
      }
    }
  }

  std::vector<Tensor> out;
  out.push_back(std::move(g_carry));
  for (auto& g : g_params) out.push_back(std::move(g));
  return out;
}

std::unordered_map<NodeId, Tensor> TapeGraph::backward(NodeId loss_id) const {
  check_node_id(loss_id, "backward");
  const TapeNode& loss = nodes_[loss_id];
  if (!loss.has_value) throw std::logic_error("backward: called before forward_eval");
  if (!loss.value.is_scalar()) {
    throw std::invalid_argument("backward: loss node is not scalar, shape " + loss.value.shape_string());
  }

  std::unordered_map<NodeId, Tensor> grads;
  Tensor seed = Tensor::zeros_like(loss.value);
  seed[0] = 1.0;
  grads.emplace(loss_id, std::move(seed));

  for (NodeId id = loss_id; id >= 0; --id) {
    auto it = grads.find(id);
    if (it == grads.end()) continue;
    const TapeNode& n = nodes_[id];
    if (n.is_placeholder()) continue;
    if (!n.has_value) throw std::logic_error("backward: node evaluated out of order");

    CustomOp::Inputs inputs;
    inputs.reserve(n.input_ids.size());
    for (NodeId in : n.input_ids) inputs.push_back(&nodes_[in].value);

    std::vector<Tensor> input_grads =
        n.scan ? backward_scan(n, it->second)
               : n.op->backward(it->second, n.backward_context, inputs, n.value);
    if (input_grads.size() != n.input_ids.size()) {
      throw std::logic_error("backward: op '" + n.op_name + "' returned " +
                             std::to_string(input_grads.size()) + " gradients for " +
                             std::to_string(n.input_ids.size()) + " inputs");
    }
    for (size_t j = 0; j < input_grads.size(); ++j) {
      if (!input_grads[j].same_shape(*inputs[j])) {
        throw std::logic_error("backward: op '" + n.op_name + "' gradient " + std::to_string(j) +
                               " shape mismatch");
      }
      auto [slot, inserted] = grads.try_emplace(n.input_ids[j], std::move(input_grads[j]));
      if (!inserted) slot->second += input_grads[j];
    }
  }
  return grads;
}

const Tensor& TapeGraph::value(NodeId id) const {
  check_node_id(id, "value");
  if (!nodes_[id].has_value) throw std::logic_error("value: node not evaluated");
  return nodes_[id].value;
}

const TapeNode& TapeGraph::node(NodeId id) const {
  check_node_id(id, "node");
  return nodes_[id];
}

}  // namespace adjointlab
