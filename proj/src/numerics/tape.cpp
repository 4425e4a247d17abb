#include "shuttle/numerics/tape.hpp"

#include <cmath>

#include "shuttle/errors.hpp"

namespace shuttle {

namespace {

struct BackwardFault {
  std::string op;
  double factor = 1.0;
};

BackwardFault& fault() {
  static BackwardFault f;
  return f;
}

}  // namespace

void set_backward_fault(std::string op, double factor) { fault() = {std::move(op), factor}; }
void clear_backward_fault() { fault() = {}; }

const Tensor& Var::value() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return tape_->value(id_);
}

Var Tape::constant(Tensor value) {
  Node n;
  n.op = "constant";
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(ParamStore& store, std::string_view name) {
  const std::size_t index = store.index_of(name);
  const auto key = std::make_pair(static_cast<const ParamStore*>(&store), index);
  if (auto it = param_nodes_.find(key); it != param_nodes_.end()) return Var(this, it->second);
  Node n;
  n.op = "param:" + store.entry(index).name;
  n.value = store.entry(index).value;
  n.requires_grad = true;
  n.store = &store;
  n.param_index = index;
  nodes_.push_back(std::move(n));
  param_nodes_.emplace(key, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(std::string op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward) {
  if (consumed_) throw ContractError("tape already consumed by backward()");
  Node n;
  n.op = std::move(op);
  n.value = std::move(value);
  for (const auto& in : inputs) {
    if (in.tape_ != this) throw ContractError("operand of '" + n.op + "' belongs to another tape");
    n.requires_grad = n.requires_grad || nodes_[in.id()].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var& v, const Tensor& grad) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (grad.shape() != n.value.shape()) {
    throw DimensionError("gradient shape " + to_string(grad.shape()) + " does not match value shape " +
                         to_string(n.value.shape()) + " of '" + n.op + "'");
  }
  if (!n.has_grad) {
    n.grad = grad;
    n.has_grad = true;
    return;
  }
  for (std::size_t i = 0; i < grad.size(); ++i) n.grad[i] += grad[i];
}

void Tape::accumulate(const Var& v, Tensor&& grad) {
  Node& n = nodes_[v.id()];
  if (!n.requires_grad) return;
  if (!n.has_grad && grad.shape() == n.value.shape()) {
    n.grad = std::move(grad);
    n.has_grad = true;
    return;
  }
  accumulate(v, static_cast<const Tensor&>(grad));
}

void Tape::backward(const Var& loss) {
  if (consumed_) throw ContractError("tape already consumed by backward()");
  if (loss.tape_ != this) throw ContractError("loss belongs to another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " + to_string(loss.shape()));
  }
  consumed_ = true;
  Node& root = nodes_[loss.id()];
  if (!root.requires_grad) return;
  root.grad = Tensor(root.value.shape(), 1.0);
  root.has_grad = true;

  const BackwardFault f = fault();
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.store) {
      Tensor& acc = n.store->entry(n.param_index).grad;
      for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += n.grad[k];
      continue;
    }
    if (!n.backward) continue;
    if (!f.op.empty() && n.op == f.op) {
      for (auto& g : n.grad.values()) g *= f.factor;
    }
    n.backward(n.grad, n.value, *this);
    // Intermediate gradients are no longer needed once propagated.
    n.grad = Tensor();
    n.has_grad = false;
  }
}

std::optional<std::string> Tape::first_non_finite() const {
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    if (!nodes_[i].value.all_finite()) {
      return "node #" + std::to_string(i) + " '" + nodes_[i].op + "' " + to_string(nodes_[i].value.shape());
    }
  }
  return std::nullopt;
}

}  // namespace shuttle
