#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "shuttle/numerics/param_store.hpp"
#include "shuttle/numerics/tensor.hpp"

namespace shuttle {

class Tape;

// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

// Define-by-run reverse-mode tape. Nodes are appended in evaluation order, so
// walking them backwards is a reverse topological order of the graph.
class Tape {
 public:
  // Receives the upstream gradient and the node's own forward value; pushes
  // input gradients via accumulate().
  using BackwardFn = std::function<void(const Tensor& grad_out, const Tensor& out, Tape& tape)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);

  // Leaf bound to a stored parameter. Repeated calls return the same node so
  // gradients of a parameter reused across steps and time accumulate in one place.
  Var param(ParamStore& store, std::string_view name);

  Var record(std::string op, Tensor value, const std::vector<Var>& inputs, BackwardFn backward);

  bool requires_grad(const Var& v) const { return nodes_[v.id()].requires_grad; }
  void accumulate(const Var& v, const Tensor& grad);
  void accumulate(const Var& v, Tensor&& grad);

  // Seeds d(loss)/d(loss) = 1, walks the tape once in reverse and adds the
  // parameter gradients into their ParamStore accumulators. Consumes the tape.
  void backward(const Var& loss);

  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const std::string& op(std::size_t id) const { return nodes_.at(id).op; }
  std::size_t size() const { return nodes_.size(); }
  bool consumed() const { return consumed_; }

  // Description of the first node holding a NaN or Inf, if any.
  std::optional<std::string> first_non_finite() const;

 private:
  struct Node {
    std::string op;
    Tensor value;
    Tensor grad;
    bool has_grad = false;
    bool requires_grad = false;
    BackwardFn backward;
    ParamStore* store = nullptr;
    std::size_t param_index = 0;
  };

  std::deque<Node> nodes_;
  std::map<std::pair<const ParamStore*, std::size_t>, std::size_t> param_nodes_;
  bool consumed_ = false;
};

// Test hook: multiplies the upstream gradient of every node with the given op
// name by `factor` during backward. An empty op name disables it.
void set_backward_fault(std::string op, double factor);
void clear_backward_fault();

}  // namespace shuttle
