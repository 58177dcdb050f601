#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <string>
#include <unordered_map>
#include <vector>

#include "samukd/tensor.hpp"

namespace samukd {

/// A learned weight. `grad` always has the shape of `value`; backward only
/// accumulates into it when `trainable` is set, so frozen parameters keep an
/// all-zero gradient.
struct Parameter {
  Tensor value;
  Tensor grad;
  bool trainable = true;

  Parameter() = default;
  explicit Parameter(Tensor v, bool is_trainable = true)
      : value(std::move(v)), grad(value.shape(), 0.0), trainable(is_trainable) {}

  void zero_grad() { grad.fill(0.0); }
};

using ParameterVisitor = std::function<void(const std::string& name, Parameter& p)>;

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Ordered record of executed ops. Values are computed eagerly as ops are
/// appended; backward() walks the record once in reverse.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, std::uint32_t self)>;

  // A non-recording tape skips closure storage entirely (inference, finite
  // differences); backward() on it is a contract error.
  explicit Tape(bool record = true) : record_(record) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return record_; }

  Var constant(Tensor value);
  // Repeated calls with the same parameter return the same leaf.
  Var param(Parameter& p);

  // Appends an op result. `fn` is kept only if some input needs a gradient.
  Var push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn);
  Var push(Tensor value, const std::vector<Var>& inputs, BackwardFn fn);

  bool needs_grad(Var v) const { return nodes_[v.id].needs_grad; }
  bool any_needs_grad(std::initializer_list<Var> vars) const;
  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& value(std::uint32_t id) const { return nodes_[id].value; }

  // Gradient buffer of a node, allocated (zero-filled) on first access.
  Tensor& grad(std::uint32_t id);
  Tensor& grad(Var v) { return grad(v.id); }
  bool has_grad(std::uint32_t id) const { return !nodes_[id].grad.empty(); }

  // Seeds d(output)/d(output) = 1 and propagates to every trainable
  // parameter reachable from `output`. Parameter grads are accumulated, not
  // overwritten.
  void backward(Var output);

  std::size_t size() const noexcept { return nodes_.size(); }
  // Number of op closures executed by the most recent backward().
  std::size_t last_backward_visits() const noexcept { return visits_; }
  const std::vector<std::uint32_t>& last_backward_order() const noexcept { return order_; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_map<Parameter*, std::uint32_t> param_leaves_;
  std::size_t visits_ = 0;
  std::vector<std::uint32_t> order_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

}  // namespace samukd
