#include "samukd/tape.hpp"

#include "samukd/error.hpp"

namespace samukd {

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), {}, {}, nullptr, false});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(Parameter& p) {
  if (auto it = param_leaves_.find(&p); it != param_leaves_.end()) return Var{this, it->second};
  nodes_.push_back(Node{p.value, {}, {}, &p, record_ && p.trainable});
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_leaves_.emplace(&p, id);
  return Var{this, id};
}

bool Tape::any_needs_grad(std::initializer_list<Var> vars) const {
  if (!record_) return false;
  for (auto v : vars) {
    if (nodes_[v.id].needs_grad) return true;
  }
  return false;
}

Var Tape::push(Tensor value, std::initializer_list<Var> inputs, BackwardFn fn) {
  bool needs = false;
  if (record_) {
    for (auto v : inputs) needs = needs || nodes_[v.id].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, needs});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::push(Tensor value, const std::vector<Var>& inputs, BackwardFn fn) {
  bool needs = false;
  if (record_) {
    for (auto v : inputs) needs = needs || nodes_[v.id].needs_grad;
  }
  nodes_.push_back(Node{std::move(value), {}, needs ? std::move(fn) : BackwardFn{}, nullptr, needs});
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Tensor& Tape::grad(std::uint32_t id) {
  auto& n = nodes_[id];
  if (n.grad.empty()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

void Tape::backward(Var output) {
  if (!record_) throw ContractError("backward() called on a non-recording tape");
  if (output.tape != this) throw ContractError("backward() output belongs to another tape");
  if (nodes_[output.id].value.size() != 1) {
    throw ContractError("backward() requires a scalar output, got shape " +
                        shape_string(nodes_[output.id].value.shape()));
  }
  for (auto& n : nodes_) n.grad = Tensor();
  visits_ = 0;
  order_.clear();
  grad(output.id)[0] = 1.0;
  for (std::uint32_t i = output.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (n.grad.empty() || !n.needs_grad) continue;
    if (n.backward) {
      n.backward(*this, i);
      ++visits_;
      order_.push_back(i);
    } else if (n.param != nullptr && n.param->trainable) {
      auto pg = n.param->grad.values();
      const auto g = n.grad.values();
      for (std::size_t k = 0; k < pg.size(); ++k) pg[k] += g[k];
    }
  }
}

}  // namespace samukd
