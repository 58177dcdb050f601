#include "samukd/nn.hpp"

#include <cmath>

namespace samukd {

Tensor randn(Shape shape, double stddev, Rng& rng) {
  Tensor t(std::move(shape));
  std::normal_distribution<double> dist(0.0, stddev);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, double gain)
    : weight(randn({in, out}, gain / std::sqrt(static_cast<double>(in)), rng)),
      bias(Tensor({out}, 0.0)) {}

Linear Linear::zeros(std::size_t in, std::size_t out) {
  Linear l;
  l.weight = Parameter(Tensor({in, out}, 0.0));
  l.bias = Parameter(Tensor({out}, 0.0));
  return l;
}

void Linear::visit(const std::string& prefix, const ParameterVisitor& fn) {
  fn(prefix + ".weight", weight);
  fn(prefix + ".bias", bias);
}

LayerNormParams::LayerNormParams(std::size_t dim)
    : gain(Tensor({dim}, 1.0)), bias(Tensor({dim}, 0.0)) {}

void LayerNormParams::visit(const std::string& prefix, const ParameterVisitor& fn) {
  fn(prefix + ".gain", gain);
  fn(prefix + ".bias", bias);
}

MultiHeadAttention::MultiHeadAttention(std::size_t dim, std::size_t num_heads, Rng& rng)
    : query(dim, dim, rng), key(dim, dim, rng), value(dim, dim, rng), output(dim, dim, rng),
      heads(num_heads) {}

Var MultiHeadAttention::operator()(Tape& tape, Var queries, Var memory, bool causal) {
  return attend(tape, queries, key(tape, memory), value(tape, memory), causal);
}

Var MultiHeadAttention::attend(Tape& tape, Var queries, Var keys, Var values, bool causal) {
  Var q = query(tape, queries);
  return output(tape, attention(q, keys, values, heads, causal));
}

void MultiHeadAttention::visit(const std::string& prefix, const ParameterVisitor& fn) {
  query.visit(prefix + ".query", fn);
  key.visit(prefix + ".key", fn);
  value.visit(prefix + ".value", fn);
  output.visit(prefix + ".output", fn);
}

Conv1d::Conv1d(std::size_t in, std::size_t out, std::size_t kernel_width, std::size_t stride_len,
               std::size_t left, std::size_t right, Rng& rng, double gain)
    : weight(randn({kernel_width * in, out},
                   gain / std::sqrt(static_cast<double>(kernel_width * in)), rng)),
      bias(Tensor({out}, 0.0)),
      kernel(kernel_width),
      stride(stride_len),
      pad_left(left),
      pad_right(right) {}

void Conv1d::visit(const std::string& prefix, const ParameterVisitor& fn) {
  fn(prefix + ".weight", weight);
  fn(prefix + ".bias", bias);
}

Adapter::Adapter(std::size_t dim, std::size_t hidden, Rng& rng)
    : down(dim, hidden, rng), up(Linear::zeros(hidden, dim)) {}

Var Adapter::operator()(Tape& tape, Var y) {
  Var h = activation(down(tape, y), Activation::kRelu);
  return add(y, up(tape, h));
}

void Adapter::visit(const std::string& prefix, const ParameterVisitor& fn) {
  down.visit(prefix + ".down", fn);
  up.visit(prefix + ".up", fn);
}

std::size_t Adapter::parameter_count() const {
  return down.weight.value.size() + down.bias.value.size() + up.weight.value.size() +
         up.bias.value.size();
}

}  // namespace samukd
