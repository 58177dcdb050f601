#pragma once

#include <cstddef>
#include <random>
#include <string>

#include "samukd/ops.hpp"
#include "samukd/tape.hpp"

namespace samukd {

using Rng = std::mt19937_64;

// Gaussian tensor with the given standard deviation.
Tensor randn(Shape shape, double stddev, Rng& rng);

struct Linear {
  Parameter weight;  // [in×out]
  Parameter bias;    // [out]

  Linear() = default;
  // Weights ~ N(0, gain²/in), zero bias.
  Linear(std::size_t in, std::size_t out, Rng& rng, double gain = 1.0);
  static Linear zeros(std::size_t in, std::size_t out);

  Var operator()(Tape& tape, Var x) { return linear(x, tape.param(weight), tape.param(bias)); }
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

struct LayerNormParams {
  Parameter gain;
  Parameter bias;

  LayerNormParams() = default;
  explicit LayerNormParams(std::size_t dim);

  Var operator()(Tape& tape, Var x) { return layer_norm(x, tape.param(gain), tape.param(bias)); }
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

struct MultiHeadAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  MultiHeadAttention() = default;
  MultiHeadAttention(std::size_t dim, std::size_t num_heads, Rng& rng);

  Var operator()(Tape& tape, Var queries, Var memory, bool causal);
  // Attention over precomputed key/value projections of `memory`.
  Var attend(Tape& tape, Var queries, Var keys, Var values, bool causal);
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

struct Conv1d {
  Parameter weight;  // [(kernel·in)×out]
  Parameter bias;    // [out]
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad_left = 0;
  std::size_t pad_right = 0;

  Conv1d() = default;
  Conv1d(std::size_t in, std::size_t out, std::size_t kernel_width, std::size_t stride_len,
         std::size_t left, std::size_t right, Rng& rng, double gain = 1.0);

  Var operator()(Tape& tape, Var x) {
    return conv1d(x, tape.param(weight), tape.param(bias), kernel, stride, pad_left, pad_right);
  }
  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

/// Bottleneck feed-forward block with a residual path: y + up(relu(down(y))).
/// The up-projection starts at zero, so a fresh adapter is the identity.
struct Adapter {
  Linear down;
  Linear up;

  Adapter() = default;
  Adapter(std::size_t dim, std::size_t hidden, Rng& rng);

  Var operator()(Tape& tape, Var y);
  void visit(const std::string& prefix, const ParameterVisitor& fn);
  std::size_t parameter_count() const;
};

}  // namespace samukd
