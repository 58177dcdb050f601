#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "samukd/tape.hpp"

namespace samukd {

enum class Activation { kRelu, kGelu, kTanh };

// Throws ConfigError for anything other than "relu", "gelu" or "tanh".
Activation parse_activation(std::string_view name);
const char* activation_name(Activation kind);

// Scalar forms, shared by the ops below and by test oracles.
double gelu(double x);
double gelu_derivative(double x);

// --- elementwise / structural -------------------------------------------

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double c);
// x[m×n] + bias[n] broadcast over rows.
Var add_row(Var x, Var bias);
// Elementwise product / sum with a constant tensor of the same shape.
Var mul_const(Var x, const Tensor& c);
Var add_const(Var x, const Tensor& c);
Var reshape(Var x, Shape shape);
Var transpose(Var x);
Var sum(Var x);
Var mean(Var x);
Var activation(Var x, Activation kind);

// --- linear algebra ------------------------------------------------------

// a[m×k] · b[k×n]. Throws DimensionError when the inner extents differ.
Var matmul(Var a, Var b);
// x[m×in] · w[in×out] + b[out]; `bias` may be a default Var{} (no bias).
Var linear(Var x, Var weight, Var bias);

// --- normalization -------------------------------------------------------

Var softmax_rows(Var x);
Var log_softmax_rows(Var x);
// Normalizes over the last extent, then applies gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);

// --- sequence ops --------------------------------------------------------

// Temporal convolution over x[L×Cin] with weight[(kernel·Cin)×Cout], zero
// padded on both ends. Output length (L + pad_left + pad_right - kernel)/stride + 1.
Var conv1d(Var x, Var weight, Var bias, std::size_t kernel, std::size_t stride,
           std::size_t pad_left, std::size_t pad_right);

// Scaled dot-product attention split over `heads` equal slices of the model
// dimension. With `causal`, query i only sees keys j <= i.
Var attention(Var q, Var k, Var v, std::size_t heads, bool causal);

// Rows of table[V×d] selected by ids -> [n×d].
Var gather_rows(Var table, std::span<const int> ids);
Var slice_rows(Var x, std::size_t begin, std::size_t count);
// out[t] = replace[t] ? row : x[t], where row has d values.
Var replace_rows(Var x, const std::vector<bool>& replace, Var row);

// --- losses --------------------------------------------------------------

// Σ_l -logp[l, target[l]] over rows of a log-probability matrix.
Var pick_nll(Var log_probs, std::span<const int> targets);
// (1-eps)·nll + eps·mean over the vocabulary of -logp (uniform soft target).
Var smoothed_nll(Var log_probs, std::span<const int> targets, double eps);

}  // namespace samukd
