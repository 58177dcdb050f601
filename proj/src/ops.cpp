#include "samukd/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "samukd/error.hpp"

namespace samukd {

namespace {

void require_same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ContractError("operands live on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

void accumulate(Tensor& dst, const Tensor& src) {
  auto d = dst.values();
  auto s = src.values();
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += s[i];
}

// c[m×n] += a[m×k] · b[k×n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    double* ci = c + i * n;
    const double* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// c[m×k] += a[m×n] · b[k×n]ᵀ
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n,
             std::size_t k) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double* bp = b + p * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += ai[j] * bp[j];
      c[i * k + p] += s;
    }
  }
}

// c[k×n] += a[m×k]ᵀ · b[m×n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
             std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

}  // namespace

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::kRelu;
  if (name == "gelu") return Activation::kGelu;
  if (name == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation kind '" + std::string(name) + "'");
}

const char* activation_name(Activation kind) {
  switch (kind) {
    case Activation::kRelu: return "relu";
    case Activation::kGelu: return "gelu";
    case Activation::kTanh: return "tanh";
  }
  return "?";
}

double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

double gelu_derivative(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape(av, bv, "add");
  Tensor out = av;
  accumulate(out, bv);
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a)) accumulate(t.grad(a), g);
    if (t.needs_grad(b)) accumulate(t.grad(b), g);
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape(av, bv, "sub");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a)) accumulate(t.grad(a), g);
    if (t.needs_grad(b)) {
      auto& gb = t.grad(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  require_same_shape(av, bv, "mul");
  Tensor out = av;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  return a.tape->push(std::move(out), {a, b}, [a, b](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& av = t.value(a);
    const auto& bv = t.value(b);
    if (t.needs_grad(a)) {
      auto& ga = t.grad(a);
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (t.needs_grad(b)) {
      auto& gb = t.grad(b);
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double c) {
  Tensor out = a.value();
  for (auto& v : out.values()) v *= c;
  return a.tape->push(std::move(out), {a}, [a, c](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& ga = t.grad(a);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += c * g[i];
  });
}

Var add_row(Var x, Var bias) {
  require_same_tape(x, bias);
  const auto& xv = x.value();
  const auto& bv = bias.value();
  const std::size_t n = xv.cols();
  if (bv.size() != n) {
    throw DimensionError("add_row: bias of " + std::to_string(bv.size()) + " values for " +
                         std::to_string(n) + " columns");
  }
  Tensor out = xv;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    for (std::size_t j = 0; j < n; ++j) row[j] += bv[j];
  }
  return x.tape->push(std::move(out), {x, bias}, [x, bias](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(x)) accumulate(t.grad(x), g);
    if (t.needs_grad(bias)) {
      auto& gb = t.grad(bias);
      const std::size_t n = g.cols();
      for (std::size_t r = 0; r < g.rows(); ++r) {
        for (std::size_t j = 0; j < n; ++j) gb[j] += g.at(r, j);
      }
    }
  });
}

Var mul_const(Var x, const Tensor& c) {
  const auto& xv = x.value();
  require_same_shape(xv, c, "mul_const");
  Tensor out = xv;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= c[i];
  return x.tape->push(std::move(out), {x}, [x, c](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i] * c[i];
  });
}

Var add_const(Var x, const Tensor& c) {
  const auto& xv = x.value();
  require_same_shape(xv, c, "add_const");
  Tensor out = xv;
  accumulate(out, c);
  return x.tape->push(std::move(out), {x}, [x](Tape& t, std::uint32_t self) {
    accumulate(t.grad(x), t.grad(self));
  });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(std::move(shape));
  return x.tape->push(std::move(out), {x}, [x](Tape& t, std::uint32_t self) {
    auto& gx = t.grad(x);
    const auto& g = t.grad(self);
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += g[i];
  });
}

Var transpose(Var x) {
  const auto& xv = x.value();
  const std::size_t m = xv.rows();
  const std::size_t n = xv.cols();
  Tensor out = Tensor::matrix(n, m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = xv.at(i, j);
  }
  return x.tape->push(std::move(out), {x}, [x, m, n](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) gx.at(i, j) += g.at(j, i);
    }
  });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  return x.tape->push(Tensor::scalar(s), {x}, [x](Tape& t, std::uint32_t self) {
    const double g = t.grad(self)[0];
    for (auto& v : t.grad(x).values()) v += g;
  });
}

Var mean(Var x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var activation(Var x, Activation kind) {
  Tensor out = x.value();
  switch (kind) {
    case Activation::kRelu:
      for (auto& v : out.values()) v = v > 0.0 ? v : 0.0;
      break;
    case Activation::kGelu:
      for (auto& v : out.values()) v = gelu(v);
      break;
    case Activation::kTanh:
      for (auto& v : out.values()) v = std::tanh(v);
      break;
  }
  return x.tape->push(std::move(out), {x}, [x, kind](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& xv = t.value(x);
    const auto& yv = t.value(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < gx.size(); ++i) {
      double d = 0.0;
      switch (kind) {
        case Activation::kRelu: d = xv[i] > 0.0 ? 1.0 : 0.0; break;
        case Activation::kGelu: d = gelu_derivative(xv[i]); break;
        case Activation::kTanh: d = 1.0 - yv[i] * yv[i]; break;
      }
      gx[i] += g[i] * d;
    }
  });
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  if (av.rank() != 2 || bv.rank() != 2) throw DimensionError("matmul expects rank-2 operands");
  const std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  if (bv.rows() != k) {
    throw DimensionError("matmul: " + shape_string(av.shape()) + " · " + shape_string(bv.shape()));
  }
  Tensor out = Tensor::matrix(m, n);
  gemm_nn(av.data(), bv.data(), out.data(), m, k, n);
  return a.tape->push(std::move(out), {a, b}, [a, b, m, k, n](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    if (t.needs_grad(a)) gemm_nt(g.data(), t.value(b).data(), t.grad(a).data(), m, n, k);
    if (t.needs_grad(b)) gemm_tn(t.value(a).data(), g.data(), t.grad(b).data(), m, k, n);
  });
}

Var linear(Var x, Var weight, Var bias) {
  require_same_tape(x, weight);
  const auto& xv = x.value();
  const auto& wv = weight.value();
  const std::size_t m = xv.rows(), k = xv.cols(), n = wv.cols();
  if (wv.rank() != 2 || wv.rows() != k) {
    throw DimensionError("linear: input " + shape_string(xv.shape()) + " with weight " +
                         shape_string(wv.shape()));
  }
  const bool has_bias = bias.tape != nullptr;
  if (has_bias && bias.value().size() != n) throw DimensionError("linear: bias size mismatch");
  Tensor out = Tensor::matrix(m, n);
  if (has_bias) {
    const auto& bv = bias.value();
    for (std::size_t r = 0; r < m; ++r) std::copy(bv.data(), bv.data() + n, out.row(r).data());
  }
  gemm_nn(xv.data(), wv.data(), out.data(), m, k, n);
  std::vector<Var> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return x.tape->push(std::move(out), inputs,
                      [x, weight, bias, has_bias, m, k, n](Tape& t, std::uint32_t self) {
                        const auto& g = t.grad(self);
                        if (t.needs_grad(x)) {
                          gemm_nt(g.data(), t.value(weight).data(), t.grad(x).data(), m, n, k);
                        }
                        if (t.needs_grad(weight)) {
                          gemm_tn(t.value(x).data(), g.data(), t.grad(weight).data(), m, k, n);
                        }
                        if (has_bias && t.needs_grad(bias)) {
                          auto& gb = t.grad(bias);
                          for (std::size_t r = 0; r < m; ++r) {
                            for (std::size_t j = 0; j < n; ++j) gb[j] += g.at(r, j);
                          }
                        }
                      });
}

Var softmax_rows(Var x) {
  Tensor out = x.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (auto& v : row) {
      v = std::exp(v - mx);
      s += v;
    }
    for (auto& v : row) v /= s;
  }
  return x.tape->push(std::move(out), {x}, [x](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& gx = t.grad(x);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double dot = 0.0;
      for (std::size_t j = 0; j < yr.size(); ++j) dot += yr[j] * gr[j];
      auto gxr = gx.row(r);
      for (std::size_t j = 0; j < yr.size(); ++j) gxr[j] += yr[j] * (gr[j] - dot);
    }
  });
}

Var log_softmax_rows(Var x) {
  Tensor out = x.value();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    auto row = out.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double s = 0.0;
    for (double v : row) s += std::exp(v - mx);
    const double lse = mx + std::log(s);
    for (auto& v : row) v -= lse;
  }
  return x.tape->push(std::move(out), {x}, [x](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const auto& y = t.value(self);
    auto& gx = t.grad(x);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      auto yr = y.row(r);
      auto gr = g.row(r);
      double gs = 0.0;
      for (double v : gr) gs += v;
      auto gxr = gx.row(r);
      for (std::size_t j = 0; j < yr.size(); ++j) gxr[j] += gr[j] - std::exp(yr[j]) * gs;
    }
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  const auto& xv = x.value();
  const std::size_t d = xv.cols();
  if (d < 2) throw DimensionError("layer_norm needs at least 2 features");
  if (gain.value().size() != d || bias.value().size() != d) {
    throw DimensionError("layer_norm: gain/bias must have " + std::to_string(d) + " values");
  }
  const std::size_t rows = xv.rows();
  Tensor normalized(xv.shape());
  std::vector<double> inv_std(rows);
  Tensor out(xv.shape());
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  for (std::size_t r = 0; r < rows; ++r) {
    auto xr = xv.row(r);
    double mu = 0.0;
    for (double v : xr) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : xr) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    auto nr = normalized.row(r);
    auto orow = out.row(r);
    for (std::size_t j = 0; j < d; ++j) {
      nr[j] = (xr[j] - mu) * inv_std[r];
      orow[j] = nr[j] * gv[j] + bv[j];
    }
  }
  return x.tape->push(
      std::move(out), {x, gain, bias},
      [x, gain, bias, normalized = std::move(normalized), inv_std = std::move(inv_std)](
          Tape& t, std::uint32_t self) {
        const auto& g = t.grad(self);
        const std::size_t d = g.cols();
        const auto& gv = t.value(gain);
        if (t.needs_grad(gain) || t.needs_grad(bias)) {
          auto& gg = t.grad(gain);
          auto& gb = t.grad(bias);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            for (std::size_t j = 0; j < d; ++j) {
              gg[j] += g.at(r, j) * normalized.at(r, j);
              gb[j] += g.at(r, j);
            }
          }
        }
        if (t.needs_grad(x)) {
          auto& gx = t.grad(x);
          std::vector<double> dn(d);
          for (std::size_t r = 0; r < g.rows(); ++r) {
            double mean_dn = 0.0, mean_dn_n = 0.0;
            for (std::size_t j = 0; j < d; ++j) {
              dn[j] = g.at(r, j) * gv[j];
              mean_dn += dn[j];
              mean_dn_n += dn[j] * normalized.at(r, j);
            }
            mean_dn /= static_cast<double>(d);
            mean_dn_n /= static_cast<double>(d);
            for (std::size_t j = 0; j < d; ++j) {
              gx.at(r, j) += inv_std[r] * (dn[j] - mean_dn - normalized.at(r, j) * mean_dn_n);
            }
          }
        }
      });
}

Var conv1d(Var x, Var weight, Var bias, std::size_t kernel, std::size_t stride,
           std::size_t pad_left, std::size_t pad_right) {
  const auto& xv = x.value();
  const auto& wv = weight.value();
  const std::size_t len = xv.rows();
  const std::size_t cin = xv.cols();
  const std::size_t cout = wv.cols();
  if (kernel == 0 || stride == 0) throw DimensionError("conv1d: kernel and stride must be >= 1");
  if (wv.rows() != kernel * cin) {
    throw DimensionError("conv1d: weight " + shape_string(wv.shape()) + " for kernel " +
                         std::to_string(kernel) + " and " + std::to_string(cin) + " channels");
  }
  if (bias.value().size() != cout) throw DimensionError("conv1d: bias size mismatch");
  const std::size_t padded = len + pad_left + pad_right;
  if (padded < kernel) throw DimensionError("conv1d: input shorter than kernel");
  const std::size_t out_len = (padded - kernel) / stride + 1;
  Tensor out = Tensor::matrix(out_len, cout);
  const auto& bv = bias.value();
  for (std::size_t o = 0; o < out_len; ++o) {
    auto orow = out.row(o);
    for (std::size_t c = 0; c < cout; ++c) orow[c] = bv[c];
    for (std::size_t tap = 0; tap < kernel; ++tap) {
      const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(o * stride + tap) -
                                 static_cast<std::ptrdiff_t>(pad_left);
      if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
      gemm_nn(xv.row(static_cast<std::size_t>(src)).data(), wv.data() + tap * cin * cout,
              orow.data(), 1, cin, cout);
    }
  }
  return x.tape->push(
      std::move(out), {x, weight, bias},
      [x, weight, bias, kernel, stride, pad_left, len, cin, cout, out_len](Tape& t,
                                                                          std::uint32_t self) {
        const auto& g = t.grad(self);
        const bool gx_needed = t.needs_grad(x);
        const bool gw_needed = t.needs_grad(weight);
        if (t.needs_grad(bias)) {
          auto& gb = t.grad(bias);
          for (std::size_t o = 0; o < out_len; ++o) {
            for (std::size_t c = 0; c < cout; ++c) gb[c] += g.at(o, c);
          }
        }
        if (!gx_needed && !gw_needed) return;
        const auto& xv = t.value(x);
        const auto& wv = t.value(weight);
        for (std::size_t o = 0; o < out_len; ++o) {
          const double* go = g.row(o).data();
          for (std::size_t tap = 0; tap < kernel; ++tap) {
            const std::ptrdiff_t src = static_cast<std::ptrdiff_t>(o * stride + tap) -
                                       static_cast<std::ptrdiff_t>(pad_left);
            if (src < 0 || src >= static_cast<std::ptrdiff_t>(len)) continue;
            const auto s = static_cast<std::size_t>(src);
            if (gx_needed) {
              gemm_nt(go, wv.data() + tap * cin * cout, t.grad(x).row(s).data(), 1, cout, cin);
            }
            if (gw_needed) {
              gemm_tn(xv.row(s).data(), go, t.grad(weight).data() + tap * cin * cout, 1, cin,
                      cout);
            }
          }
        }
      });
}

Var attention(Var q, Var k, Var v, std::size_t heads, bool causal) {
  const auto& qv = q.value();
  const auto& kv = k.value();
  const auto& vv = v.value();
  const std::size_t lq = qv.rows(), lk = kv.rows(), d = qv.cols();
  if (heads == 0 || d % heads != 0) throw DimensionError("attention: dim not divisible by heads");
  if (kv.cols() != d || vv.cols() != d || vv.rows() != lk) {
    throw DimensionError("attention: q/k/v shapes disagree");
  }
  if (causal && lq != lk) throw DimensionError("attention: causal mask needs lq == lk");
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  // probs laid out [heads][lq][lk]
  std::vector<double> probs(heads * lq * lk, 0.0);
  Tensor out = Tensor::matrix(lq, d);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t off = h * dh;
    for (std::size_t i = 0; i < lq; ++i) {
      double* p = probs.data() + (h * lq + i) * lk;
      const std::size_t visible = causal ? i + 1 : lk;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < visible; ++j) {
        double s = 0.0;
        for (std::size_t c = 0; c < dh; ++c) s += qv.at(i, off + c) * kv.at(j, off + c);
        p[j] = s * inv_sqrt;
        mx = std::max(mx, p[j]);
      }
      double z = 0.0;
      for (std::size_t j = 0; j < visible; ++j) {
        p[j] = std::exp(p[j] - mx);
        z += p[j];
      }
      for (std::size_t j = 0; j < visible; ++j) {
        p[j] /= z;
        const double pj = p[j];
        for (std::size_t c = 0; c < dh; ++c) out.at(i, off + c) += pj * vv.at(j, off + c);
      }
    }
  }
  return q.tape->push(
      std::move(out), {q, k, v},
      [q, k, v, heads, lq, lk, dh, inv_sqrt, probs = std::move(probs)](Tape& t,
                                                                       std::uint32_t self) {
        const auto& g = t.grad(self);
        const auto& qv = t.value(q);
        const auto& kv = t.value(k);
        const auto& vv = t.value(v);
        const bool need_q = t.needs_grad(q), need_k = t.needs_grad(k), need_v = t.needs_grad(v);
        Tensor* gq = need_q ? &t.grad(q) : nullptr;
        Tensor* gk = need_k ? &t.grad(k) : nullptr;
        Tensor* gv = need_v ? &t.grad(v) : nullptr;
        std::vector<double> dp(lk);
        for (std::size_t h = 0; h < heads; ++h) {
          const std::size_t off = h * dh;
          for (std::size_t i = 0; i < lq; ++i) {
            const double* p = probs.data() + (h * lq + i) * lk;
            double dot = 0.0;
            for (std::size_t j = 0; j < lk; ++j) {
              double s = 0.0;
              for (std::size_t c = 0; c < dh; ++c) s += g.at(i, off + c) * vv.at(j, off + c);
              dp[j] = s;
              dot += s * p[j];
              if (gv != nullptr && p[j] != 0.0) {
                for (std::size_t c = 0; c < dh; ++c) gv->at(j, off + c) += p[j] * g.at(i, off + c);
              }
            }
            for (std::size_t j = 0; j < lk; ++j) {
              if (p[j] == 0.0) continue;
              const double ds = p[j] * (dp[j] - dot) * inv_sqrt;
              if (gq != nullptr) {
                for (std::size_t c = 0; c < dh; ++c) gq->at(i, off + c) += ds * kv.at(j, off + c);
              }
              if (gk != nullptr) {
                for (std::size_t c = 0; c < dh; ++c) gk->at(j, off + c) += ds * qv.at(i, off + c);
              }
            }
          }
        }
      });
}

Var gather_rows(Var table, std::span<const int> ids) {
  const auto& tv = table.value();
  const std::size_t d = tv.cols();
  Tensor out = Tensor::matrix(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= tv.rows()) {
      throw DimensionError("gather_rows: id " + std::to_string(ids[i]) + " out of range");
    }
    auto src = tv.row(static_cast<std::size_t>(ids[i]));
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  std::vector<int> idx(ids.begin(), ids.end());
  return table.tape->push(std::move(out), {table},
                          [table, idx = std::move(idx)](Tape& t, std::uint32_t self) {
                            const auto& g = t.grad(self);
                            auto& gt = t.grad(table);
                            for (std::size_t i = 0; i < idx.size(); ++i) {
                              auto dst = gt.row(static_cast<std::size_t>(idx[i]));
                              auto src = g.row(i);
                              for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
                            }
                          });
}

Var slice_rows(Var x, std::size_t begin, std::size_t count) {
  const auto& xv = x.value();
  if (count == 0 || begin + count > xv.rows()) throw DimensionError("slice_rows out of range");
  const std::size_t d = xv.cols();
  Tensor out = Tensor::matrix(count, d);
  std::copy(xv.data() + begin * d, xv.data() + (begin + count) * d, out.data());
  return x.tape->push(std::move(out), {x}, [x, begin, count, d](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    auto& gx = t.grad(x);
    for (std::size_t i = 0; i < count * d; ++i) gx[begin * d + i] += g[i];
  });
}

Var replace_rows(Var x, const std::vector<bool>& replace, Var row) {
  require_same_tape(x, row);
  const auto& xv = x.value();
  const auto& rv = row.value();
  const std::size_t d = xv.cols();
  if (replace.size() != xv.rows()) throw DimensionError("replace_rows: flag count mismatch");
  if (rv.size() != d) throw DimensionError("replace_rows: replacement row size mismatch");
  Tensor out = xv;
  for (std::size_t r = 0; r < replace.size(); ++r) {
    if (replace[r]) std::copy(rv.data(), rv.data() + d, out.row(r).data());
  }
  return x.tape->push(std::move(out), {x, row}, [x, row, replace](Tape& t, std::uint32_t self) {
    const auto& g = t.grad(self);
    const std::size_t d = g.cols();
    for (std::size_t r = 0; r < replace.size(); ++r) {
      if (replace[r]) {
        if (t.needs_grad(row)) {
          auto& gr = t.grad(row);
          for (std::size_t j = 0; j < d; ++j) gr[j] += g.at(r, j);
        }
      } else if (t.needs_grad(x)) {
        auto& gx = t.grad(x);
        for (std::size_t j = 0; j < d; ++j) gx.at(r, j) += g.at(r, j);
      }
    }
  });
}

Var pick_nll(Var log_probs, std::span<const int> targets) {
  const auto& lp = log_probs.value();
  if (targets.size() != lp.rows()) {
    throw DimensionError("pick_nll: " + std::to_string(targets.size()) + " targets for " +
                         std::to_string(lp.rows()) + " rows");
  }
  double total = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= lp.cols()) {
      throw DimensionError("pick_nll: target out of range");
    }
    total -= lp.at(i, static_cast<std::size_t>(targets[i]));
  }
  std::vector<int> tg(targets.begin(), targets.end());
  return log_probs.tape->push(Tensor::scalar(total), {log_probs},
                              [log_probs, tg = std::move(tg)](Tape& t, std::uint32_t self) {
                                const double g = t.grad(self)[0];
                                auto& gl = t.grad(log_probs);
                                for (std::size_t i = 0; i < tg.size(); ++i) {
                                  gl.at(i, static_cast<std::size_t>(tg[i])) -= g;
                                }
                              });
}

Var smoothed_nll(Var log_probs, std::span<const int> targets, double eps) {
  if (eps == 0.0) return pick_nll(log_probs, targets);
  Var nll = pick_nll(log_probs, targets);
  const double inv_v = 1.0 / static_cast<double>(log_probs.value().cols());
  Var uniform = scale(sum(log_probs), -inv_v);
  return add(scale(nll, 1.0 - eps), scale(uniform, eps));
}

}  // namespace samukd
