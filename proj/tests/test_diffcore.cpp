#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "samukd/error.hpp"
#include "samukd/grad_suite.hpp"
#include "samukd/gradcheck.hpp"
#include "samukd/nn.hpp"
#include "samukd/ops.hpp"

using namespace samukd;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng) { return randn({r, c}, 1.0, rng); }

void check_close(const Tensor& a, const Tensor& b, double tol = 1e-12) {
  REQUIRE(a.shape() == b.shape());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(tol));
}

}  // namespace

TEST_CASE("tensor shape helpers") {
  Tensor t = Tensor::from_rows({{1, 2, 3}, {4, 5, 6}});
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
  CHECK(t.at(1, 2) == 6);
  CHECK(shape_size({2, 3, 4}) == 24);
  CHECK(t.reshaped({3, 2}).at(2, 1) == 6);
}

TEST_CASE("matmul and linear forward match loops") {
  Rng rng(1);
  Tape tape(false);
  const Tensor a = random_matrix(3, 4, rng), b = random_matrix(4, 2, rng);
  const Tensor bias = randn({2}, 1.0, rng);
  Var y = linear(tape.constant(a), tape.constant(b), tape.constant(bias));
  Tensor expect = Tensor::matrix(3, 2);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 2; ++j) {
      double s = bias[j];
      for (std::size_t k = 0; k < 4; ++k) s += a.at(i, k) * b.at(k, j);
      expect.at(i, j) = s;
    }
  check_close(y.value(), expect);
  CHECK_THROWS_AS(matmul(tape.constant(a), tape.constant(a)), DimensionError);
}

TEST_CASE("softmax and layer norm against direct formulas") {
  Tape tape(false);
  const Tensor x = Tensor::from_rows({{1.0, 2.0, 3.0}, {-1.0, 0.0, 5.0}});
  Var s = softmax_rows(tape.constant(x));
  Var ls = log_softmax_rows(tape.constant(x));
  for (std::size_t r = 0; r < 2; ++r) {
    double z = 0;
    for (std::size_t c = 0; c < 3; ++c) z += std::exp(x.at(r, c));
    for (std::size_t c = 0; c < 3; ++c) {
      CHECK(s.value().at(r, c) == doctest::Approx(std::exp(x.at(r, c)) / z));
      CHECK(ls.value().at(r, c) == doctest::Approx(x.at(r, c) - std::log(z)));
    }
  }
  const Tensor g = Tensor::vector({1.0, 2.0, 0.5}), b = Tensor::vector({0.0, 1.0, -1.0});
  Var ln = layer_norm(tape.constant(x), tape.constant(g), tape.constant(b));
  for (std::size_t r = 0; r < 2; ++r) {
    double mu = 0, var = 0;
    for (std::size_t c = 0; c < 3; ++c) mu += x.at(r, c) / 3;
    for (std::size_t c = 0; c < 3; ++c) var += (x.at(r, c) - mu) * (x.at(r, c) - mu) / 3;
    for (std::size_t c = 0; c < 3; ++c) {
      const double want = (x.at(r, c) - mu) / std::sqrt(var + 1e-5) * g[c] + b[c];
      CHECK(ln.value().at(r, c) == doctest::Approx(want));
    }
  }
}

TEST_CASE("conv1d matches a direct loop with padding and stride") {
  Rng rng(2);
  Tape tape(false);
  const std::size_t len = 7, cin = 2, cout = 3, kernel = 3, stride = 2, left = 1, right = 2;
  const Tensor x = random_matrix(len, cin, rng);
  const Tensor w = random_matrix(kernel * cin, cout, rng);
  const Tensor b = randn({cout}, 1.0, rng);
  Var y = conv1d(tape.constant(x), tape.constant(w), tape.constant(b), kernel, stride, left, right);
  const std::size_t out_len = (len + left + right - kernel) / stride + 1;
  REQUIRE(y.value().rows() == out_len);
  for (std::size_t o = 0; o < out_len; ++o)
    for (std::size_t c = 0; c < cout; ++c) {
      double s = b[c];
      for (std::size_t k = 0; k < kernel; ++k) {
        const long src = static_cast<long>(o * stride + k) - static_cast<long>(left);
        if (src < 0 || src >= static_cast<long>(len)) continue;
        for (std::size_t i = 0; i < cin; ++i) s += x.at(src, i) * w.at(k * cin + i, c);
      }
      CHECK(y.value().at(o, c) == doctest::Approx(s));
    }
}

TEST_CASE("attention matches per-head loops, causal rows ignore the future") {
  Rng rng(3);
  Tape tape(false);
  const std::size_t L = 4, heads = 2, dh = 3, d = heads * dh;
  const Tensor q = random_matrix(L, d, rng), k = random_matrix(L, d, rng), v = random_matrix(L, d, rng);
  for (bool causal : {false, true}) {
    Var y = attention(tape.constant(q), tape.constant(k), tape.constant(v), heads, causal);
    for (std::size_t h = 0; h < heads; ++h)
      for (std::size_t i = 0; i < L; ++i) {
        std::vector<double> w(L, 0.0);
        double z = 0;
        const std::size_t last = causal ? i : L - 1;
        for (std::size_t j = 0; j <= last; ++j) {
          double s = 0;
          for (std::size_t c = 0; c < dh; ++c) s += q.at(i, h * dh + c) * k.at(j, h * dh + c);
          w[j] = std::exp(s / std::sqrt(static_cast<double>(dh)));
          z += w[j];
        }
        for (std::size_t c = 0; c < dh; ++c) {
          double o = 0;
          for (std::size_t j = 0; j <= last; ++j) o += w[j] / z * v.at(j, h * dh + c);
          CHECK(y.value().at(i, h * dh + c) == doctest::Approx(o));
        }
      }
  }
}

TEST_CASE("losses: pick_nll and smoothed_nll") {
  Tape tape(false);
  const Tensor lp = Tensor::from_rows({{std::log(0.5), std::log(0.25), std::log(0.25)},
                                       {std::log(0.1), std::log(0.8), std::log(0.1)}});
  const std::vector<int> y{0, 1};
  CHECK(pick_nll(tape.constant(lp), y).value()[0] ==
        doctest::Approx(-std::log(0.5) - std::log(0.8)));
  const double eps = 0.2;
  double uniform = 0;
  for (double v : lp.values()) uniform -= v / 3.0;
  CHECK(smoothed_nll(tape.constant(lp), y, eps).value()[0] ==
        doctest::Approx((1 - eps) * (-std::log(0.5) - std::log(0.8)) + eps * uniform));
}

TEST_CASE("backward accumulates into trainable parameters only") {
  Parameter a(Tensor::vector({1.0, 2.0}));
  Parameter frozen(Tensor::vector({3.0, 4.0}), false);
  Tape tape;
  Var y = sum(mul(tape.param(a), tape.param(frozen)));
  tape.backward(y);
  CHECK(a.grad[0] == 3.0);
  CHECK(a.grad[1] == 4.0);
  CHECK(frozen.grad[0] == 0.0);
  CHECK(frozen.grad[1] == 0.0);
  Tape again;
  again.backward(sum(mul(again.param(a), again.param(frozen))));
  CHECK(a.grad[0] == 6.0);

  Tape inference(false);
  Var z = sum(inference.param(a));
  CHECK_THROWS_AS(inference.backward(z), ContractError);
}

TEST_CASE("shared subexpressions receive summed gradients") {
  Parameter x(Tensor::vector({0.5, -1.5}));
  Tape tape;
  Var v = tape.param(x);
  Var y = sum(mul(v, add(v, v)));  // 2·Σx²
  tape.backward(y);
  CHECK(x.grad[0] == doctest::Approx(2.0));
  CHECK(x.grad[1] == doctest::Approx(-6.0));
}

TEST_CASE("gradcheck flags a wrong gradient") {
  // The constant copy hides half of the dependence on p from the tape.
  Parameter p(Tensor::vector({0.3, 0.7}));
  std::vector<NamedParameter> params{{"p", &p}};
  const auto bad = backward_and_check(
      [&](Tape& t) {
        Var c = t.constant(p.value);
        return sum(mul(c, t.param(p)));
      },
      params);
  CHECK_FALSE(bad.passed(1e-4));
  const auto good = backward_and_check(
      [&](Tape& t) {
        Var v = t.param(p);
        return sum(mul(v, v));
      },
      params);
  CHECK(good.passed(1e-6));
  CHECK(relative_error(1.0, 1.0, 1e-5) == 0.0);
}

TEST_CASE("gradient suite covers every primitive and the composite losses") {
  const auto names = gradient_check_names();
  for (const char* n : {"matmul", "attention_causal", "conv1d", "layer_norm", "ctc_loss", "kd_loss",
                        "distillation_objective", "translation_nll"}) {
    CHECK(std::find(names.begin(), names.end(), n) != names.end());
  }
  const auto report = run_gradient_suite(5, 7);
  CHECK(report.entries.size() == names.size());
  CHECK(report.passed);
}
