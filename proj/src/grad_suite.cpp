#include "samukd/grad_suite.hpp"

#include <algorithm>
#include <functional>
#include <memory>

#include "samukd/distill.hpp"
#include "samukd/gradcheck.hpp"
#include "samukd/translator.hpp"

namespace samukd {

namespace {

// One seeded instance: owned parameters plus the scalar loss over them.
struct Instance {
  std::vector<std::unique_ptr<Parameter>> owned;
  std::vector<NamedParameter> params;
  LossBuilder loss;
  // Models whose parameters the builder reads, kept alive with the instance.
  std::shared_ptr<void> model;
  std::size_t max_components = 0;

  Parameter& add(const std::string& name, Tensor value) {
    owned.push_back(std::make_unique<Parameter>(std::move(value)));
    params.push_back({name, owned.back().get()});
    return *owned.back();
  }
};

std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) {
  return lo + static_cast<std::size_t>(rng() % (hi - lo + 1));
}

// Contracts an arbitrary-shaped output with fixed random weights so every
// output component contributes to the checked scalar.
Var reduce(Var out, Rng& rng) {
  return sum(mul_const(out, randn(out.value().shape(), 1.0, rng)));
}

using Maker = std::function<Instance(Rng&)>;

Instance unary(Rng& rng, const std::function<Var(Var)>& op, double stddev = 1.0) {
  Instance in;
  const std::size_t m = pick(rng, 1, 4), n = pick(rng, 1, 5);
  Parameter& x = in.add("x", randn({m, n}, stddev, rng));
  const Tensor w = randn({m, n}, 1.0, rng);
  in.loss = [&x, op, w](Tape& t) {
    Var y = op(t.param(x));
    return sum(mul_const(y, w.shape() == y.value().shape() ? w : Tensor(y.value().shape(), 1.0)));
  };
  return in;
}

Instance binary(Rng& rng, const std::function<Var(Var, Var)>& op) {
  Instance in;
  const std::size_t m = pick(rng, 1, 4), n = pick(rng, 1, 5);
  Parameter& a = in.add("a", randn({m, n}, 1.0, rng));
  Parameter& b = in.add("b", randn({m, n}, 1.0, rng));
  const Tensor w = randn({m, n}, 1.0, rng);
  in.loss = [&a, &b, op, w](Tape& t) { return sum(mul_const(op(t.param(a), t.param(b)), w)); };
  return in;
}

// Away from the kink at 0, where a central difference is meaningless.
Tensor away_from_zero(Tensor t) {
  for (auto& v : t.values()) v = v >= 0.0 ? v + 0.1 : v - 0.1;
  return t;
}

std::vector<std::pair<std::string, Maker>> makers() {
  std::vector<std::pair<std::string, Maker>> out;
  out.emplace_back("add", [](Rng& r) { return binary(r, [](Var a, Var b) { return add(a, b); }); });
  out.emplace_back("sub", [](Rng& r) { return binary(r, [](Var a, Var b) { return sub(a, b); }); });
  out.emplace_back("mul", [](Rng& r) { return binary(r, [](Var a, Var b) { return mul(a, b); }); });
  out.emplace_back("scale", [](Rng& r) {
    const double c = randn({1}, 1.0, r)[0];
    return unary(r, [c](Var x) { return scale(x, c); });
  });
  out.emplace_back("add_row", [](Rng& r) {
    Instance in;
    const std::size_t m = pick(r, 1, 4), n = pick(r, 1, 5);
    Parameter& x = in.add("x", randn({m, n}, 1.0, r));
    Parameter& b = in.add("bias", randn({n}, 1.0, r));
    const Tensor w = randn({m, n}, 1.0, r);
    in.loss = [&x, &b, w](Tape& t) { return sum(mul_const(add_row(t.param(x), t.param(b)), w)); };
    return in;
  });
  out.emplace_back("mul_const", [](Rng& r) {
    Instance in;
    const std::size_t m = pick(r, 1, 4), n = pick(r, 1, 5);
    Parameter& x = in.add("x", randn({m, n}, 1.0, r));
    const Tensor c = randn({m, n}, 1.0, r);
    in.loss = [&x, c](Tape& t) { return sum(mul(mul_const(t.param(x), c), t.param(x))); };
    return in;
  });
  out.emplace_back("add_const", [](Rng& r) {
    Instance in;
    const std::size_t m = pick(r, 1, 4), n = pick(r, 1, 5);
    Parameter& x = in.add("x", randn({m, n}, 1.0, r));
    const Tensor c = randn({m, n}, 1.0, r);
    in.loss = [&x, c](Tape& t) {
      Var y = add_const(t.param(x), c);
      return sum(mul(y, y));
    };
    return in;
  });
  out.emplace_back("reshape", [](Rng& r) {
    Instance in;
    const std::size_t m = pick(r, 1, 4), n = pick(r, 1, 5);
    Parameter& x = in.add("x", randn({m, n}, 1.0, r));
    const Tensor w = randn({n, m}, 1.0, r);
    in.loss = [&x, w, m, n](Tape& t) { return sum(mul_const(reshape(t.param(x), {n, m}), w)); };
    return in;
  });
  out.emplace_back("transpose", [](Rng& r) {
    Instance in;
    const std::size_t m = pick(r, 1, 4), n = pick(r, 1, 5);
    Parameter& x = in.add("x", randn({m, n}, 1.0, r));
    const Tensor w = randn({n, m}, 1.0, r);
    in.loss = [&x, w](Tape& t) { return sum(mul_const(transpose(t.param(x)), w)); };
    return in;
  });
  out.emplace_back("sum", [](Rng& r) {
    return unary(r, [](Var x) { return sum(mul(x, x)); });
  });
  out.emplace_back("mean", [](Rng& r) {
    return unary(r, [](Var x) { return mean(mul(x, x)); });
  });
  out.emplace_back("relu", [](Rng& r) {
    Instance in = unary(r, [](Var x) { return activation(x, Activation::kRelu); });
    in.owned[0]->value = away_from_zero(in.owned[0]->value);
    return in;
  });
  out.emplace_back("gelu", [](Rng& r) {
    return unary(r, [](Var x) { return activation(x, Activation::kGelu); }, 1.5);
  });
  out.emplace_back("tanh", [](Rng& r) {
    return unary(r, [](Var x) { return activation(x, Activation::kTanh); }, 1.5);
  });
  out.emplace_back("matmul", [](Rng& r) {
    Instance in;
    const std::size_t m = pick(r, 1, 4), k = pick(r, 1, 4), n = pick(r, 1, 4);
    Parameter& a = in.add("a", randn({m, k}, 1.0, r));
    Parameter& b = in.add("b", randn({k, n}, 1.0, r));
    const Tensor w = randn({m, n}, 1.0, r);
    in.loss = [&a, &b, w](Tape& t) { return sum(mul_const(matmul(t.param(a), t.param(b)), w)); };
    return in;
  });
  out.emplace_back("linear", [](Rng& r) {
    Instance in;
    const std::size_t m = pick(r, 1, 4), k = pick(r, 1, 4), n = pick(r, 1, 4);
    Parameter& x = in.add("x", randn({m, k}, 1.0, r));
    Parameter& w = in.add("weight", randn({k, n}, 1.0, r));
    Parameter& b = in.add("bias", randn({n}, 1.0, r));
    const Tensor c = randn({m, n}, 1.0, r);
    in.loss = [&x, &w, &b, c](Tape& t) {
      return sum(mul_const(linear(t.param(x), t.param(w), t.param(b)), c));
    };
    return in;
  });
  out.emplace_back("softmax_rows", [](Rng& r) {
    return unary(r, [](Var x) { return softmax_rows(x); });
  });
  out.emplace_back("log_softmax_rows", [](Rng& r) {
    return unary(r, [](Var x) { return log_softmax_rows(x); });
  });
  out.emplace_back("layer_norm", [](Rng& r) {
    Instance in;
    const std::size_t m = pick(r, 1, 4), n = pick(r, 2, 6);
    Parameter& x = in.add("x", randn({m, n}, 1.0, r));
    Parameter& g = in.add("gain", randn({n}, 1.0, r));
    Parameter& b = in.add("bias", randn({n}, 1.0, r));
    const Tensor w = randn({m, n}, 1.0, r);
    in.loss = [&x, &g, &b, w](Tape& t) {
      return sum(mul_const(layer_norm(t.param(x), t.param(g), t.param(b)), w));
    };
    return in;
  });
  out.emplace_back("conv1d", [](Rng& r) {
    Instance in;
    const std::size_t kernel = pick(r, 1, 3), stride = pick(r, 1, 2), cin = pick(r, 1, 3),
                      cout = pick(r, 1, 3), left = pick(r, 0, 2), right = pick(r, 0, 2);
    const std::size_t len = kernel + pick(r, 0, 5);
    Parameter& x = in.add("x", randn({len, cin}, 1.0, r));
    Parameter& w = in.add("weight", randn({kernel * cin, cout}, 1.0, r));
    Parameter& b = in.add("bias", randn({cout}, 1.0, r));
    auto rng = std::make_shared<Rng>(r());
    in.loss = [&x, &w, &b, kernel, stride, left, right, rng](Tape& t) {
      Var y = conv1d(t.param(x), t.param(w), t.param(b), kernel, stride, left, right);
      Rng local = *rng;
      return reduce(y, local);
    };
    return in;
  });
  for (bool causal : {false, true}) {
    out.emplace_back(causal ? "attention_causal" : "attention", [causal](Rng& r) {
      Instance in;
      const std::size_t heads = pick(r, 1, 2), dh = pick(r, 1, 3), lq = pick(r, 1, 4);
      const std::size_t lk = causal ? lq : pick(r, 1, 4);
      const std::size_t d = heads * dh;
      Parameter& q = in.add("q", randn({lq, d}, 1.0, r));
      Parameter& k = in.add("k", randn({lk, d}, 1.0, r));
      Parameter& v = in.add("v", randn({lk, d}, 1.0, r));
      const Tensor w = randn({lq, d}, 1.0, r);
      in.loss = [&q, &k, &v, w, heads, causal](Tape& t) {
        return sum(mul_const(attention(t.param(q), t.param(k), t.param(v), heads, causal), w));
      };
      return in;
    });
  }
  out.emplace_back("gather_rows", [](Rng& r) {
    Instance in;
    const std::size_t vocab = pick(r, 1, 5), d = pick(r, 1, 4), n = pick(r, 1, 6);
    Parameter& table = in.add("table", randn({vocab, d}, 1.0, r));
    std::vector<int> ids(n);
    for (auto& i : ids) i = static_cast<int>(pick(r, 0, vocab - 1));
    const Tensor w = randn({n, d}, 1.0, r);
    in.loss = [&table, ids, w](Tape& t) { return sum(mul_const(gather_rows(t.param(table), ids), w)); };
    return in;
  });
  out.emplace_back("slice_rows", [](Rng& r) {
    Instance in;
    const std::size_t m = pick(r, 1, 5), d = pick(r, 1, 4);
    const std::size_t begin = pick(r, 0, m - 1), count = pick(r, 1, m - begin);
    Parameter& x = in.add("x", randn({m, d}, 1.0, r));
    const Tensor w = randn({count, d}, 1.0, r);
    in.loss = [&x, begin, count, w](Tape& t) {
      return sum(mul_const(slice_rows(t.param(x), begin, count), w));
    };
    return in;
  });
  out.emplace_back("replace_rows", [](Rng& r) {
    Instance in;
    const std::size_t m = pick(r, 1, 5), d = pick(r, 1, 4);
    Parameter& x = in.add("x", randn({m, d}, 1.0, r));
    Parameter& row = in.add("row", randn({d}, 1.0, r));
    std::vector<bool> mask(m);
    for (std::size_t i = 0; i < m; ++i) mask[i] = r() % 2 == 0;
    const Tensor w = randn({m, d}, 1.0, r);
    in.loss = [&x, &row, mask, w](Tape& t) {
      return sum(mul_const(replace_rows(t.param(x), mask, t.param(row)), w));
    };
    return in;
  });
  out.emplace_back("pick_nll", [](Rng& r) {
    Instance in;
    const std::size_t m = pick(r, 1, 4), vocab = pick(r, 2, 5);
    Parameter& x = in.add("logits", randn({m, vocab}, 1.0, r));
    std::vector<int> targets(m);
    for (auto& y : targets) y = static_cast<int>(pick(r, 0, vocab - 1));
    in.loss = [&x, targets](Tape& t) { return pick_nll(log_softmax_rows(t.param(x)), targets); };
    return in;
  });
  out.emplace_back("smoothed_nll", [](Rng& r) {
    Instance in;
    const std::size_t m = pick(r, 1, 4), vocab = pick(r, 2, 5);
    Parameter& x = in.add("logits", randn({m, vocab}, 1.0, r));
    std::vector<int> targets(m);
    for (auto& y : targets) y = static_cast<int>(pick(r, 0, vocab - 1));
    const double eps = 0.3 * static_cast<double>(r() % 1000) / 1000.0;
    in.loss = [&x, targets, eps](Tape& t) {
      return smoothed_nll(log_softmax_rows(t.param(x)), targets, eps);
    };
    return in;
  });
  out.emplace_back("ctc_loss", [](Rng& r) {
    Instance in;
    const std::size_t labels = pick(r, 1, 3), len = pick(r, 1, 3);
    std::vector<int> target(len);
    for (auto& y : target) y = static_cast<int>(pick(r, 0, labels - 1));
    std::size_t repeats = 0;
    for (std::size_t i = 1; i < len; ++i) repeats += target[i] == target[i - 1] ? 1 : 0;
    const std::size_t frames = len + repeats + pick(r, 0, 3);
    Parameter& x = in.add("logits", randn({frames, labels + 1}, 1.0, r));
    const int blank = static_cast<int>(labels);
    in.loss = [&x, target, blank](Tape& t) {
      return ctc_loss(log_softmax_rows(t.param(x)), target, blank);
    };
    return in;
  });
  out.emplace_back("kd_loss", [](Rng& r) {
    Instance in;
    const std::size_t n = pick(r, 2, 8);
    Parameter& e = in.add("e", randn({1, n}, 1.0, r));
    const Tensor zt = randn({n}, 1.0, r);
    std::vector<double> z(zt.values().begin(), zt.values().end());
    const double beta = 1.0 + static_cast<double>(r() % 64);
    in.loss = [&e, z, beta](Tape& t) { return kd_loss(t.param(e), z, beta); };
    return in;
  });
  out.emplace_back("distillation_objective", [](Rng& r) {
    Instance in;
    EncoderConfig cfg;
    cfg.features.channels = 4;
    cfg.features.out_dim = 8;
    cfg.model_dim = 8;
    cfg.ffn_dim = 12;
    cfg.num_heads = 2;
    cfg.num_layers = 1;
    cfg.pos_conv_kernel = 3;
    struct Model {
      SpeechEncoder encoder;
      PoolingHead head;
    };
    SpeechEncoder encoder(cfg, r);
    PoolingHead head(cfg.model_dim, 5, r);
    auto model = std::make_shared<Model>(Model{std::move(encoder), std::move(head)});
    prepare_for_distillation(model->encoder);
    auto collect = [&in](const std::string& name, Parameter& p) {
      if (p.trainable) in.params.push_back({name, &p});
    };
    model->encoder.visit("encoder.", collect);
    model->head.visit("head.", collect);
    std::vector<float> wav(pick(r, 24, 48));
    for (auto& v : wav) v = static_cast<float>(randn({1}, 1.0, r)[0]);
    const Tensor zt = randn({5}, 1.0, r);
    std::vector<double> z(zt.values().begin(), zt.values().end());
    in.loss = [model, wav, z](Tape& t) {
      EncodeOptions opts;
      opts.adapters_active = false;
      // beta = 1: the loss is linear in beta, and a smaller value keeps the
      // finite-difference roundoff on exactly-zero gradients (key biases)
      // well under the floor.
      return kd_loss(attentive_pool(t, model->encoder.encode(t, wav, opts), model->head), z, 1.0);
    };
    in.model = model;
    in.max_components = 3;
    return in;
  });
  out.emplace_back("translation_nll", [](Rng& r) {
    Instance in;
    EncoderConfig ecfg;
    ecfg.features.channels = 4;
    ecfg.features.out_dim = 8;
    ecfg.model_dim = 8;
    ecfg.ffn_dim = 12;
    ecfg.num_heads = 2;
    ecfg.num_layers = 1;
    ecfg.pos_conv_kernel = 3;
    DecoderConfig dcfg;
    dcfg.num_layers = 1;
    dcfg.model_dim = 8;
    dcfg.ffn_dim = 12;
    dcfg.num_heads = 2;
    dcfg.vocab_size = 7;
    dcfg.max_target_len = 6;
    auto model = std::make_shared<TranslationModel>(ecfg, dcfg, r());
    model->encoder().insert_adapters(AdapterConfig{}, r);
    // Perturb everything so zero-initialised pieces (adapter up-projections,
    // norm biases) take part in the check.
    model->visit([&](const std::string& name, Parameter& p) {
      p.trainable = true;
      for (auto& v : p.value.values()) v += randn({1}, 0.2, r)[0];
      in.params.push_back({name, &p});
    });
    std::vector<float> wav(pick(r, 24, 48));
    for (auto& v : wav) v = static_cast<float>(randn({1}, 1.0, r)[0]);
    std::vector<int> target(pick(r, 1, 4));
    for (auto& y : target) y = static_cast<int>(pick(r, kNumSpecialTokens, dcfg.vocab_size - 1));
    const auto input = decoder_input(target);
    const auto gold = decoder_target(target);
    in.loss = [model, wav, input, gold](Tape& t) {
      Var lp = model->forward_translation_logits(t, wav, input);
      return smoothed_nll(lp, gold, 0.0);
    };
    in.model = model;
    in.max_components = 3;
    return in;
  });
  return out;
}

}  // namespace

std::vector<std::string> gradient_check_names() {
  std::vector<std::string> names;
  for (const auto& [name, maker] : makers()) names.push_back(name);
  return names;
}

GradSuiteReport run_gradient_suite(std::size_t cases, std::uint64_t seed, double tolerance) {
  GradSuiteReport report;
  const auto all = makers();
  for (std::size_t k = 0; k < all.size(); ++k) {
    GradSuiteEntry entry;
    entry.name = all[k].first;
    for (std::size_t c = 0; c < cases; ++c) {
      Rng rng(mix_seed(mix_seed(seed, entry.name), c));
      Instance in = all[k].second(rng);
      GradCheckOptions opts;
      opts.max_components = in.max_components;
      opts.seed = mix_seed(seed, c);
      const auto r = backward_and_check(in.loss, in.params, opts);
      if (r.max_rel_error > entry.max_rel_error || c == 0) {
        entry.max_rel_error = r.max_rel_error;
        entry.worst_parameter = r.worst_name;
        entry.worst_case = c;
      }
      entry.components += r.components;
      entry.passed = entry.passed && r.passed(tolerance);
      ++entry.cases;
    }
    report.max_rel_error = std::max(report.max_rel_error, entry.max_rel_error);
    report.passed = report.passed && entry.passed;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace samukd
