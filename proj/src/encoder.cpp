#include "samukd/encoder.hpp"

#include <algorithm>
#include <cmath>

#include "samukd/error.hpp"

namespace samukd {

std::size_t FeatureExtractorConfig::down_factor() const {
  std::size_t r = 1;
  for (auto s : strides) r *= s;
  return r;
}

void FeatureExtractorConfig::validate() const {
  if (strides.empty()) throw ConfigError("feature extractor needs at least one conv layer");
  if (kernel_widths.size() != strides.size()) {
    throw ConfigError("feature extractor: kernel_widths and strides differ in length");
  }
  for (std::size_t i = 0; i < strides.size(); ++i) {
    if (strides[i] == 0) throw ConfigError("feature extractor: stride must be >= 1");
    if (kernel_widths[i] < strides[i]) {
      throw ConfigError("feature extractor: kernel width must be >= stride");
    }
  }
  if (channels == 0 || out_dim == 0) throw ConfigError("feature extractor: empty channel count");
}

FeatureExtractorConfig FeatureExtractorConfig::full_scale() {
  FeatureExtractorConfig c;
  c.kernel_widths = {10, 3, 3, 3, 3, 2, 2};
  c.strides = {5, 2, 2, 2, 2, 2, 2};
  c.channels = 512;
  c.out_dim = 1024;
  return c;
}

std::size_t AdapterConfig::hidden_size(std::size_t dim) const {
  if (!(hidden_ratio > 0.0)) throw ConfigError("adapter hidden_ratio must be positive");
  const auto h = static_cast<std::size_t>(std::llround(static_cast<double>(dim) * hidden_ratio));
  if (h == 0) throw ConfigError("adapter hidden size rounds to zero");
  return h;
}

void MaskConfig::validate() const {
  if (time_prob < 0.0 || time_prob > 1.0 || feat_prob < 0.0 || feat_prob > 1.0) {
    throw ConfigError("mask probabilities must lie in [0, 1]");
  }
  if (time_span == 0 || feat_span == 0) throw ConfigError("mask spans must be >= 1");
}

void EncoderConfig::validate() const {
  features.validate();
  if (features.out_dim != model_dim) {
    throw ConfigError("feature extractor out_dim " + std::to_string(features.out_dim) +
                      " != encoder model_dim " + std::to_string(model_dim));
  }
  if (num_heads == 0 || model_dim % num_heads != 0) {
    throw ConfigError("encoder model_dim must be divisible by num_heads");
  }
  if (model_dim < 2) throw ConfigError("encoder model_dim must be >= 2");
  if (pos_conv_kernel == 0) throw ConfigError("positional conv kernel must be >= 1");
}

EncoderConfig EncoderConfig::full_scale() {
  EncoderConfig c;
  c.features = FeatureExtractorConfig::full_scale();
  c.num_layers = 24;
  c.model_dim = 1024;
  c.ffn_dim = 3072;
  c.num_heads = 16;
  c.pos_conv_kernel = 128;
  return c;
}

std::size_t MaskRecord::masked_frame_count() const {
  return static_cast<std::size_t>(std::count(masked_frames.begin(), masked_frames.end(), true));
}

double MaskRecord::masked_frame_fraction() const {
  if (masked_frames.empty()) return 0.0;
  return static_cast<double>(masked_frame_count()) / static_cast<double>(masked_frames.size());
}

MaskRecord draw_mask(std::size_t frames, std::size_t dim, const MaskConfig& cfg, Rng& rng) {
  cfg.validate();
  MaskRecord rec;
  rec.masked_frames.assign(frames, false);
  rec.masked_channels.assign(dim, false);
  for (std::size_t t = 0; t < frames; ++t) {
    if (uniform01(rng) < cfg.time_prob) {
      rec.time_starts.push_back(t);
      const std::size_t end = std::min(frames, t + cfg.time_span);
      for (std::size_t u = t; u < end; ++u) rec.masked_frames[u] = true;
    }
  }
  const std::size_t span = std::min(cfg.feat_span, dim);
  for (std::size_t c = 0; c < dim; ++c) {
    if (uniform01(rng) < cfg.feat_prob) {
      rec.feature_starts.push_back(c);
      const std::size_t end = std::min(dim, c + span);
      for (std::size_t u = c; u < end; ++u) rec.masked_channels[u] = true;
    }
  }
  return rec;
}

Var apply_mask(Var features, const MaskRecord& record, Var mask_row) {
  Var out = features;
  if (std::find(record.masked_frames.begin(), record.masked_frames.end(), true) !=
      record.masked_frames.end()) {
    out = replace_rows(out, record.masked_frames, mask_row);
  }
  if (std::find(record.masked_channels.begin(), record.masked_channels.end(), true) !=
      record.masked_channels.end()) {
    const auto& v = out.value();
    Tensor keep(v.shape(), 1.0);
    for (std::size_t r = 0; r < keep.rows(); ++r) {
      for (std::size_t c = 0; c < keep.cols(); ++c) {
        if (record.masked_channels[c]) keep.at(r, c) = 0.0;
      }
    }
    out = mul_const(out, keep);
  }
  return out;
}

void EncoderLayer::visit(const std::string& prefix, const ParameterVisitor& fn) {
  attn_norm.visit(prefix + ".attn_norm", fn);
  attn.visit(prefix + ".attn", fn);
  if (attn_adapter) attn_adapter->visit(prefix + ".attn_adapter", fn);
  ffn_norm.visit(prefix + ".ffn_norm", fn);
  ffn_in.visit(prefix + ".ffn_in", fn);
  ffn_out.visit(prefix + ".ffn_out", fn);
  if (ffn_adapter) ffn_adapter->visit(prefix + ".ffn_adapter", fn);
}

SpeechEncoder::SpeechEncoder(EncoderConfig config, Rng& rng) : config_(std::move(config)) {
  config_.validate();
  const auto& fe = config_.features;
  std::size_t in = 1;
  for (std::size_t i = 0; i < fe.num_layers(); ++i) {
    const std::size_t pad = fe.kernel_widths[i] - fe.strides[i];
    convs_.emplace_back(in, fe.channels, fe.kernel_widths[i], fe.strides[i], pad / 2,
                        pad - pad / 2, rng, std::sqrt(2.0));
    in = fe.channels;
  }
  const std::size_t d = config_.model_dim;
  feature_norm_ = LayerNormParams(fe.channels);
  feature_proj_ = Linear(fe.channels, d, rng);
  const std::size_t k = config_.pos_conv_kernel;
  pos_conv_ = Conv1d(d, d, k, 1, (k - 1) / 2, k - 1 - (k - 1) / 2, rng);
  mask_embedding_ = Parameter(randn({d}, 1.0, rng));
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    EncoderLayer layer{LayerNormParams(d),
                       MultiHeadAttention(d, config_.num_heads, rng),
                       LayerNormParams(d),
                       Linear(d, config_.ffn_dim, rng, std::sqrt(2.0)),
                       Linear(config_.ffn_dim, d, rng),
                       std::nullopt,
                       std::nullopt};
    layers_.push_back(std::move(layer));
  }
  final_norm_ = LayerNormParams(d);
}

std::size_t SpeechEncoder::num_frames(std::size_t samples) const {
  return samples / config_.features.down_factor();
}

Var SpeechEncoder::extract_features(Tape& tape, std::span<const float> waveform) {
  const std::size_t r = config_.features.down_factor();
  if (waveform.size() < r) {
    throw LengthError("waveform of " + std::to_string(waveform.size()) +
                      " samples is shorter than the downsampling factor " + std::to_string(r));
  }
  std::vector<double> samples(waveform.begin(), waveform.end());
  Var x = tape.constant(Tensor({waveform.size(), 1}, std::move(samples)));
  for (auto& conv : convs_) x = activation(conv(tape, x), Activation::kGelu);
  x = feature_norm_(tape, x);
  return feature_proj_(tape, x);
}

Var SpeechEncoder::positional_encode(Tape& tape, Var features) {
  return add(features, pos_conv_(tape, features));
}

Var SpeechEncoder::encode_context(Tape& tape, Var features, bool adapters_active) {
  if (features.value().cols() != config_.model_dim) {
    throw ConfigError("encoder input has " + std::to_string(features.value().cols()) +
                      " features, expected " + std::to_string(config_.model_dim));
  }
  Var x = positional_encode(tape, features);
  for (auto& layer : layers_) {
    Var h = layer.attn_norm(tape, x);
    h = layer.attn(tape, h, h, false);
    if (adapters_active && layer.attn_adapter) h = (*layer.attn_adapter)(tape, h);
    x = add(x, h);
    h = layer.ffn_norm(tape, x);
    h = layer.ffn_out(tape, activation(layer.ffn_in(tape, h), Activation::kRelu));
    if (adapters_active && layer.ffn_adapter) h = (*layer.ffn_adapter)(tape, h);
    x = add(x, h);
  }
  return final_norm_(tape, x);
}

Var SpeechEncoder::encode(Tape& tape, std::span<const float> waveform,
                          const EncodeOptions& options, MaskRecord* record) {
  Var f = extract_features(tape, waveform);
  if (options.mask != nullptr && options.rng != nullptr) {
    MaskRecord rec =
        draw_mask(f.value().rows(), f.value().cols(), *options.mask, *options.rng);
    f = apply_mask(f, rec, tape.param(mask_embedding_));
    if (record != nullptr) *record = std::move(rec);
  }
  return encode_context(tape, f, options.adapters_active);
}

std::vector<Var> SpeechEncoder::encode_batch(Tape& tape,
                                             const std::vector<std::span<const float>>& batch,
                                             bool adapters_active) {
  std::vector<Var> out;
  out.reserve(batch.size());
  EncodeOptions opts;
  opts.adapters_active = adapters_active;
  for (auto wav : batch) out.push_back(encode(tape, wav, opts));
  return out;
}

std::size_t SpeechEncoder::insert_adapters(const AdapterConfig& acfg, Rng& rng) {
  if (adapters_) throw ContractError("encoder already has adapters");
  visit("", [](const std::string&, Parameter& p) { p.trainable = false; });
  const std::size_t d = config_.model_dim;
  const std::size_t h = acfg.hidden_size(d);
  std::size_t count = 0;
  for (auto& layer : layers_) {
    layer.attn_adapter = Adapter(d, h, rng);
    layer.ffn_adapter = Adapter(d, h, rng);
    count += layer.attn_adapter->parameter_count() + layer.ffn_adapter->parameter_count();
  }
  adapters_ = true;
  return count;
}

void SpeechEncoder::visit(const std::string& prefix, const ParameterVisitor& fn) {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].visit(prefix + "features.conv" + std::to_string(i), fn);
  }
  feature_norm_.visit(prefix + "features.norm", fn);
  feature_proj_.visit(prefix + "features.proj", fn);
  pos_conv_.visit(prefix + "pos_conv", fn);
  fn(prefix + "mask_embedding", mask_embedding_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    layers_[i].visit(prefix + "layers." + std::to_string(i), fn);
  }
  final_norm_.visit(prefix + "final_norm", fn);
}

std::size_t SpeechEncoder::parameter_count() {
  std::size_t n = 0;
  visit("", [&n](const std::string&, Parameter& p) { n += p.value.size(); });
  return n;
}

}  // namespace samukd
