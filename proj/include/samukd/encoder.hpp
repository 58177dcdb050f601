#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "samukd/nn.hpp"

namespace samukd {

/// Strided temporal conv stack. Each layer pads (kernel - stride) zeros split
/// across both ends, so every layer divides the length by its stride exactly
/// and the stack yields floor(S / down_factor()) frames.
struct FeatureExtractorConfig {
  std::vector<std::size_t> kernel_widths{4, 4};
  std::vector<std::size_t> strides{2, 2};
  std::size_t channels = 16;
  std::size_t out_dim = 32;

  std::size_t num_layers() const { return strides.size(); }
  std::size_t down_factor() const;
  void validate() const;

  // Seven layers, r = 320, 512 channels, d = 1024.
  static FeatureExtractorConfig full_scale();
};

struct AdapterConfig {
  double hidden_ratio = 0.25;

  std::size_t hidden_size(std::size_t dim) const;
};

/// Span masking. Each index independently starts a span with the given
/// probability; spans may overlap and are clipped at the sequence end.
struct MaskConfig {
  double time_prob = 0.3;
  std::size_t time_span = 6;
  double feat_prob = 0.5;
  std::size_t feat_span = 64;

  void validate() const;
};

struct EncoderConfig {
  FeatureExtractorConfig features;
  std::size_t num_layers = 4;
  std::size_t model_dim = 32;
  std::size_t ffn_dim = 64;
  std::size_t num_heads = 4;
  std::size_t pos_conv_kernel = 7;

  void validate() const;

  // 24 layers, d = 1024, ffn 3072, 16 heads.
  static EncoderConfig full_scale();
};

struct MaskRecord {
  std::vector<std::size_t> time_starts;
  std::vector<std::size_t> feature_starts;
  std::vector<bool> masked_frames;
  std::vector<bool> masked_channels;

  std::size_t masked_frame_count() const;
  double masked_frame_fraction() const;
};

MaskRecord draw_mask(std::size_t frames, std::size_t dim, const MaskConfig& cfg, Rng& rng);
// Masked frames become `mask_row`; masked channels are zeroed everywhere.
Var apply_mask(Var features, const MaskRecord& record, Var mask_row);

struct EncoderLayer {
  LayerNormParams attn_norm;
  MultiHeadAttention attn;
  LayerNormParams ffn_norm;
  Linear ffn_in;
  Linear ffn_out;
  std::optional<Adapter> attn_adapter;
  std::optional<Adapter> ffn_adapter;

  void visit(const std::string& prefix, const ParameterVisitor& fn);
};

struct EncodeOptions {
  bool adapters_active = true;
  // Masking is applied only when both are set (training path).
  const MaskConfig* mask = nullptr;
  Rng* rng = nullptr;
};

/// Feature extractor, convolutional positional encoding and a pre-norm
/// transformer stack with optional per-layer adapters.
class SpeechEncoder {
 public:
  SpeechEncoder() = default;
  SpeechEncoder(EncoderConfig config, Rng& rng);

  const EncoderConfig& config() const noexcept { return config_; }
  std::size_t num_frames(std::size_t samples) const;

  // waveform[S] -> f[T×d], T = floor(S/r). Throws LengthError when S < r.
  Var extract_features(Tape& tape, std::span<const float> waveform);
  // f + conv(f), same padding.
  Var positional_encode(Tape& tape, Var features);
  // Positional encoding, transformer layers and the output norm.
  Var encode_context(Tape& tape, Var features, bool adapters_active);
  Var encode(Tape& tape, std::span<const float> waveform, const EncodeOptions& options = {},
             MaskRecord* record = nullptr);
  std::vector<Var> encode_batch(Tape& tape, const std::vector<std::span<const float>>& batch,
                                bool adapters_active);

  // Adds two adapters per layer and freezes every pre-existing encoder
  // parameter. Returns the number of adapter parameters added. Throws
  // ContractError if adapters are already present.
  std::size_t insert_adapters(const AdapterConfig& acfg, Rng& rng);
  bool has_adapters() const noexcept { return adapters_; }

  Parameter& mask_embedding() noexcept { return mask_embedding_; }
  void visit(const std::string& prefix, const ParameterVisitor& fn);
  std::size_t parameter_count();

 private:
  EncoderConfig config_;
  std::vector<Conv1d> convs_;
  LayerNormParams feature_norm_;
  Linear feature_proj_;
  Conv1d pos_conv_;
  Parameter mask_embedding_;
  std::vector<EncoderLayer> layers_;
  LayerNormParams final_norm_;
  bool adapters_ = false;
};

// Uniform double in [0, 1) from the top 53 bits of one generator draw.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

}  // namespace samukd
