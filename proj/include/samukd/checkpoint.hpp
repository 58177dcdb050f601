#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "samukd/distill.hpp"
#include "samukd/gradcheck.hpp"
#include "samukd/translator.hpp"

namespace samukd {

inline constexpr char kCheckpointMagic[9] = "SAMUKD01";
inline constexpr std::uint32_t kCheckpointVersion = 1;

// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t h = 0xcbf29ce484222325ULL);
// Digest of a tensor's shape and raw double values.
std::uint64_t tensor_digest(const Tensor& t);

struct ManifestEntry {
  std::string name;
  Shape shape;
  std::string dtype = "f32";
  bool trainable = true;
};

struct CheckpointMeta {
  std::string config_digest;
  std::uint64_t step = 0;
  // Architecture needed to rebuild the model, as JSON text; filled in by
  // save_model_checkpoint.
  std::string model_json;
};

struct CheckpointData {
  CheckpointMeta meta;
  std::vector<ManifestEntry> manifest;
  std::vector<std::vector<float>> payloads;
};

/// Layout: magic, u32 version, u64 metadata length, metadata JSON (digest,
/// step, model, manifest), then each payload as little-endian float32 in
/// manifest order. Throws IoError when the file cannot be written.
void write_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                      std::span<const NamedParameter> params);
/// Throws FormatError (magic, metadata), VersionError, or CorruptionError
/// naming the first parameter whose payload is short.
CheckpointData read_checkpoint(const std::filesystem::path& path);

// Copies payloads and freeze flags into `params`, matched by name. Throws
// DataError when names or shapes disagree.
void restore_parameters(const CheckpointData& data, std::span<const NamedParameter> params);

// Rounds every value to the nearest float32, so a save/load roundtrip is exact.
void snap_to_float32(std::span<const NamedParameter> params);

// The translation model, plus the pooling head ("head.*") when given.
void save_model_checkpoint(const std::filesystem::path& path, TranslationModel& model,
                           const CheckpointMeta& meta, PoolingHead* head = nullptr);

struct LoadedModel {
  TranslationModel model;
  // Empty (embed_dim 0) unless the checkpoint holds one.
  PoolingHead head;
  bool has_head = false;
  CheckpointMeta meta;
};

LoadedModel load_model_checkpoint(const std::filesystem::path& path);

}  // namespace samukd
