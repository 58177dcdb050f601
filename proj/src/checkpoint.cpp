#include "samukd/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>

#include "json.hpp"
#include "samukd/error.hpp"

namespace samukd {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

std::uint64_t fnv1a64(std::span<const unsigned char> bytes, std::uint64_t h) {
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t tensor_digest(const Tensor& t) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t d : t.shape()) {
    const std::uint64_t v = d;
    h = fnv1a64({reinterpret_cast<const unsigned char*>(&v), sizeof v}, h);
  }
  const auto vals = t.values();
  return fnv1a64({reinterpret_cast<const unsigned char*>(vals.data()), vals.size_bytes()}, h);
}

namespace {

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
bool get(std::ifstream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof v));
}

json encoder_to_json(const EncoderConfig& c) {
  return {{"layers", c.num_layers},
          {"dim", c.model_dim},
          {"ffn_dim", c.ffn_dim},
          {"heads", c.num_heads},
          {"pos_conv_kernel", c.pos_conv_kernel},
          {"feature_channels", c.features.channels},
          {"kernel_widths", c.features.kernel_widths},
          {"strides", c.features.strides}};
}

EncoderConfig encoder_from_json(const json& j) {
  EncoderConfig c;
  c.num_layers = j.at("layers").get<std::size_t>();
  c.model_dim = j.at("dim").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.num_heads = j.at("heads").get<std::size_t>();
  c.pos_conv_kernel = j.at("pos_conv_kernel").get<std::size_t>();
  c.features.channels = j.at("feature_channels").get<std::size_t>();
  c.features.out_dim = c.model_dim;
  c.features.kernel_widths = j.at("kernel_widths").get<std::vector<std::size_t>>();
  c.features.strides = j.at("strides").get<std::vector<std::size_t>>();
  return c;
}

json decoder_to_json(const DecoderConfig& c) {
  return {{"layers", c.num_layers},         {"dim", c.model_dim},
          {"ffn_dim", c.ffn_dim},           {"heads", c.num_heads},
          {"vocab_size", c.vocab_size},     {"max_target_len", c.max_target_len},
          {"memory_positions", c.memory_positions}};
}

DecoderConfig decoder_from_json(const json& j) {
  DecoderConfig c;
  c.num_layers = j.at("layers").get<std::size_t>();
  c.model_dim = j.at("dim").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.num_heads = j.at("heads").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.max_target_len = j.at("max_target_len").get<std::size_t>();
  c.memory_positions = j.at("memory_positions").get<bool>();
  return c;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& path, const CheckpointMeta& meta,
                      std::span<const NamedParameter> params) {
  json manifest = json::array();
  for (const auto& p : params) {
    manifest.push_back({{"name", p.name},
                        {"shape", p.param->value.shape()},
                        {"dtype", "f32"},
                        {"trainable", p.param->trainable}});
  }
  json model = meta.model_json.empty() ? json::object() : json::parse(meta.model_json);
  const json header = {{"config_digest", meta.config_digest},
                       {"step", meta.step},
                       {"model", model},
                       {"manifest", manifest}};
  const std::string text = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(kCheckpointMagic, 8);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, text.size());
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& p : params) {
    for (double v : p.param->value.values()) put<float>(out, static_cast<float>(v));
  }
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw FormatError(path.string() + ": not a checkpoint (bad magic)");
  }
  std::uint32_t version = 0;
  if (!get(in, version)) throw FormatError(path.string() + ": truncated header");
  if (version != kCheckpointVersion) {
    throw VersionError(path.string() + ": checkpoint version " + std::to_string(version) +
                       ", expected " + std::to_string(kCheckpointVersion));
  }
  std::uint64_t length = 0;
  if (!get(in, length)) throw FormatError(path.string() + ": truncated header");
  if (length > (std::uint64_t{1} << 32)) throw FormatError(path.string() + ": metadata too long");
  std::string text(length, '\0');
  if (!in.read(text.data(), static_cast<std::streamsize>(length))) {
    throw FormatError(path.string() + ": truncated metadata");
  }

  CheckpointData data;
  try {
    const json header = json::parse(text);
    data.meta.config_digest = header.at("config_digest").get<std::string>();
    data.meta.step = header.at("step").get<std::uint64_t>();
    data.meta.model_json = header.at("model").dump();
    for (const auto& e : header.at("manifest")) {
      ManifestEntry m;
      m.name = e.at("name").get<std::string>();
      m.shape = e.at("shape").get<Shape>();
      m.dtype = e.at("dtype").get<std::string>();
      m.trainable = e.at("trainable").get<bool>();
      if (m.dtype != "f32") throw FormatError("unsupported dtype " + m.dtype);
      data.manifest.push_back(std::move(m));
    }
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad metadata: " + e.what());
  }

  for (const auto& m : data.manifest) {
    std::vector<float> payload(shape_size(m.shape));
    const auto bytes = static_cast<std::streamsize>(payload.size() * sizeof(float));
    if (!in.read(reinterpret_cast<char*>(payload.data()), bytes)) {
      throw CorruptionError(path.string() + ": payload of '" + m.name + "' is truncated");
    }
    data.payloads.push_back(std::move(payload));
  }
  if (in.peek() != std::ifstream::traits_type::eof()) {
    throw CorruptionError(path.string() + ": trailing bytes after the last payload");
  }
  return data;
}

void restore_parameters(const CheckpointData& data, std::span<const NamedParameter> params) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < data.manifest.size(); ++i) index[data.manifest[i].name] = i;
  if (index.size() != params.size()) {
    throw DataError("checkpoint holds " + std::to_string(index.size()) + " parameters, model has " +
                    std::to_string(params.size()));
  }
  for (const auto& p : params) {
    auto it = index.find(p.name);
    if (it == index.end()) throw DataError("checkpoint lacks parameter '" + p.name + "'");
    const auto& m = data.manifest[it->second];
    if (m.shape != p.param->value.shape()) {
      throw DataError("parameter '" + p.name + "' has shape " + shape_string(m.shape) +
                      " in the checkpoint, " + shape_string(p.param->value.shape()) +
                      " in the model");
    }
    const auto& payload = data.payloads[it->second];
    auto vals = p.param->value.values();
    for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = payload[i];
    p.param->trainable = m.trainable;
    p.param->zero_grad();
  }
}

void snap_to_float32(std::span<const NamedParameter> params) {
  for (const auto& p : params) {
    for (double& v : p.param->value.values()) v = static_cast<float>(v);
  }
}

void save_model_checkpoint(const std::filesystem::path& path, TranslationModel& model,
                           const CheckpointMeta& meta, PoolingHead* head) {
  std::vector<NamedParameter> params = model.named_parameters();
  json arch = {{"encoder", encoder_to_json(model.encoder().config())},
               {"decoder", decoder_to_json(model.decoder().config())},
               {"adapter_hidden", 0},
               {"head_embed_dim", 0}};
  for (const auto& p : params) {
    if (p.name.find("_adapter.down.weight") != std::string::npos) {
      arch["adapter_hidden"] = p.param->value.shape()[1];
      break;
    }
  }
  if (head) {
    arch["head_embed_dim"] = head->embed_dim();
    head->visit("head.", [&](const std::string& name, Parameter& p) {
      params.push_back({name, &p});
    });
  }
  CheckpointMeta m = meta;
  m.model_json = arch.dump();
  write_checkpoint(path, m, params);
}

LoadedModel load_model_checkpoint(const std::filesystem::path& path) {
  const CheckpointData data = read_checkpoint(path);
  json arch;
  EncoderConfig ec;
  DecoderConfig dc;
  std::size_t adapter_hidden = 0, head_dim = 0;
  try {
    arch = json::parse(data.meta.model_json);
    ec = encoder_from_json(arch.at("encoder"));
    dc = decoder_from_json(arch.at("decoder"));
    adapter_hidden = arch.at("adapter_hidden").get<std::size_t>();
    head_dim = arch.at("head_embed_dim").get<std::size_t>();
  } catch (const json::exception& e) {
    throw FormatError(path.string() + ": bad model description: " + e.what());
  }
  LoadedModel out{TranslationModel(ec, dc, 0), PoolingHead(), false, data.meta};
  Rng rng(0);
  if (adapter_hidden > 0) {
    AdapterConfig acfg;
    acfg.hidden_ratio = static_cast<double>(adapter_hidden) / static_cast<double>(ec.model_dim);
    out.model.encoder().insert_adapters(acfg, rng);
  }
  std::vector<NamedParameter> params = out.model.named_parameters();
  if (head_dim > 0) {
    out.head = PoolingHead(ec.model_dim, head_dim, rng);
    out.has_head = true;
    out.head.visit("head.", [&](const std::string& name, Parameter& p) {
      params.push_back({name, &p});
    });
  }
  restore_parameters(data, params);
  return out;
}

}  // namespace samukd
