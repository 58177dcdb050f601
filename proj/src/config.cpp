#include "samukd/config.hpp"

#include <yaml-cpp/yaml.h>

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "samukd/error.hpp"

namespace samukd {

const char* init_kind_name(InitKind kind) {
  return kind == InitKind::kDistilled ? "distilled" : "baseline";
}

InitKind parse_init_kind(const std::string& name) {
  if (name == "distilled") return InitKind::kDistilled;
  if (name == "baseline") return InitKind::kBaseline;
  throw ConfigError("unknown init '" + name + "' (expected distilled or baseline)");
}

void ExperimentConfig::resolve() {
  if (corpus.train_pairs.empty()) {
    corpus.train_pairs.assign(world.source_languages.size(), 400);
  }
  encoder.features.out_dim = encoder.model_dim;
  decoder.model_dim = encoder.model_dim;
  decoder.vocab_size = world.num_concepts + kNumSpecialTokens;
  corpus.down_factor = encoder.features.down_factor();
  if (mask.time_span == 0 || mask.feat_span == 0) {
    throw ConfigError("train.mask: spans must be >= 1");
  }
  train.mask = mask_from_fractions(mask.time_fraction, mask.time_span, mask.feat_fraction,
                                   mask.feat_span);
  distill.seed = seed;
  train.seed = seed;

  world.validate();
  corpus.validate(world.source_languages.size());
  distill.validate();
  encoder.validate();
  decoder.validate();
  train.validate();
  beam.validate();
  if (world.source_languages.size() < 2 && retrieval_pairs > 0) {
    throw ConfigError("distill: retrieval needs at least two languages");
  }
  if (inits.empty()) throw ConfigError("scenario: inits must not be empty");
  if (modes.empty()) throw ConfigError("scenario: modes must not be empty");
}

namespace {

// A YAML mapping whose keys are checked off as they are read; whatever is left
// at the end is unknown.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) {
      throw ConfigError("section '" + path_ + "' must be a mapping");
    }
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    seen_.insert(key);
    if (!node_ || node_.IsNull()) return;
    const YAML::Node v = node_[key];
    if (!v || v.IsNull()) return;
    try {
      out = v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("bad value for '" + key + "' in section '" + path_ + "'");
    }
  }

  void require(const std::string& key) const {
    if (!node_ || node_.IsNull() || !node_[key] || node_[key].IsNull()) {
      throw ConfigError("missing required key '" + key + "' in section '" + path_ + "'");
    }
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    if (!node_ || node_.IsNull()) return Section(YAML::Node(), path_ + "." + key);
    return Section(node_[key], path_.empty() ? key : path_ + "." + key);
  }

  void finish() const {
    if (!node_ || node_.IsNull()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) {
        throw ConfigError("unknown key '" + key + "'" +
                          (path_.empty() ? std::string() : " in section '" + path_ + "'"));
      }
    }
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Enum, typename Parse>
void read_enum(Section& s, const std::string& key, Enum& out, Parse parse) {
  std::string name;
  s.read(key, name);
  if (!name.empty()) out = parse(name);
}

template <typename Enum, typename Parse>
void read_enum_list(Section& s, const std::string& key, std::vector<Enum>& out, Parse parse) {
  std::vector<std::string> names;
  s.read(key, names);
  if (names.empty()) return;
  out.clear();
  for (const auto& n : names) out.push_back(parse(n));
}

ExperimentConfig from_yaml(const YAML::Node& root) {
  if (root && !root.IsNull() && !root.IsMap()) throw ConfigError("config must be a mapping");
  ExperimentConfig c;
  Section top(root, "");
  top.read("seed", c.seed);

  Section data = top.child("data");
  data.require("languages");
  data.read("languages", c.world.source_languages);
  data.read("target_language", c.world.target_language);
  data.read("train_pairs", c.corpus.train_pairs);
  data.read("eval_pairs", c.corpus.eval_pairs);
  data.read("bkg_per_language", c.corpus.bkg_per_language);
  data.read("frames_per_hour", c.corpus.frames_per_hour);
  data.read("num_concepts", c.world.num_concepts);
  data.read("samples_per_concept", c.world.samples_per_concept);
  data.read("motif_components", c.world.motif_components);
  data.read("min_concepts", c.world.min_concepts);
  data.read("max_concepts", c.world.max_concepts);
  data.read("noise_std", c.world.noise_std);
  data.read("max_carrier_offset", c.world.max_carrier_offset);
  data.read("carrier_depth", c.world.carrier_depth);
  data.finish();

  Section distill = top.child("distill");
  distill.read("beta", c.distill.beta);
  distill.read("lr", c.distill.lr);
  distill.read("warmup_frac", c.distill.warmup_frac);
  distill.read("const_frac", c.distill.const_frac);
  distill.read("steps", c.distill.steps);
  distill.read("batch_size", c.distill.batch_size);
  distill.read("embed_dim", c.distill.embed_dim);
  distill.read("balance_alpha", c.distill.balance_alpha);
  distill.read("speed_perturb", c.distill.speed_perturb);
  distill.read("perturb_factors", c.distill.perturb_factors);
  distill.read("retrieval_pairs", c.retrieval_pairs);
  distill.finish();

  Section model = top.child("model");
  Section enc = model.child("encoder");
  enc.read("layers", c.encoder.num_layers);
  enc.read("dim", c.encoder.model_dim);
  enc.read("ffn_dim", c.encoder.ffn_dim);
  enc.read("heads", c.encoder.num_heads);
  enc.read("pos_conv_kernel", c.encoder.pos_conv_kernel);
  enc.read("feature_channels", c.encoder.features.channels);
  enc.read("kernel_widths", c.encoder.features.kernel_widths);
  enc.read("strides", c.encoder.features.strides);
  enc.finish();
  Section dec = model.child("decoder");
  dec.read("layers", c.decoder.num_layers);
  dec.read("ffn_dim", c.decoder.ffn_dim);
  dec.read("heads", c.decoder.num_heads);
  dec.read("max_target_len", c.decoder.max_target_len);
  dec.read("memory_positions", c.decoder.memory_positions);
  dec.finish();
  model.read("adapter_hidden_ratio", c.train.adapter.hidden_ratio);
  model.finish();

  Section train = top.child("train");
  train.read("replacement_prob", c.train.replacement_prob);
  train.read("peak_lr", c.train.peak_lr);
  train.read("total_iters", c.train.total_iters);
  train.read("warmup_frac", c.train.warmup_frac);
  train.read("const_frac", c.train.const_frac);
  train.read("batch_frames", c.train.batch_frames);
  train.read("label_smoothing", c.train.label_smoothing);
  train.read("balance_alpha", c.train.balance_alpha);
  Section mask = train.child("mask");
  mask.read("time_fraction", c.mask.time_fraction);
  mask.read("time_span", c.mask.time_span);
  mask.read("feat_fraction", c.mask.feat_fraction);
  mask.read("feat_span", c.mask.feat_span);
  mask.finish();
  Section adam = train.child("adam");
  adam.read("beta1", c.train.adam.beta1);
  adam.read("beta2", c.train.adam.beta2);
  adam.read("eps", c.train.adam.eps);
  adam.finish();
  train.finish();

  Section eval = top.child("eval");
  eval.read("beam", c.beam.beam);
  eval.read("max_len", c.beam.max_len);
  eval.read("length_normalize", c.beam.length_normalize);
  eval.read("include_greedy", c.beam.include_greedy);
  eval.finish();

  Section scenario = top.child("scenario");
  scenario.require("name");
  read_enum(scenario, "name", c.scenario, parse_scenario);
  read_enum_list(scenario, "inits", c.inits, parse_init_kind);
  read_enum_list(scenario, "modes", c.modes, parse_finetune_mode);
  scenario.finish();

  top.finish();
  c.resolve();
  return c;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  return from_yaml(root);
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string to_yaml(const ExperimentConfig& c) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "seed" << YAML::Value << c.seed;

  out << YAML::Key << "data" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "languages" << YAML::Value << YAML::Flow << c.world.source_languages;
  out << YAML::Key << "target_language" << YAML::Value << c.world.target_language;
  out << YAML::Key << "train_pairs" << YAML::Value << YAML::Flow << c.corpus.train_pairs;
  out << YAML::Key << "eval_pairs" << YAML::Value << c.corpus.eval_pairs;
  out << YAML::Key << "bkg_per_language" << YAML::Value << c.corpus.bkg_per_language;
  out << YAML::Key << "frames_per_hour" << YAML::Value << c.corpus.frames_per_hour;
  out << YAML::Key << "num_concepts" << YAML::Value << c.world.num_concepts;
  out << YAML::Key << "samples_per_concept" << YAML::Value << c.world.samples_per_concept;
  out << YAML::Key << "motif_components" << YAML::Value << c.world.motif_components;
  out << YAML::Key << "min_concepts" << YAML::Value << c.world.min_concepts;
  out << YAML::Key << "max_concepts" << YAML::Value << c.world.max_concepts;
  out << YAML::Key << "noise_std" << YAML::Value << c.world.noise_std;
  out << YAML::Key << "max_carrier_offset" << YAML::Value << c.world.max_carrier_offset;
  out << YAML::Key << "carrier_depth" << YAML::Value << c.world.carrier_depth;
  out << YAML::EndMap;

  out << YAML::Key << "distill" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "beta" << YAML::Value << c.distill.beta;
  out << YAML::Key << "lr" << YAML::Value << c.distill.lr;
  out << YAML::Key << "warmup_frac" << YAML::Value << c.distill.warmup_frac;
  out << YAML::Key << "const_frac" << YAML::Value << c.distill.const_frac;
  out << YAML::Key << "steps" << YAML::Value << c.distill.steps;
  out << YAML::Key << "batch_size" << YAML::Value << c.distill.batch_size;
  out << YAML::Key << "embed_dim" << YAML::Value << c.distill.embed_dim;
  out << YAML::Key << "balance_alpha" << YAML::Value << c.distill.balance_alpha;
  out << YAML::Key << "speed_perturb" << YAML::Value << c.distill.speed_perturb;
  out << YAML::Key << "perturb_factors" << YAML::Value << YAML::Flow << c.distill.perturb_factors;
  out << YAML::Key << "retrieval_pairs" << YAML::Value << c.retrieval_pairs;
  out << YAML::EndMap;

  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "encoder" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "layers" << YAML::Value << c.encoder.num_layers;
  out << YAML::Key << "dim" << YAML::Value << c.encoder.model_dim;
  out << YAML::Key << "ffn_dim" << YAML::Value << c.encoder.ffn_dim;
  out << YAML::Key << "heads" << YAML::Value << c.encoder.num_heads;
  out << YAML::Key << "pos_conv_kernel" << YAML::Value << c.encoder.pos_conv_kernel;
  out << YAML::Key << "feature_channels" << YAML::Value << c.encoder.features.channels;
  out << YAML::Key << "kernel_widths" << YAML::Value << YAML::Flow << c.encoder.features.kernel_widths;
  out << YAML::Key << "strides" << YAML::Value << YAML::Flow << c.encoder.features.strides;
  out << YAML::EndMap;
  out << YAML::Key << "decoder" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "layers" << YAML::Value << c.decoder.num_layers;
  out << YAML::Key << "ffn_dim" << YAML::Value << c.decoder.ffn_dim;
  out << YAML::Key << "heads" << YAML::Value << c.decoder.num_heads;
  out << YAML::Key << "max_target_len" << YAML::Value << c.decoder.max_target_len;
  out << YAML::Key << "memory_positions" << YAML::Value << c.decoder.memory_positions;
  out << YAML::EndMap;
  out << YAML::Key << "adapter_hidden_ratio" << YAML::Value << c.train.adapter.hidden_ratio;
  out << YAML::EndMap;

  const MaskFractions& mf = c.mask;
  out << YAML::Key << "train" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "replacement_prob" << YAML::Value << c.train.replacement_prob;
  out << YAML::Key << "peak_lr" << YAML::Value << c.train.peak_lr;
  out << YAML::Key << "total_iters" << YAML::Value << c.train.total_iters;
  out << YAML::Key << "warmup_frac" << YAML::Value << c.train.warmup_frac;
  out << YAML::Key << "const_frac" << YAML::Value << c.train.const_frac;
  out << YAML::Key << "batch_frames" << YAML::Value << c.train.batch_frames;
  out << YAML::Key << "label_smoothing" << YAML::Value << c.train.label_smoothing;
  out << YAML::Key << "balance_alpha" << YAML::Value << c.train.balance_alpha;
  out << YAML::Key << "mask" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "time_fraction" << YAML::Value << mf.time_fraction;
  out << YAML::Key << "time_span" << YAML::Value << mf.time_span;
  out << YAML::Key << "feat_fraction" << YAML::Value << mf.feat_fraction;
  out << YAML::Key << "feat_span" << YAML::Value << mf.feat_span;
  out << YAML::EndMap;
  out << YAML::Key << "adam" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "beta1" << YAML::Value << c.train.adam.beta1;
  out << YAML::Key << "beta2" << YAML::Value << c.train.adam.beta2;
  out << YAML::Key << "eps" << YAML::Value << c.train.adam.eps;
  out << YAML::EndMap;
  out << YAML::EndMap;

  out << YAML::Key << "eval" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "beam" << YAML::Value << c.beam.beam;
  out << YAML::Key << "max_len" << YAML::Value << c.beam.max_len;
  out << YAML::Key << "length_normalize" << YAML::Value << c.beam.length_normalize;
  out << YAML::Key << "include_greedy" << YAML::Value << c.beam.include_greedy;
  out << YAML::EndMap;

  std::vector<std::string> inits, modes;
  for (auto k : c.inits) inits.emplace_back(init_kind_name(k));
  for (auto m : c.modes) modes.emplace_back(finetune_mode_name(m));
  out << YAML::Key << "scenario" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "name" << YAML::Value << scenario_name(c.scenario);
  out << YAML::Key << "inits" << YAML::Value << YAML::Flow << inits;
  out << YAML::Key << "modes" << YAML::Value << YAML::Flow << modes;
  out << YAML::EndMap;

  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::string config_digest(const ExperimentConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_yaml(config)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace samukd
