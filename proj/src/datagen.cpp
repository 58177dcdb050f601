#include "samukd/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

#include "json.hpp"

#include "samukd/encoder.hpp"
#include "samukd/error.hpp"

namespace samukd {

namespace {

std::vector<int> shuffled_identity(std::size_t n, Rng& rng) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 0);
  // Fisher-Yates with our own index draw so results do not depend on the
  // standard library's shuffle implementation.
  for (std::size_t i = n; i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(i));
    std::swap(p[i - 1], p[std::min(j, i - 1)]);
  }
  return p;
}

double gaussian(Rng& rng) {
  // Box-Muller on two uniform01 draws; portable across standard libraries.
  const double u1 = 1.0 - uniform01(rng);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

std::size_t uniform_index(Rng& rng, std::size_t n) {
  const auto j = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(n));
  return std::min(j, n - 1);
}

}  // namespace

const char* tier_name(Tier tier) {
  switch (tier) {
    case Tier::kHigh: return "high";
    case Tier::kMid: return "mid";
    case Tier::kLow: return "low";
  }
  return "?";
}

Tier parse_tier(const std::string& name) {
  if (name == "high") return Tier::kHigh;
  if (name == "mid") return Tier::kMid;
  if (name == "low") return Tier::kLow;
  throw DataError("unknown tier '" + name + "'");
}

Tier classify_tier(double hours) {
  if (!(hours >= 0.0)) throw RangeError("training amount must be >= 0, got " + std::to_string(hours));
  if (hours > 100.0) return Tier::kHigh;
  if (hours >= 10.0) return Tier::kMid;
  return Tier::kLow;
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t mix_seed(std::uint64_t seed, const std::string& salt) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : salt) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return mix_seed(seed, h);
}

void WorldConfig::validate() const {
  if (source_languages.empty()) throw ConfigError("data: language list is empty");
  if (source_languages.size() < 2) throw ConfigError("data: at least two languages are required");
  std::set<std::string> seen;
  for (const auto& l : source_languages) {
    if (l.empty()) throw ConfigError("data: empty language id");
    if (l == target_language) throw ConfigError("data: source language equals target '" + l + "'");
    if (!seen.insert(l).second) throw ConfigError("data: duplicate language '" + l + "'");
  }
  if (num_concepts < 2) throw ConfigError("data: num_concepts must be >= 2");
  if (samples_per_concept == 0) throw ConfigError("data: samples_per_concept must be >= 1");
  if (min_concepts == 0 || max_concepts < min_concepts) {
    throw ConfigError("data: need 1 <= min_concepts <= max_concepts");
  }
  if (noise_std < 0.0 || max_carrier_offset < 0.0 || carrier_depth < 0.0) {
    throw ConfigError("data: noise_std, max_carrier_offset and carrier_depth must be >= 0");
  }
}

SyntheticLanguage::SyntheticLanguage(std::string id, std::size_t num_concepts,
                                     double carrier_offset, std::vector<float> carrier_gain,
                                     Rng& rng)
    : id_(std::move(id)), carrier_offset_(carrier_offset), carrier_gain_(std::move(carrier_gain)) {
  concept_to_word_ = shuffled_identity(num_concepts, rng);
  word_to_concept_.assign(num_concepts, 0);
  for (std::size_t c = 0; c < num_concepts; ++c) {
    word_to_concept_[static_cast<std::size_t>(concept_to_word_[c])] = static_cast<int>(c);
  }
}

std::vector<int> SyntheticLanguage::render(std::span<const int> concepts) const {
  std::vector<int> out;
  out.reserve(concepts.size());
  for (int c : concepts) {
    if (c < 0 || static_cast<std::size_t>(c) >= concept_to_word_.size()) {
      throw VocabularyError("concept id " + std::to_string(c) + " outside the vocabulary");
    }
    out.push_back(concept_to_word_[static_cast<std::size_t>(c)]);
  }
  return out;
}

std::vector<int> SyntheticLanguage::parse(std::span<const int> words) const {
  std::vector<int> out;
  out.reserve(words.size());
  for (int w : words) {
    if (w < 0 || static_cast<std::size_t>(w) >= word_to_concept_.size()) {
      throw VocabularyError("word id " + std::to_string(w) + " unknown in language " + id_);
    }
    out.push_back(word_to_concept_[static_cast<std::size_t>(w)]);
  }
  return out;
}

SyntheticWorld::SyntheticWorld(WorldConfig config, std::uint64_t seed)
    : config_(std::move(config)),
      seed_(seed),
      target_([&] {
        config_.validate();
        Rng rng(mix_seed(seed, "target:" + config_.target_language));
        return SyntheticLanguage(config_.target_language, config_.num_concepts, 0.0, {}, rng);
      }()) {
  Rng rng(mix_seed(seed, "motifs"));
  // Motifs are random mixtures of the lowest cosine components (no constant
  // term), scaled to unit RMS: smooth enough that mild resampling keeps them
  // recognisable, and zero-mean so the carrier offset stays readable.
  const std::size_t s = config_.samples_per_concept;
  const std::size_t k_max = std::min(config_.motif_components, s > 1 ? s - 1 : 0);
  motifs_.assign(config_.num_concepts, std::vector<float>(s, 0.0f));
  for (auto& m : motifs_) {
    std::vector<double> raw(s, 0.0);
    if (k_max == 0) {
      for (auto& v : raw) v = gaussian(rng);
    }
    for (std::size_t k = 1; k <= k_max; ++k) {
      const double a = gaussian(rng);
      for (std::size_t i = 0; i < s; ++i) {
        raw[i] += a * std::cos(M_PI * static_cast<double>(k) * (static_cast<double>(i) + 0.5) /
                               static_cast<double>(s));
      }
    }
    double rms = 0.0;
    for (double v : raw) rms += v * v;
    rms = std::sqrt(rms / static_cast<double>(s));
    for (std::size_t i = 0; i < s; ++i) m[i] = static_cast<float>(rms > 0.0 ? raw[i] / rms : 0.0);
  }
  const std::size_t n = config_.source_languages.size();
  std::vector<int> slots = shuffled_identity(n, rng);
  for (std::size_t i = 0; i < n; ++i) {
    const double offset =
        n == 1 ? 0.0
               : config_.max_carrier_offset *
                     (-1.0 + 2.0 * static_cast<double>(slots[i]) / static_cast<double>(n - 1));
    std::vector<float> gain;
    if (config_.carrier_depth > 0.0) {
      Rng carrier_rng(mix_seed(seed, "carrier:" + config_.source_languages[i]));
      // Frequencies between half a cycle and just under Nyquist per motif.
      const double f = 0.5 + uniform01(carrier_rng) * (std::max<double>(s, 2.0) / 2.0 - 1.0);
      const double phase = 2.0 * M_PI * uniform01(carrier_rng);
      gain.resize(s);
      for (std::size_t j = 0; j < s; ++j) {
        gain[j] = static_cast<float>(
            1.0 + config_.carrier_depth *
                      std::cos(2.0 * M_PI * f * static_cast<double>(j) / static_cast<double>(s) + phase));
      }
    }
    Rng lang_rng(mix_seed(seed, "language:" + config_.source_languages[i]));
    sources_.emplace_back(config_.source_languages[i], config_.num_concepts, offset, std::move(gain),
                          lang_rng);
  }
}

const SyntheticLanguage& SyntheticWorld::language(const std::string& id) const {
  for (const auto& l : sources_) {
    if (l.id() == id) return l;
  }
  if (id == target_.id()) return target_;
  throw DataError("unknown language '" + id + "'");
}

const std::vector<float>& SyntheticWorld::motif(int concept_id) const {
  if (concept_id < 0 || static_cast<std::size_t>(concept_id) >= motifs_.size()) {
    throw VocabularyError("concept id " + std::to_string(concept_id) + " outside the vocabulary");
  }
  return motifs_[static_cast<std::size_t>(concept_id)];
}

std::vector<int> SyntheticWorld::random_concepts(Rng& rng) const {
  const std::size_t len =
      config_.min_concepts + uniform_index(rng, config_.max_concepts - config_.min_concepts + 1);
  std::vector<int> out(len);
  for (auto& c : out) c = static_cast<int>(uniform_index(rng, config_.num_concepts));
  return out;
}

std::vector<float> SyntheticWorld::synthesize(const std::string& language,
                                              std::span<const int> concepts, Rng& rng) const {
  if (language == target_.id()) throw DataError("target language '" + language + "' has no speech");
  const auto& lang = this->language(language);
  std::vector<float> wav;
  wav.reserve(concepts.size() * config_.samples_per_concept);
  for (int c : concepts) {
    if (c < 0 || static_cast<std::size_t>(c) >= config_.num_concepts) {
      throw VocabularyError("concept id " + std::to_string(c) + " outside the vocabulary");
    }
    const auto& motif = motifs_[static_cast<std::size_t>(c)];
    const auto& gain = lang.carrier_gain();
    for (std::size_t j = 0; j < motif.size(); ++j) {
      const double g = gain.empty() ? 1.0 : gain[j];
      wav.push_back(static_cast<float>(g * motif[j] + lang.carrier_offset() +
                                       config_.noise_std * gaussian(rng)));
    }
  }
  return wav;
}

std::vector<int> SyntheticWorld::target_tokens(std::span<const int> concepts) const {
  auto words = target_.render(concepts);
  for (auto& w : words) w += kNumSpecialTokens;
  return words;
}

std::vector<int> SyntheticWorld::concepts_from_target(std::span<const int> tokens) const {
  std::vector<int> words;
  words.reserve(tokens.size());
  for (int t : tokens) {
    if (t < kNumSpecialTokens) throw VocabularyError("special token in target text");
    words.push_back(t - kNumSpecialTokens);
  }
  return target_.parse(words);
}

std::map<std::string, std::size_t> Corpus::per_language() const {
  std::map<std::string, std::size_t> out;
  for (const auto& u : utterances) ++out[u.language];
  return out;
}

std::size_t Corpus::total_frames() const {
  std::size_t n = 0;
  for (const auto& u : utterances) n += u.frames;
  return n;
}

const char* scenario_name(Scenario s) {
  return s == Scenario::kMultilingual ? "multilingual" : "zero-shot";
}

Scenario parse_scenario(const std::string& name) {
  if (name == "multilingual") return Scenario::kMultilingual;
  if (name == "zero-shot") return Scenario::kZeroShot;
  throw ConfigError("scenario: unknown name '" + name + "' (expected multilingual or zero-shot)");
}

void CorpusConfig::validate(std::size_t num_languages) const {
  if (train_pairs.size() != num_languages) {
    throw ConfigError("data: train_pairs has " + std::to_string(train_pairs.size()) +
                      " entries for " + std::to_string(num_languages) + " languages");
  }
  for (auto n : train_pairs) {
    if (n == 0) throw ConfigError("data: every language needs at least one training pair");
  }
  if (eval_pairs == 0) throw ConfigError("data: eval_pairs must be >= 1");
  if (bkg_per_language == 0) throw ConfigError("data: bkg_per_language must be >= 1");
  if (!(frames_per_hour > 0.0)) throw ConfigError("data: frames_per_hour must be positive");
  if (down_factor == 0) throw ConfigError("data: down_factor must be >= 1");
}

const TaskData& Dataset::task(const std::string& name) const {
  for (const auto& t : tasks) {
    if (t.spec.name() == name) return t;
  }
  throw DataError("unknown task '" + name + "'");
}

namespace {

Corpus generate_shard(const SyntheticWorld& world, const std::string& lang,
                      const std::string& split, std::size_t count, std::size_t down_factor) {
  Rng rng(mix_seed(world.seed(), lang + "/" + split));
  Corpus c;
  c.utterances.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Utterance u;
    char id[64];
    std::snprintf(id, sizeof(id), "-%s-%05zu", split.c_str(), i);
    u.id = lang + id;
    u.language = lang;
    u.concepts = world.random_concepts(rng);
    u.waveform = world.synthesize(lang, u.concepts, rng);
    u.frames = u.waveform.size() / down_factor;
    c.utterances.push_back(std::move(u));
  }
  return c;
}

}  // namespace

Dataset generate_corpus(const WorldConfig& world_cfg, const CorpusConfig& corpus_cfg,
                        std::uint64_t seed) {
  world_cfg.validate();
  corpus_cfg.validate(world_cfg.source_languages.size());
  Dataset ds{world_cfg, corpus_cfg, seed, SyntheticWorld(world_cfg, seed), {}, {}};
  const auto& langs = world_cfg.source_languages;
  for (std::size_t i = 0; i < langs.size(); ++i) {
    Corpus bkg = generate_shard(ds.world, langs[i], "bkg", corpus_cfg.bkg_per_language,
                                corpus_cfg.down_factor);
    for (auto& u : bkg.utterances) ds.background.utterances.push_back(std::move(u));
    TaskData task;
    task.train = generate_shard(ds.world, langs[i], "train", corpus_cfg.train_pairs[i],
                                corpus_cfg.down_factor);
    task.eval = generate_shard(ds.world, langs[i], "eval", corpus_cfg.eval_pairs,
                               corpus_cfg.down_factor);
    task.spec.source = langs[i];
    task.spec.target = world_cfg.target_language;
    task.spec.hours =
        static_cast<double>(task.train.total_frames()) / corpus_cfg.frames_per_hour;
    task.spec.tier = classify_tier(task.spec.hours);
    ds.tasks.push_back(std::move(task));
  }
  return ds;
}

std::vector<std::pair<Utterance, Utterance>> generate_parallel_speech(const SyntheticWorld& world,
                                                                      const std::string& lang_x,
                                                                      const std::string& lang_y,
                                                                      std::size_t count,
                                                                      std::size_t down_factor,
                                                                      std::uint64_t seed) {
  if (down_factor == 0) throw ConfigError("down_factor must be >= 1");
  Rng rng(mix_seed(seed, "parallel:" + lang_x + ":" + lang_y));
  std::vector<std::pair<Utterance, Utterance>> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const auto concepts = world.random_concepts(rng);
    auto make = [&](const std::string& lang) {
      Utterance u;
      u.id = lang + "-parallel-" + std::to_string(i);
      u.language = lang;
      u.concepts = concepts;
      u.waveform = world.synthesize(lang, concepts, rng);
      u.frames = u.waveform.size() / down_factor;
      return u;
    };
    Utterance x = make(lang_x);
    Utterance y = make(lang_y);
    out.emplace_back(std::move(x), std::move(y));
  }
  return out;
}

std::vector<double> balanced_sampling_distribution(std::span<const std::size_t> counts,
                                                   double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) {
    throw RangeError("sampling alpha must lie in [0, 1], got " + std::to_string(alpha));
  }
  if (counts.empty()) throw DataError("no languages to sample from");
  std::vector<double> p(counts.size());
  double total = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (counts[i] == 0) throw DataError("language " + std::to_string(i) + " has no utterances");
    p[i] = std::pow(static_cast<double>(counts[i]), alpha);
    total += p[i];
  }
  for (auto& v : p) v /= total;
  return p;
}

BalancedSampler::BalancedSampler(std::vector<std::size_t> counts, double alpha)
    : probs_(balanced_sampling_distribution(counts, alpha)) {
  cumulative_.resize(probs_.size());
  std::partial_sum(probs_.begin(), probs_.end(), cumulative_.begin());
  cumulative_.back() = 1.0;
}

std::size_t BalancedSampler::draw(Rng& rng) const {
  const double u = uniform01(rng);
  const auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
  return std::min(static_cast<std::size_t>(it - cumulative_.begin()), cumulative_.size() - 1);
}

std::vector<float> speed_perturb(std::span<const float> waveform, double factor) {
  if (!(factor > 0.0)) throw RangeError("speed factor must be positive");
  if (factor == 1.0 || waveform.empty()) return {waveform.begin(), waveform.end()};
  const std::size_t s = waveform.size();
  const auto n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::llround(static_cast<double>(s) / factor)));
  std::vector<float> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double pos = static_cast<double>(i) * factor;
    const auto j = static_cast<std::size_t>(pos);
    if (j + 1 >= s) {
      out[i] = waveform[s - 1];
      continue;
    }
    const double frac = pos - static_cast<double>(j);
    out[i] = static_cast<float>((1.0 - frac) * waveform[j] + frac * waveform[j + 1]);
  }
  return out;
}

ScenarioSplit make_scenario_splits(const std::vector<TaskSpec>& tasks, Scenario scenario) {
  ScenarioSplit split;
  split.eval = tasks;
  if (scenario == Scenario::kMultilingual) {
    split.train = tasks;
    return split;
  }
  for (const auto& t : tasks) {
    if (t.tier == Tier::kHigh) split.train.push_back(t);
  }
  if (split.train.empty()) throw ConfigError("scenario: zero-shot needs at least one high-tier task");
  return split;
}

// --- serialization -------------------------------------------------------

namespace {

using nlohmann::json;

json world_to_json(const WorldConfig& w) {
  return {{"source_languages", w.source_languages},
          {"target_language", w.target_language},
          {"num_concepts", w.num_concepts},
          {"samples_per_concept", w.samples_per_concept},
          {"motif_components", w.motif_components},
          {"min_concepts", w.min_concepts},
          {"max_concepts", w.max_concepts},
          {"noise_std", w.noise_std},
          {"max_carrier_offset", w.max_carrier_offset},
          {"carrier_depth", w.carrier_depth}};
}

WorldConfig world_from_json(const json& j) {
  WorldConfig w;
  w.source_languages = j.at("source_languages").get<std::vector<std::string>>();
  w.target_language = j.at("target_language").get<std::string>();
  w.num_concepts = j.at("num_concepts").get<std::size_t>();
  w.samples_per_concept = j.at("samples_per_concept").get<std::size_t>();
  w.motif_components = j.at("motif_components").get<std::size_t>();
  w.min_concepts = j.at("min_concepts").get<std::size_t>();
  w.max_concepts = j.at("max_concepts").get<std::size_t>();
  w.noise_std = j.at("noise_std").get<double>();
  w.max_carrier_offset = j.at("max_carrier_offset").get<double>();
  w.carrier_depth = j.at("carrier_depth").get<double>();
  return w;
}

void write_floats(const std::filesystem::path& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  std::vector<unsigned char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::uint32_t bits;
    std::memcpy(&bits, &values[i], 4);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

std::vector<float> read_floats(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) throw DataError(path.string() + ": size is not a multiple of 4");
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[i * 4 + b]) << (8 * b);
    std::memcpy(&out[i], &bits, 4);
  }
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ' ';
    s += std::to_string(v[i]);
  }
  return s;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

constexpr const char* kManifestHeader = "# samukd-corpus v1";

}  // namespace

void write_dataset(const Dataset& ds, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir / "waves", ec);
  if (ec) throw IoError("cannot create " + (dir / "waves").string() + ": " + ec.message());

  json meta;
  meta["format"] = "samukd-corpus";
  meta["version"] = 1;
  meta["seed"] = ds.seed;
  meta["world"] = world_to_json(ds.world_config);
  meta["corpus"] = {{"train_pairs", ds.corpus_config.train_pairs},
                    {"eval_pairs", ds.corpus_config.eval_pairs},
                    {"bkg_per_language", ds.corpus_config.bkg_per_language},
                    {"frames_per_hour", ds.corpus_config.frames_per_hour},
                    {"down_factor", ds.corpus_config.down_factor}};
  json tasks = json::array();
  for (const auto& t : ds.tasks) {
    tasks.push_back({{"source", t.spec.source},
                     {"target", t.spec.target},
                     {"tier", tier_name(t.spec.tier)},
                     {"hours", t.spec.hours}});
  }
  meta["tasks"] = tasks;
  {
    std::ofstream out(dir / "world.json");
    if (!out) throw IoError("cannot write " + (dir / "world.json").string());
    out << meta.dump(2) << "\n";
  }

  std::ofstream manifest(dir / "manifest.tsv");
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.tsv").string());
  manifest << kManifestHeader << "\n";
  manifest << "id\tlanguage\tconcepts\tframes\twavfile\tsplit\n";
  auto emit = [&](const Corpus& c, const std::string& split) {
    for (const auto& u : c.utterances) {
      const std::string rel = "waves/" + u.id + ".f32";
      write_floats(dir / rel, u.waveform);
      manifest << u.id << '\t' << u.language << '\t' << join_ints(u.concepts) << '\t' << u.frames
               << '\t' << rel << '\t' << split << '\n';
    }
  };
  emit(ds.background, "bkg");
  for (const auto& t : ds.tasks) {
    emit(t.train, "train");
    emit(t.eval, "eval");
  }
  if (!manifest) throw IoError("short write to manifest");
}

Dataset read_dataset(const std::filesystem::path& dir) {
  json meta;
  {
    std::ifstream in(dir / "world.json");
    if (!in) throw IoError("cannot read " + (dir / "world.json").string());
    try {
      in >> meta;
    } catch (const json::exception& e) {
      throw FormatError("world.json: " + std::string(e.what()));
    }
  }
  WorldConfig wc;
  CorpusConfig cc;
  std::uint64_t seed = 0;
  std::vector<TaskSpec> specs;
  try {
    if (meta.at("format").get<std::string>() != "samukd-corpus") {
      throw FormatError("world.json: not a corpus description");
    }
    if (meta.at("version").get<int>() != 1) throw VersionError("world.json: unsupported version");
    seed = meta.at("seed").get<std::uint64_t>();
    wc = world_from_json(meta.at("world"));
    const auto& c = meta.at("corpus");
    cc.train_pairs = c.at("train_pairs").get<std::vector<std::size_t>>();
    cc.eval_pairs = c.at("eval_pairs").get<std::size_t>();
    cc.bkg_per_language = c.at("bkg_per_language").get<std::size_t>();
    cc.frames_per_hour = c.at("frames_per_hour").get<double>();
    cc.down_factor = c.at("down_factor").get<std::size_t>();
    for (const auto& t : meta.at("tasks")) {
      specs.push_back(TaskSpec{t.at("source").get<std::string>(), t.at("target").get<std::string>(),
                               parse_tier(t.at("tier").get<std::string>()),
                               t.at("hours").get<double>()});
    }
  } catch (const json::exception& e) {
    throw FormatError("world.json: " + std::string(e.what()));
  }

  Dataset ds{wc, cc, seed, SyntheticWorld(wc, seed), {}, {}};
  for (const auto& s : specs) ds.tasks.push_back(TaskData{s, {}, {}});
  auto task_of = [&](const std::string& lang) -> TaskData& {
    for (auto& t : ds.tasks) {
      if (t.spec.source == lang) return t;
    }
    throw DataError("manifest language '" + lang + "' has no task");
  };

  std::ifstream manifest(dir / "manifest.tsv");
  if (!manifest) throw IoError("cannot read " + (dir / "manifest.tsv").string());
  std::string line;
  if (!std::getline(manifest, line) || line != kManifestHeader) {
    throw FormatError("manifest.tsv: missing header '" + std::string(kManifestHeader) + "'");
  }
  std::getline(manifest, line);
  std::size_t lineno = 2;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto f = split_tabs(line);
    if (f.size() != 6) {
      throw DataError("manifest.tsv:" + std::to_string(lineno) + ": expected 6 fields");
    }
    Utterance u;
    u.id = f[0];
    u.language = f[1];
    std::istringstream cs(f[2]);
    for (int c; cs >> c;) u.concepts.push_back(c);
    u.frames = static_cast<std::size_t>(std::stoull(f[3]));
    u.waveform = read_floats(dir / f[4]);
    if (u.waveform.size() / cc.down_factor != u.frames) {
      throw DataError("manifest.tsv:" + std::to_string(lineno) + ": frame count " + f[3] +
                      " disagrees with waveform length");
    }
    if (f[5] == "bkg") {
      ds.background.utterances.push_back(std::move(u));
    } else if (f[5] == "train") {
      task_of(u.language).train.utterances.push_back(std::move(u));
    } else if (f[5] == "eval") {
      task_of(u.language).eval.utterances.push_back(std::move(u));
    } else {
      throw DataError("manifest.tsv:" + std::to_string(lineno) + ": unknown split '" + f[5] + "'");
    }
  }
  return ds;
}

}  // namespace samukd
