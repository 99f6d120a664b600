#include "qvic/settings.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <string>

#include "qvic/embedding_io.hpp"
#include "qvic/error.hpp"

namespace qvic {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::vector<std::string_view> split_list(std::string_view s) {
  std::vector<std::string_view> parts;
  while (true) {
    const auto comma = s.find(',');
    const auto part = trim(s.substr(0, comma));
    if (!part.empty()) parts.push_back(part);
    if (comma == std::string_view::npos) break;
    s.remove_prefix(comma + 1);
  }
  return parts;
}

std::uint64_t parse_u64(std::string_view v) {
  v = trim(v);
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("expected a non-negative integer, got '" + std::string(v) + "'");
  }
  return out;
}

std::size_t parse_count(std::string_view v) { return static_cast<std::size_t>(parse_u64(v)); }

double parse_double(std::string_view v) {
  v = trim(v);
  double out = 0.0;
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("expected a number, got '" + std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view v) {
  v = trim(v);
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("expected a boolean, got '" + std::string(v) + "'");
}

#define QVIC_KEY(name, help, body) \
  SettingKey { name, help, [](Settings& s, std::string_view v) { body; } }

const SettingKey kKeys[] = {
    QVIC_KEY("K", "current frames per clip", s.clip_frames = parse_count(v)),
    QVIC_KEY("Kr", "recalled frames per clip", s.recall_frames = parse_count(v)),
    QVIC_KEY("L", "context memory capacity", s.capacity = parse_count(v)),
    QVIC_KEY("min_frames", "smallest accepted stream length", s.min_frames = parse_count(v)),
    QVIC_KEY("enforce_min_frames", "reject streams shorter than min_frames",
             s.enforce_min_frames = parse_bool(v)),
    QVIC_KEY("update_recalled", "re-encoded recalled frames overwrite their memory slot",
             s.update_recalled = parse_bool(v)),
    QVIC_KEY("analytic", "one-layer identity compressor", s.analytic = parse_bool(v)),
    QVIC_KEY("layers", "compressor layers", s.layers = parse_count(v)),
    QVIC_KEY("heads", "attention heads", s.heads = parse_count(v)),
    QVIC_KEY("model_dim", "embedding width", s.model_dim = parse_count(v)),
    QVIC_KEY("ff_dim", "feed-forward width", s.ff_dim = parse_count(v)),
    QVIC_KEY("context", "context tokens per frame", s.context_per_frame = parse_count(v)),
    QVIC_KEY("top_heads", "heads averaged per layer for relevance", s.top_heads = parse_count(v)),
    QVIC_KEY("layer_first", "first relevance layer (1-based)", s.layer_first = parse_count(v)),
    QVIC_KEY("layer_last", "last relevance layer (1-based)", s.layer_last = parse_count(v)),
    QVIC_KEY("variant", "mask variant: a..e or its name", s.variant = parse_mask_variant(trim(v))),
    QVIC_KEY("guide", "add the guide bias (variant e only)", s.guide_on = parse_bool(v)),
    QVIC_KEY("scale_denominator", "head_dim or model_dim",
             s.scale_denominator = parse_scale_denominator(trim(v))),
    QVIC_KEY("positional", "learned position vectors on query/key input",
             s.positional = parse_bool(v)),
    QVIC_KEY("max_frames", "frame position slots", s.max_frames = parse_count(v)),
    QVIC_KEY("seed", "master seed", s.seed = parse_u64(v)),
    QVIC_KEY("frames", "synthetic stream length T", s.frames = parse_u64(v)),
    QVIC_KEY("patches", "synthetic patches per frame", s.patches = parse_count(v)),
    QVIC_KEY("text", "question tokens", s.text_len = parse_count(v)),
    QVIC_KEY("needles", "random needles per trial", s.needles = parse_count(v)),
    QVIC_KEY("needle_positions", "fixed needle frame ids, comma separated", {
      s.needle_positions.clear();
      for (auto part : split_list(v)) s.needle_positions.push_back(parse_u64(part));
    }),
    QVIC_KEY("margin", "needle alignment above the distractor ceiling", s.margin = parse_double(v)),
    QVIC_KEY("distractor_ceiling", "largest distractor alignment",
             s.distractor_ceiling = parse_double(v)),
    QVIC_KEY("question_scale", "norm of each question row", s.question_scale = parse_double(v)),
    QVIC_KEY("trials", "NIAH trials", s.trials = parse_count(v)),
    QVIC_KEY("policy", "retention policies, comma separated", {
      s.policies.clear();
      for (auto part : split_list(v)) s.policies.push_back(parse_policy(part));
      if (s.policies.empty()) throw ConfigError("policy: empty list");
    }),
    QVIC_KEY("steps", "ablation steps, comma separated", {
      s.steps.clear();
      for (auto part : split_list(v)) s.steps.push_back(parse_ladder_step(part));
    }),
    QVIC_KEY("mask_frames", "frames in the layout dumped by masks", s.mask_frames = parse_count(v)),
    QVIC_KEY("weights", "QVWT weight file", s.weights = std::string(trim(v))),
    QVIC_KEY("embeddings", "QVEM frame embeddings", s.embeddings = std::string(trim(v))),
    QVIC_KEY("question", "QVTQ question embeddings", s.question = std::string(trim(v))),
    QVIC_KEY("trace_out", "per-clip trace CSV", s.trace_out = std::string(trim(v))),
    QVIC_KEY("mutations_out", "memory mutation log CSV", s.mutations_out = std::string(trim(v))),
    QVIC_KEY("report_out", "run report CSV", s.report_out = std::string(trim(v))),
    QVIC_KEY("decoder_out", "decoder input dump", s.decoder_out = std::string(trim(v))),
    QVIC_KEY("mask_dir", "directory for mask CSV files", s.mask_dir = std::string(trim(v))),
};

#undef QVIC_KEY

}  // namespace

std::span<const SettingKey> setting_keys() { return kKeys; }

void apply_setting(Settings& s, std::string_view key, std::string_view value) {
  const auto it = std::find_if(std::begin(kKeys), std::end(kKeys),
                               [&](const SettingKey& k) { return k.name == key; });
  if (it == std::end(kKeys)) throw ConfigError("unknown setting '" + std::string(key) + "'");
  try {
    it->apply(s, value);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string(key) + ": " + e.what());
  }
}

void apply_config(Settings& s, std::istream& in) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string_view view(line);
    if (const auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = trim(view);
    if (view.empty()) continue;
    const auto eq = view.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    }
    try {
      apply_setting(s, trim(view.substr(0, eq)), trim(view.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("config line " + std::to_string(number) + ": " + e.what());
    }
  }
}

void apply_config_file(Settings& s, const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  apply_config(s, in);
}

CompressorConfig Settings::compressor_config() const {
  CompressorConfig c;
  if (analytic) {
    c = CompressorConfig::analytic(model_dim, context_per_frame, patches);
  } else {
    c.layers = layers;
    c.heads = heads;
    c.model_dim = model_dim;
    c.ff_dim = ff_dim;
    c.context_per_frame = context_per_frame;
    c.relevance = {top_heads, layer_first, layer_last};
    c.positional = positional;
    c.patches_per_frame = patches;
    c.max_frames = max_frames;
  }
  c.variant = variant;
  c.guide_on = guide_on;
  c.scale_denominator = scale_denominator;
  c.seed = seed;
  return c;
}

StreamConfig Settings::stream_config() const {
  StreamConfig c;
  c.clip_frames = clip_frames;
  c.recall_frames = recall_frames;
  c.capacity = capacity;
  c.min_frames = min_frames;
  c.enforce_min_frames = enforce_min_frames;
  c.update_recalled = update_recalled;
  c.compressor = compressor_config();
  return c;
}

NiahSpec Settings::niah_spec() const {
  NiahSpec n;
  n.frames = frames;
  n.needles = needles;
  n.needle_positions = needle_positions;
  n.distractor_ceiling = distractor_ceiling;
  n.margin = margin;
  n.trials = trials;
  n.seed = seed;
  n.patches = patches;
  n.text_len = text_len;
  n.question_scale = question_scale;
  return n;
}

SyntheticSpec Settings::synthetic_spec() const {
  SyntheticSpec s;
  s.frames = frames;
  s.patches = patches;
  s.model_dim = model_dim;
  s.text_len = text_len;
  s.needles = needle_positions;
  s.distractor_ceiling = distractor_ceiling;
  s.margin = margin;
  s.question_scale = question_scale;
  s.seed = seed;
  return s;
}

CompressorWeights Settings::load_weights(const CompressorConfig& config) const {
  if (!weights.empty()) return read_qvwt_file(weights, config);
  return analytic ? CompressorWeights::analytic(config) : CompressorWeights::init(config);
}

}  // namespace qvic
