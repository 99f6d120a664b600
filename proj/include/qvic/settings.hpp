#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qvic/compressor.hpp"
#include "qvic/niah.hpp"
#include "qvic/pipeline.hpp"

namespace qvic {

/// Every tunable of the command-line tool. A config file and the flags
/// share one key table; see setting_keys().
struct Settings {
  // stream
  std::size_t clip_frames = 32;
  std::size_t recall_frames = 32;
  std::size_t capacity = 256;
  std::size_t min_frames = 64;
  bool enforce_min_frames = true;
  bool update_recalled = false;

  // compressor
  bool analytic = true;
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t model_dim = 16;
  std::size_t ff_dim = 64;
  std::size_t context_per_frame = 2;
  std::size_t top_heads = 2;
  std::size_t layer_first = 3;
  std::size_t layer_last = 4;
  MaskVariant variant = MaskVariant::Full;
  bool guide_on = true;
  ScaleDenominator scale_denominator = ScaleDenominator::HeadDim;
  bool positional = true;
  std::size_t max_frames = 64;
  std::uint64_t seed = 0;

  // synthetic stream and NIAH
  std::uint64_t frames = 240;
  std::size_t patches = 4;
  std::size_t text_len = 1;
  std::size_t needles = 4;
  std::vector<FrameId> needle_positions;
  double margin = 1.0;
  double distractor_ceiling = 0.2;
  double question_scale = 8.0;
  std::size_t trials = 200;
  std::vector<Policy> policies{Policy::RelevanceFeedback};
  std::vector<LadderStep> steps;  // empty: the whole ladder
  std::size_t mask_frames = 2;    // K_v of the layout dumped by `masks`

  // files
  std::filesystem::path weights;
  std::filesystem::path embeddings;
  std::filesystem::path question;
  std::filesystem::path trace_out;
  std::filesystem::path mutations_out;
  std::filesystem::path report_out;
  std::filesystem::path decoder_out;
  std::filesystem::path mask_dir;

  CompressorConfig compressor_config() const;
  StreamConfig stream_config() const;
  NiahSpec niah_spec() const;
  SyntheticSpec synthetic_spec() const;
  // From `weights` when set, else analytic or seeded initialization.
  CompressorWeights load_weights(const CompressorConfig& config) const;
};

struct SettingKey {
  std::string_view name;
  std::string_view help;
  void (*apply)(Settings&, std::string_view);
};

std::span<const SettingKey> setting_keys();

// Throws ConfigError for an unknown key or a malformed value.
void apply_setting(Settings& s, std::string_view key, std::string_view value);

/// Flat `key = value` lines; '#' starts a comment, blank lines are skipped.
/// Errors carry the 1-based line number.
void apply_config(Settings& s, std::istream& in);
void apply_config_file(Settings& s, const std::filesystem::path& path);

}  // namespace qvic
