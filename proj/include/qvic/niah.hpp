#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "qvic/compressor.hpp"
#include "qvic/pipeline.hpp"

namespace qvic {

/// Synthetic needle-in-a-haystack setup: `needles` planted frames in a
/// T-frame stream whose question alignment exceeds every distractor's by
/// `margin`.
struct NiahSpec {
  std::uint64_t frames = 240;
  std::size_t needles = 4;
  std::vector<FrameId> needle_positions;  // empty: seeded-random per trial
  double distractor_ceiling = 0.2;
  double margin = 1.0;
  std::size_t trials = 200;
  std::uint64_t seed = 0;
  std::size_t patches = 4;
  std::size_t text_len = 1;
  double question_scale = 8.0;

  void validate() const;
};

enum class Policy { RelevanceFeedback, UniformBudget, Fifo };

std::string_view to_string(Policy p);
Policy parse_policy(std::string_view text);

RetentionPolicy retention_for(Policy p, std::uint64_t total_frames, std::size_t capacity);

struct RunReport {
  std::string label;
  Policy policy = Policy::RelevanceFeedback;
  std::size_t trials = 0;
  std::size_t hits = 0;
  double hit_rate = 0.0;
  std::vector<bool> hit_bitmap;  // one per trial
  double needle_relevance = 0.0;      // mean score given to needle frames
  double distractor_relevance = 0.0;  // mean score given to other frames
  double median_clip_ms = 0.0;        // clips 2..N, pooled over trials
  double max_context_text_attention = 0.0;
  std::vector<std::string> warnings;
};

// Needle frame ids for one trial, ascending.
std::vector<FrameId> needle_positions_for_trial(const NiahSpec& spec, std::size_t trial);

SyntheticSpec synthetic_spec_for_trial(const NiahSpec& spec, std::size_t model_dim,
                                       std::size_t trial);

/// A trial hits when every needle frame is still in the final memory.
/// Trials run in parallel; trial t is seeded from (spec.seed, t), so the
/// report does not depend on scheduling.
RunReport run_niah(const NiahSpec& spec, const StreamConfig& config, Policy policy,
                   const CompressorWeights& weights);

// P(all k needles among the kept frames) when `kept` of `total` frames
// survive and needle positions are uniform: C(total-k, kept-k) / C(total, kept).
double hypergeometric_all_retained(std::uint64_t total, std::uint64_t kept, std::uint64_t needles);

/// Incremental ladder: vanilla causal compressor with a uniformly sampled
/// memory, then relevance memory, memory feedback, framewise mask M,
/// blocking B, guiding G.
enum class LadderStep { Vanilla, Memory, Feedback, Framewise, Blocking, Guiding };

std::string_view to_string(LadderStep s);
LadderStep parse_ladder_step(std::string_view text);
inline constexpr LadderStep kLadder[] = {LadderStep::Vanilla,   LadderStep::Memory,
                                         LadderStep::Feedback,  LadderStep::Framewise,
                                         LadderStep::Blocking,  LadderStep::Guiding};

StreamConfig ladder_config(const StreamConfig& base, LadderStep step);
Policy ladder_policy(LadderStep step);

RunReport run_ablation_step(const NiahSpec& spec, const StreamConfig& base, LadderStep step,
                            const CompressorWeights& weights);

std::vector<RunReport> run_ablation_ladder(const NiahSpec& spec, const StreamConfig& base,
                                           const CompressorWeights& weights);

}  // namespace qvic
