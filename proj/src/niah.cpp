#include "qvic/niah.hpp"

#include <algorithm>
#include <string>

#include "qvic/error.hpp"
#include "qvic/kernels.hpp"
#include "qvic/rng.hpp"

namespace qvic {
namespace {

struct TrialOutcome {
  bool hit = false;
  double needle_sum = 0.0;
  std::size_t needle_count = 0;
  double distractor_sum = 0.0;
  std::size_t distractor_count = 0;
  std::vector<double> clip_ms;
  double context_text = 0.0;
};

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  if (v.size() % 2 == 1) return *mid;
  const double upper = *mid;
  const double lower = *std::max_element(v.begin(), mid);
  return 0.5 * (lower + upper);
}

}  // namespace

void NiahSpec::validate() const {
  if (frames == 0) throw ConfigError("niah: T must be >= 1");
  if (needle_positions.empty() && needles > frames) {
    throw ConfigError("niah: more needles than frames");
  }
  if (!(margin > 0.0)) throw ConfigError("niah: margin must be positive");
  if (trials == 0) throw ConfigError("niah: trials must be >= 1");
  if (text_len == 0) throw ConfigError("niah: the question needs at least one token");
  std::vector<FrameId> sorted = needle_positions;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("niah: needle positions must be distinct");
  }
  for (FrameId f : sorted) {
    if (f < 1 || f > frames) throw ConfigError("niah: needle position outside [1, T]");
  }
}

std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::RelevanceFeedback: return "relevance_feedback";
    case Policy::UniformBudget: return "uniform_budget";
    case Policy::Fifo: return "fifo";
  }
  return "unknown";
}

Policy parse_policy(std::string_view text) {
  if (text == "relevance_feedback") return Policy::RelevanceFeedback;
  if (text == "uniform_budget") return Policy::UniformBudget;
  if (text == "fifo") return Policy::Fifo;
  throw ConfigError("unknown policy '" + std::string(text) + "'");
}

RetentionPolicy retention_for(Policy p, std::uint64_t total_frames, std::size_t capacity) {
  switch (p) {
    case Policy::RelevanceFeedback: return RetentionPolicy::min_relevance();
    case Policy::UniformBudget: return RetentionPolicy::uniform_budget(total_frames, capacity);
    case Policy::Fifo: return RetentionPolicy::fifo();
  }
  throw ConfigError("unknown policy");
}

std::vector<FrameId> needle_positions_for_trial(const NiahSpec& spec, std::size_t trial) {
  std::vector<FrameId> out = spec.needle_positions;
  if (out.empty()) {
    // Partial Fisher-Yates over [1, T].
    Rng rng(derive_seed(spec.seed, 2 * trial));
    std::vector<FrameId> pool(spec.frames);
    for (FrameId f = 0; f < spec.frames; ++f) pool[f] = f + 1;
    for (std::size_t i = 0; i < spec.needles; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng.below(spec.frames - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

SyntheticSpec synthetic_spec_for_trial(const NiahSpec& spec, std::size_t model_dim,
                                       std::size_t trial) {
  SyntheticSpec s;
  s.frames = spec.frames;
  s.patches = spec.patches;
  s.model_dim = model_dim;
  s.text_len = spec.text_len;
  s.needles = needle_positions_for_trial(spec, trial);
  s.distractor_ceiling = spec.distractor_ceiling;
  s.margin = spec.margin;
  s.question_scale = spec.question_scale;
  s.seed = derive_seed(spec.seed, 2 * trial + 1);
  return s;
}

RunReport run_niah(const NiahSpec& spec, const StreamConfig& config, Policy policy,
                   const CompressorWeights& weights) {
  spec.validate();
  config.validate();
  RunReport report;
  report.label = std::string(to_string(policy));
  report.policy = policy;
  report.trials = spec.trials;
  const std::size_t needle_count =
      spec.needle_positions.empty() ? spec.needles : spec.needle_positions.size();
  if (config.capacity < needle_count) {
    report.warnings.push_back("memory capacity " + std::to_string(config.capacity) +
                              " is below the needle count " + std::to_string(needle_count) +
                              "; every trial misses");
  }

  std::vector<TrialOutcome> outcomes(spec.trials);
  kernels::parallel_for(spec.trials, [&](std::size_t t) {
    const SyntheticEmbedder embedder(synthetic_spec_for_trial(spec, config.compressor.model_dim, t));
    const StreamResult result =
        run_stream(embedder, config, weights, retention_for(policy, spec.frames, config.capacity));
    TrialOutcome& o = outcomes[t];
    o.hit = std::all_of(embedder.spec().needles.begin(), embedder.spec().needles.end(),
                        [&](FrameId f) { return result.memory.contains(f); });
    for (const auto& trace : result.traces) {
      for (std::size_t i = 0; i < trace.current.size(); ++i) {
        if (embedder.is_needle(trace.current[i])) {
          o.needle_sum += trace.relevance[i];
          ++o.needle_count;
        } else {
          o.distractor_sum += trace.relevance[i];
          ++o.distractor_count;
        }
      }
      if (trace.clip_index > 1) o.clip_ms.push_back(trace.wall_ms);
      o.context_text = std::max(o.context_text, trace.max_context_text_attention);
    }
  });

  double needle_sum = 0.0, distractor_sum = 0.0;
  std::size_t needles_seen = 0, distractors_seen = 0;
  std::vector<double> clip_ms;
  for (const auto& o : outcomes) {
    report.hit_bitmap.push_back(o.hit);
    report.hits += o.hit ? 1 : 0;
    needle_sum += o.needle_sum;
    needles_seen += o.needle_count;
    distractor_sum += o.distractor_sum;
    distractors_seen += o.distractor_count;
    clip_ms.insert(clip_ms.end(), o.clip_ms.begin(), o.clip_ms.end());
    report.max_context_text_attention = std::max(report.max_context_text_attention, o.context_text);
  }
  report.hit_rate = static_cast<double>(report.hits) / static_cast<double>(spec.trials);
  report.needle_relevance = needles_seen ? needle_sum / static_cast<double>(needles_seen) : 0.0;
  report.distractor_relevance =
      distractors_seen ? distractor_sum / static_cast<double>(distractors_seen) : 0.0;
  report.median_clip_ms = median(std::move(clip_ms));
  return report;
}

double hypergeometric_all_retained(std::uint64_t total, std::uint64_t kept, std::uint64_t needles) {
  if (needles > total) return 0.0;
  if (kept >= total) return 1.0;
  double p = 1.0;
  for (std::uint64_t i = 0; i < needles; ++i) {
    if (kept < i + 1) return 0.0;
    p *= static_cast<double>(kept - i) / static_cast<double>(total - i);
  }
  return p;
}

std::string_view to_string(LadderStep s) {
  switch (s) {
    case LadderStep::Vanilla: return "vanilla";
    case LadderStep::Memory: return "+memory";
    case LadderStep::Feedback: return "+feedback";
    case LadderStep::Framewise: return "+M";
    case LadderStep::Blocking: return "+B";
    case LadderStep::Guiding: return "+G";
  }
  return "unknown";
}

LadderStep parse_ladder_step(std::string_view text) {
  for (LadderStep s : kLadder) {
    if (text == to_string(s)) return s;
  }
  if (text == "memory") return LadderStep::Memory;
  if (text == "feedback") return LadderStep::Feedback;
  if (text == "M") return LadderStep::Framewise;
  if (text == "B") return LadderStep::Blocking;
  if (text == "G") return LadderStep::Guiding;
  throw ConfigError("unknown ladder step '" + std::string(text) + "'");
}

StreamConfig ladder_config(const StreamConfig& base, LadderStep step) {
  StreamConfig c = base;
  const std::size_t recall = base.recall_frames > 0 ? base.recall_frames : base.clip_frames;
  c.compressor.guide_on = false;
  switch (step) {
    case LadderStep::Vanilla:
    case LadderStep::Memory:
      c.recall_frames = 0;
      c.compressor.variant = MaskVariant::MultiCausal;
      break;
    case LadderStep::Feedback:
      c.recall_frames = recall;
      c.compressor.variant = MaskVariant::MultiCausal;
      break;
    case LadderStep::Framewise:
      c.recall_frames = recall;
      c.compressor.variant = MaskVariant::Framewise;
      break;
    case LadderStep::Blocking:
      c.recall_frames = recall;
      c.compressor.variant = MaskVariant::FramewiseBlocked;
      break;
    case LadderStep::Guiding:
      c.recall_frames = recall;
      c.compressor.variant = MaskVariant::Full;
      c.compressor.guide_on = true;
      break;
  }
  return c;
}

Policy ladder_policy(LadderStep step) {
  return step == LadderStep::Vanilla ? Policy::UniformBudget : Policy::RelevanceFeedback;
}

RunReport run_ablation_step(const NiahSpec& spec, const StreamConfig& base, LadderStep step,
                            const CompressorWeights& weights) {
  RunReport r = run_niah(spec, ladder_config(base, step), ladder_policy(step), weights);
  r.label = std::string(to_string(step));
  return r;
}

std::vector<RunReport> run_ablation_ladder(const NiahSpec& spec, const StreamConfig& base,
                                           const CompressorWeights& weights) {
  std::vector<RunReport> reports;
  for (LadderStep s : kLadder) reports.push_back(run_ablation_step(spec, base, s, weights));
  return reports;
}

}  // namespace qvic
