#include "qvic/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>

#include "qvic/error.hpp"

namespace qvic {
namespace {

std::vector<double> unit_direction(std::size_t dim, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0xD1EC7104ull));
  std::vector<double> u(dim);
  double norm = 0.0;
  while (norm < 1e-6) {
    norm = 0.0;
    for (auto& v : u) {
      v = rng.normal();
      norm += v * v;
    }
    norm = std::sqrt(norm);
  }
  for (auto& v : u) v /= norm;
  return u;
}

double context_text_peak(const EncoderOutput& out) {
  const IndexRange ctx = out.layout.all_context();
  const IndexRange txt = out.layout.text();
  double peak = 0.0;
  for (const auto& layer : out.traces) {
    for (const auto& attn : layer) {
      for (std::size_t i = ctx.begin; i < ctx.end; ++i) {
        for (std::size_t j = txt.begin; j < txt.end; ++j) peak = std::max(peak, attn(i, j));
      }
    }
  }
  return peak;
}

}  // namespace

std::vector<ClipRange> plan_clips(std::uint64_t total_frames, std::size_t clip_frames) {
  if (total_frames == 0) throw ConfigError("plan_clips: need at least one frame");
  if (clip_frames == 0) throw ConfigError("plan_clips: clip length must be >= 1");
  std::vector<ClipRange> clips;
  for (FrameId first = 1; first <= total_frames; first += clip_frames) {
    clips.push_back({first, std::min<FrameId>(first + clip_frames - 1, total_frames)});
  }
  return clips;
}

SyntheticEmbedder::SyntheticEmbedder(SyntheticSpec spec)
    : spec_(std::move(spec)), direction_(unit_direction(spec_.model_dim, spec_.seed)) {
  if (spec_.frames == 0 || spec_.patches == 0 || spec_.model_dim < 2) {
    throw ConfigError("synthetic embedder: need frames, patches >= 1 and model_dim >= 2");
  }
  if (!(spec_.margin > 0.0)) throw ConfigError("synthetic embedder: margin must be positive");
  if (!(spec_.distractor_ceiling < 1.0)) {
    throw ConfigError("synthetic embedder: distractor ceiling must be below 1");
  }
  std::sort(spec_.needles.begin(), spec_.needles.end());
  if (std::adjacent_find(spec_.needles.begin(), spec_.needles.end()) != spec_.needles.end()) {
    throw ConfigError("synthetic embedder: needle positions must be distinct");
  }
  for (FrameId n : spec_.needles) {
    if (n < 1 || n > spec_.frames) throw ConfigError("synthetic embedder: needle outside [1, T]");
  }
}

bool SyntheticEmbedder::is_needle(FrameId id) const {
  return std::binary_search(spec_.needles.begin(), spec_.needles.end(), id);
}

Matrix SyntheticEmbedder::frame(FrameId id) const {
  if (id < 1 || id > spec_.frames) throw DataError("synthetic embedder: frame id out of range");
  const std::size_t d = spec_.model_dim;
  Matrix patches(spec_.patches, d);
  if (is_needle(id)) {
    const double scale = spec_.distractor_ceiling + spec_.margin;
    for (std::size_t p = 0; p < spec_.patches; ++p) {
      for (std::size_t c = 0; c < d; ++c) patches(p, c) = scale * direction_[c];
    }
    return patches;
  }
  Rng rng(derive_seed(spec_.seed, id));
  std::vector<double> w(d);
  for (std::size_t p = 0; p < spec_.patches; ++p) {
    // Random unit vector; its component along the question direction is
    // clipped to the ceiling, the orthogonal remainder keeps unit norm.
    double align = 0.0;
    double ortho_norm = 0.0;
    while (ortho_norm < 1e-9) {
      double norm = 0.0;
      for (auto& v : w) {
        v = rng.normal();
        norm += v * v;
      }
      norm = std::sqrt(norm);
      align = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        w[c] /= norm;
        align += w[c] * direction_[c];
      }
      ortho_norm = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        w[c] -= align * direction_[c];
        ortho_norm += w[c] * w[c];
      }
      ortho_norm = std::sqrt(ortho_norm);
    }
    const double clipped = std::min(align, spec_.distractor_ceiling);
    const double ortho_scale = std::sqrt(std::max(0.0, 1.0 - clipped * clipped)) / ortho_norm;
    for (std::size_t c = 0; c < d; ++c) {
      patches(p, c) = clipped * direction_[c] + ortho_scale * w[c];
    }
  }
  return patches;
}

Matrix SyntheticEmbedder::question() const {
  Matrix q(spec_.text_len, spec_.model_dim);
  for (std::size_t r = 0; r < spec_.text_len; ++r) {
    for (std::size_t c = 0; c < spec_.model_dim; ++c) q(r, c) = spec_.question_scale * direction_[c];
  }
  return q;
}

FileEmbedder::FileEmbedder(FrameEmbeddings frames, Matrix question)
    : frames_(std::move(frames)), question_(std::move(question)) {
  if (frames_.frames.empty()) throw DataError("embeddings: no frames");
  if (question_.cols() != frames_.model_dim) {
    throw DataError("embeddings: question width " + std::to_string(question_.cols()) +
                    " differs from frame width " + std::to_string(frames_.model_dim));
  }
}

FileEmbedder FileEmbedder::load(const std::filesystem::path& embeddings,
                                const std::filesystem::path& question) {
  return FileEmbedder(read_qvem_file(embeddings), read_qvtq_file(question));
}

Matrix FileEmbedder::frame(FrameId id) const {
  if (id < 1 || id > frames_.frames.size()) throw DataError("embeddings: frame id out of range");
  return frames_.frames[id - 1];
}

void StreamConfig::validate() const {
  if (clip_frames < 1) throw ConfigError("stream: K must be >= 1");
  if (capacity < clip_frames) {
    throw ConfigError("stream: capacity L (" + std::to_string(capacity) + ") must be >= K (" +
                      std::to_string(clip_frames) + ")");
  }
  compressor.validate();
  compressor.validate_relevance();
  if (compressor.positional && clip_frames + recall_frames > compressor.max_frames) {
    throw ConfigError("stream: K + K_r exceeds the compressor's max_frames");
  }
}

std::vector<MutationRecord> StreamResult::mutation_log() const {
  std::vector<MutationRecord> log;
  for (const auto& t : traces) log.insert(log.end(), t.mutations.begin(), t.mutations.end());
  return log;
}

std::size_t max_encoder_tokens(const StreamConfig& config, std::size_t patches,
                               std::size_t text_len) {
  return (config.clip_frames + config.recall_frames) *
             (patches + config.compressor.context_per_frame) +
         text_len;
}

StreamResult run_stream(const Embedder& embedder, const StreamConfig& config,
                        const CompressorWeights& weights, RetentionPolicy policy) {
  config.validate();
  weights.check(config.compressor);
  const std::uint64_t total = embedder.frame_count();
  if (config.enforce_min_frames && total < config.min_frames) {
    throw ConfigError("stream: " + std::to_string(total) + " frames is below min_frames " +
                      std::to_string(config.min_frames));
  }
  if (embedder.model_dim() != config.compressor.model_dim) {
    throw ConfigError("stream: embedder width " + std::to_string(embedder.model_dim()) +
                      " differs from compressor model_dim " +
                      std::to_string(config.compressor.model_dim));
  }
  if (config.compressor.positional &&
      embedder.patches_per_frame() != config.compressor.patches_per_frame) {
    throw ConfigError("stream: embedder patch count differs from the compressor's positional table");
  }
  const Matrix question = embedder.question();
  if (question.rows() == 0) throw ConfigError("stream: the question needs at least one token");

  StreamResult result{ContextMemory(config.capacity, std::move(policy)), {}};
  ContextMemory& memory = result.memory;
  const auto clips = plan_clips(total, config.clip_frames);
  for (std::size_t n = 0; n < clips.size(); ++n) {
    const auto started = std::chrono::steady_clock::now();
    ClipTrace trace;
    trace.clip_index = n + 1;
    for (FrameId f = clips[n].first; f <= clips[n].last; ++f) trace.current.push_back(f);
    if (config.recall_frames > 0) trace.recalled = memory.recall(config.recall_frames);
    for (FrameId f : trace.recalled) {
      trace.mutations.push_back({trace.clip_index, MutationAction::Recall, f, memory.find(f)->relevance});
    }

    std::vector<Matrix> frames;
    frames.reserve(trace.current.size() + trace.recalled.size());
    for (FrameId f : trace.current) frames.push_back(embedder.frame(f));
    for (FrameId f : trace.recalled) frames.push_back(embedder.frame(f));

    const AssembledInput input = assemble_input(frames, question, weights.context_seed);
    const EncoderOutput out = encode(input.embeddings, input.layout, config.compressor, weights);
    trace.relevance = compute_relevance(out.traces, input.layout, config.compressor.relevance);
    trace.encoder_tokens = input.layout.size();
    trace.max_context_text_attention = context_text_peak(out);
    std::vector<Matrix> contexts = extract_context(out);

    if (config.update_recalled) {
      for (std::size_t r = 0; r < trace.recalled.size(); ++r) {
        const std::size_t slot = trace.current.size() + r;
        const UpdateReport u =
            memory.update_slot(trace.recalled[r], std::move(contexts[slot]), trace.relevance[slot]);
        trace.mutations.push_back({trace.clip_index, MutationAction::Update, u.frame_index, u.new_relevance});
      }
    }
    for (std::size_t i = 0; i < trace.current.size(); ++i) {
      MemoryEntry entry{std::move(contexts[i]), trace.relevance[i], trace.current[i], 0};
      const AppendReport a = memory.append(std::move(entry));
      trace.mutations.push_back({trace.clip_index, MutationAction::Append, a.appended, trace.relevance[i]});
      if (a.pruned) {
        trace.mutations.push_back(
            {trace.clip_index, MutationAction::Prune, a.pruned->frame_index, a.pruned->relevance});
      }
    }
    trace.wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    result.traces.push_back(std::move(trace));
  }
  return result;
}

Matrix assemble_decoder_input(const ContextMemory& memory, const Matrix& question) {
  std::vector<Matrix> blocks;
  blocks.push_back(question);
  for (auto& m : memory.snapshot_for_decoder()) {
    if (m.cols() != question.cols()) throw ShapeError("decoder input: embedding widths differ");
    blocks.push_back(std::move(m));
  }
  return vstack(blocks);
}

}  // namespace qvic
