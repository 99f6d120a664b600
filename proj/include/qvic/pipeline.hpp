#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "qvic/compressor.hpp"
#include "qvic/embedding_io.hpp"
#include "qvic/memory.hpp"
#include "qvic/numerics.hpp"
#include "qvic/rng.hpp"

namespace qvic {

// Inclusive range of global frame ids.
struct ClipRange {
  FrameId first = 1;
  FrameId last = 1;
  std::size_t size() const { return static_cast<std::size_t>(last - first + 1); }
  friend bool operator==(const ClipRange&, const ClipRange&) = default;
};

// ceil(T / K) consecutive clips covering [1, T]; the last may be short.
std::vector<ClipRange> plan_clips(std::uint64_t total_frames, std::size_t clip_frames);

/// Source of patch embeddings for frames and of the question rows. Stands in
/// for the pretrained visual encoder and projector. Must be deterministic:
/// asking twice for the same frame yields the same matrix.
class Embedder {
 public:
  virtual ~Embedder() = default;
  virtual std::uint64_t frame_count() const = 0;
  virtual std::size_t patches_per_frame() const = 0;
  virtual std::size_t model_dim() const = 0;
  virtual Matrix frame(FrameId id) const = 0;  // P x D
  virtual Matrix question() const = 0;         // N_t x D
};

struct SyntheticSpec {
  std::uint64_t frames = 240;
  std::size_t patches = 4;
  std::size_t model_dim = 16;
  std::size_t text_len = 1;
  std::vector<FrameId> needles;
  // Distractor patches are unit vectors whose alignment with the question
  // direction is at most `distractor_ceiling`; needle patches are the
  // question direction scaled by distractor_ceiling + margin.
  double distractor_ceiling = 0.2;
  double margin = 1.0;
  double question_scale = 8.0;  // norm of every question row
  std::uint64_t seed = 0;
};

class SyntheticEmbedder final : public Embedder {
 public:
  explicit SyntheticEmbedder(SyntheticSpec spec);

  std::uint64_t frame_count() const override { return spec_.frames; }
  std::size_t patches_per_frame() const override { return spec_.patches; }
  std::size_t model_dim() const override { return spec_.model_dim; }
  Matrix frame(FrameId id) const override;
  Matrix question() const override;

  const SyntheticSpec& spec() const { return spec_; }
  bool is_needle(FrameId id) const;
  const std::vector<double>& direction() const { return direction_; }

 private:
  SyntheticSpec spec_;
  std::vector<double> direction_;  // unit question direction
};

class FileEmbedder final : public Embedder {
 public:
  FileEmbedder(FrameEmbeddings frames, Matrix question);
  static FileEmbedder load(const std::filesystem::path& embeddings,
                           const std::filesystem::path& question);

  std::uint64_t frame_count() const override { return frames_.frames.size(); }
  std::size_t patches_per_frame() const override { return frames_.patches; }
  std::size_t model_dim() const override { return frames_.model_dim; }
  Matrix frame(FrameId id) const override;
  Matrix question() const override { return question_; }

 private:
  FrameEmbeddings frames_;
  Matrix question_;
};

struct StreamConfig {
  std::size_t clip_frames = 32;    // K
  std::size_t recall_frames = 32;  // K_r
  std::size_t capacity = 256;      // L
  std::size_t min_frames = 64;
  bool enforce_min_frames = true;
  // Re-encoded recalled frames overwrite their memory slot.
  bool update_recalled = false;
  CompressorConfig compressor;

  void validate() const;
};

struct ClipTrace {
  std::size_t clip_index = 0;  // 1-based
  std::vector<FrameId> current;
  std::vector<FrameId> recalled;  // ascending
  std::vector<double> relevance;  // current frames first, then recalled
  std::vector<MutationRecord> mutations;
  std::size_t encoder_tokens = 0;
  double max_context_text_attention = 0.0;
  double wall_ms = 0.0;
};

struct StreamResult {
  ContextMemory memory;
  std::vector<ClipTrace> traces;

  std::vector<MutationRecord> mutation_log() const;
};

/// Clip-by-clip loop: recall from the memory left by the previous clip,
/// embed current then recalled frames, compress, score, and append the
/// current frames' context embeddings.
StreamResult run_stream(const Embedder& embedder, const StreamConfig& config,
                        const CompressorWeights& weights,
                        RetentionPolicy policy = RetentionPolicy::min_relevance());

// Upper bound on the per-clip encoder length: (K + K_r)(P + C) + N_t.
std::size_t max_encoder_tokens(const StreamConfig& config, std::size_t patches,
                               std::size_t text_len);

/// Question rows followed by the memory's context embeddings in ascending
/// frame order.
Matrix assemble_decoder_input(const ContextMemory& memory, const Matrix& question);

}  // namespace qvic
