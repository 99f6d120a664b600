#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "qvic/numerics.hpp"

namespace qvic {

using FrameId = std::uint64_t;  // global, 1-based

struct MemoryEntry {
  Matrix embedding;  // C x D context embedding
  double relevance = 0.0;
  FrameId frame_index = 0;
  std::uint64_t inserted_at = 0;  // assigned by the memory on append
};

enum class MutationAction { Append, Prune, Update, Recall };

std::string_view to_string(MutationAction a);

struct MutationRecord {
  std::uint64_t step = 0;  // clip index that caused the mutation
  MutationAction action = MutationAction::Append;
  FrameId frame_index = 0;
  double relevance = 0.0;
};

/// Chooses which entry leaves an over-full memory.
class RetentionPolicy {
 public:
  enum class Kind { MinRelevance, Fifo, UniformBudget };

  // Smallest relevance; ties go to the smallest (oldest) frame index.
  static RetentionPolicy min_relevance() { return RetentionPolicy(Kind::MinRelevance); }
  // Smallest frame index.
  static RetentionPolicy fifo() { return RetentionPolicy(Kind::Fifo); }
  /// Keeps the evenly spaced subset of `capacity` frames out of
  /// `total_frames`: frame floor((i + 0.5) * T / L) + 1 for i in [0, L).
  /// Overflow evicts the oldest entry outside that subset.
  static RetentionPolicy uniform_budget(std::uint64_t total_frames, std::size_t capacity);

  Kind kind() const { return kind_; }
  std::size_t choose_victim(std::span<const MemoryEntry> entries) const;
  const std::unordered_set<FrameId>& uniform_targets() const { return targets_; }

 private:
  explicit RetentionPolicy(Kind kind) : kind_(kind) {}

  Kind kind_;
  std::unordered_set<FrameId> targets_;
};

struct AppendReport {
  FrameId appended = 0;
  std::optional<MemoryEntry> pruned;  // may be the appended entry itself
};

struct UpdateReport {
  FrameId frame_index = 0;
  double old_relevance = 0.0;
  double new_relevance = 0.0;
};

/// Capacity-bounded bank of (context embedding, relevance, frame index)
/// triplets. Frame indices are unique and size() never exceeds capacity().
/// Single owner; not synchronized.
class ContextMemory {
 public:
  explicit ContextMemory(std::size_t capacity,
                         RetentionPolicy policy = RetentionPolicy::min_relevance());

  /// Appends, then evicts one entry chosen by the retention policy while
  /// over capacity. Throws ContractViolation for a frame index already held
  /// or a relevance outside [0, 1].
  AppendReport append(MemoryEntry entry);

  /// Replaces embedding and relevance of a held frame in place. Throws
  /// NotFoundError when the frame is absent.
  UpdateReport update_slot(FrameId frame_index, Matrix embedding, double relevance);

  /// min(k, size()) highest-relevance frames (ties: larger frame index
  /// wins), returned in ascending frame order.
  std::vector<FrameId> recall(std::size_t k) const;

  // Embeddings in ascending frame order.
  std::vector<Matrix> snapshot_for_decoder() const;

  std::size_t size() const { return entries_.size(); }
  std::size_t capacity() const { return capacity_; }
  bool empty() const { return entries_.empty(); }
  bool contains(FrameId frame_index) const;
  const MemoryEntry* find(FrameId frame_index) const;
  std::span<const MemoryEntry> entries() const { return entries_; }
  std::vector<FrameId> frame_indices() const;  // ascending
  const RetentionPolicy& policy() const { return policy_; }

 private:
  std::size_t capacity_;
  RetentionPolicy policy_;
  std::vector<MemoryEntry> entries_;  // insertion order
  std::uint64_t next_insert_ = 0;
};

}  // namespace qvic
