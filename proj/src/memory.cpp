#include "qvic/memory.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qvic/error.hpp"

namespace qvic {

std::string_view to_string(MutationAction a) {
  switch (a) {
    case MutationAction::Append: return "append";
    case MutationAction::Prune: return "prune";
    case MutationAction::Update: return "update";
    case MutationAction::Recall: return "recall";
  }
  return "unknown";
}

RetentionPolicy RetentionPolicy::uniform_budget(std::uint64_t total_frames, std::size_t capacity) {
  RetentionPolicy p(Kind::UniformBudget);
  if (capacity == 0) return p;
  if (total_frames <= capacity) {
    for (FrameId f = 1; f <= total_frames; ++f) p.targets_.insert(f);
    return p;
  }
  const double spacing = static_cast<double>(total_frames) / static_cast<double>(capacity);
  for (std::size_t i = 0; i < capacity; ++i) {
    p.targets_.insert(static_cast<FrameId>(std::floor((static_cast<double>(i) + 0.5) * spacing)) + 1);
  }
  return p;
}

std::size_t RetentionPolicy::choose_victim(std::span<const MemoryEntry> entries) const {
  if (entries.empty()) throw ContractViolation("retention: nothing to evict");
  std::size_t victim = entries.size();
  const auto older = [&](std::size_t a, std::size_t b) {
    return entries[a].frame_index < entries[b].frame_index;
  };
  for (std::size_t i = 0; i < entries.size(); ++i) {
    bool better = false;
    if (victim == entries.size()) {
      better = kind_ != Kind::UniformBudget || !targets_.contains(entries[i].frame_index);
    } else {
      switch (kind_) {
        case Kind::MinRelevance:
          better = entries[i].relevance < entries[victim].relevance ||
                   (entries[i].relevance == entries[victim].relevance && older(i, victim));
          break;
        case Kind::Fifo: better = older(i, victim); break;
        case Kind::UniformBudget:
          better = !targets_.contains(entries[i].frame_index) && older(i, victim);
          break;
      }
    }
    if (better) victim = i;
  }
  if (victim == entries.size()) {
    // More target frames held than the budget; fall back to the oldest.
    victim = 0;
    for (std::size_t i = 1; i < entries.size(); ++i) {
      if (older(i, victim)) victim = i;
    }
  }
  return victim;
}

ContextMemory::ContextMemory(std::size_t capacity, RetentionPolicy policy)
    : capacity_(capacity), policy_(std::move(policy)) {
  if (capacity_ == 0) throw ConfigError("memory: capacity must be >= 1");
}

bool ContextMemory::contains(FrameId frame_index) const { return find(frame_index) != nullptr; }

const MemoryEntry* ContextMemory::find(FrameId frame_index) const {
  for (const auto& e : entries_) {
    if (e.frame_index == frame_index) return &e;
  }
  return nullptr;
}

AppendReport ContextMemory::append(MemoryEntry entry) {
  if (contains(entry.frame_index)) {
    throw ContractViolation("memory: frame " + std::to_string(entry.frame_index) +
                            " is already held; use update_slot");
  }
  if (!(entry.relevance >= 0.0 && entry.relevance <= 1.0)) {
    throw ContractViolation("memory: relevance must lie in [0, 1]");
  }
  entry.inserted_at = next_insert_++;
  AppendReport report{entry.frame_index, std::nullopt};
  entries_.push_back(std::move(entry));
  if (entries_.size() > capacity_) {
    const std::size_t victim = policy_.choose_victim(entries_);
    report.pruned = std::move(entries_[victim]);
    entries_.erase(entries_.begin() + static_cast<std::ptrdiff_t>(victim));
  }
  return report;
}

UpdateReport ContextMemory::update_slot(FrameId frame_index, Matrix embedding, double relevance) {
  if (!(relevance >= 0.0 && relevance <= 1.0)) {
    throw ContractViolation("memory: relevance must lie in [0, 1]");
  }
  for (auto& e : entries_) {
    if (e.frame_index == frame_index) {
      UpdateReport r{frame_index, e.relevance, relevance};
      e.embedding = std::move(embedding);
      e.relevance = relevance;
      return r;
    }
  }
  throw NotFoundError("memory: frame " + std::to_string(frame_index) + " is not held");
}

std::vector<FrameId> ContextMemory::recall(std::size_t k) const {
  std::vector<const MemoryEntry*> ranked;
  ranked.reserve(entries_.size());
  for (const auto& e : entries_) ranked.push_back(&e);
  const std::size_t take = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(take), ranked.end(),
                    [](const MemoryEntry* a, const MemoryEntry* b) {
                      if (a->relevance != b->relevance) return a->relevance > b->relevance;
                      return a->frame_index > b->frame_index;
                    });
  std::vector<FrameId> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) out.push_back(ranked[i]->frame_index);
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<FrameId> ContextMemory::frame_indices() const {
  std::vector<FrameId> ids;
  ids.reserve(entries_.size());
  for (const auto& e : entries_) ids.push_back(e.frame_index);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::vector<Matrix> ContextMemory::snapshot_for_decoder() const {
  std::vector<const MemoryEntry*> ordered;
  ordered.reserve(entries_.size());
  for (const auto& e : entries_) ordered.push_back(&e);
  std::sort(ordered.begin(), ordered.end(), [](const MemoryEntry* a, const MemoryEntry* b) {
    return a->frame_index < b->frame_index;
  });
  std::vector<Matrix> out;
  out.reserve(ordered.size());
  for (const auto* e : ordered) out.push_back(e->embedding);
  return out;
}

}  // namespace qvic
