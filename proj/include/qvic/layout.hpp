#pragma once

#include <cstddef>
#include <optional>
#include <vector>

namespace qvic {

/// Shape of one encoder input: `frames` frames of `patches_per_frame` visual
/// tokens and `context_per_frame` context slots, plus `text_len` question
/// tokens.
struct LayoutSpec {
  std::size_t frames = 1;
  std::size_t patches_per_frame = 1;
  std::size_t context_per_frame = 1;
  std::size_t text_len = 1;

  std::size_t total_len() const {
    return frames * (patches_per_frame + context_per_frame) + text_len;
  }
  friend bool operator==(const LayoutSpec&, const LayoutSpec&) = default;
};

enum class TokenKind { Visual, Text, Context };

struct TokenLabel {
  TokenKind kind;
  std::size_t frame;  // 1-based; 0 for text
  friend bool operator==(const TokenLabel&, const TokenLabel&) = default;
};

// Half-open [begin, end).
struct IndexRange {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::size_t size() const { return end - begin; }
  bool contains(std::size_t i) const { return i >= begin && i < end; }
};

/// Token positions of an encoder input. Ordering: every frame's visual
/// tokens (frame-major, patch-ascending), then the text tokens, then every
/// frame's context tokens (frame-major, slot-ascending).
class TokenLayout {
 public:
  explicit TokenLayout(const LayoutSpec& spec);

  const LayoutSpec& spec() const { return spec_; }
  std::size_t size() const { return spec_.total_len(); }
  std::size_t frames() const { return spec_.frames; }

  // The index sets are contiguous; frame ids are 1-based.
  IndexRange visual(std::size_t frame) const;
  IndexRange context(std::size_t frame) const;
  IndexRange text() const;
  IndexRange all_visual() const { return {0, text_begin_}; }
  IndexRange all_context() const { return {context_begin_, size()}; }

  TokenLabel label(std::size_t index) const;
  // Frame id of a visual/context position, nullopt for text.
  std::optional<std::size_t> frame_of(std::size_t index) const;

  // Sorted members of I_x for the given label.
  std::vector<std::size_t> index_set(const TokenLabel& label) const;

 private:
  void check_frame(std::size_t frame) const;

  LayoutSpec spec_;
  std::size_t text_begin_;
  std::size_t context_begin_;
};

/// Throws ConfigError when frames, patches or context are zero.
TokenLayout build_layout(const LayoutSpec& spec);

}  // namespace qvic
