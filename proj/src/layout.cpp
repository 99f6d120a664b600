#include "qvic/layout.hpp"

#include <string>

#include "qvic/error.hpp"

namespace qvic {

TokenLayout::TokenLayout(const LayoutSpec& spec)
    : spec_(spec),
      text_begin_(spec.frames * spec.patches_per_frame),
      context_begin_(spec.frames * spec.patches_per_frame + spec.text_len) {
  if (spec.frames == 0 || spec.patches_per_frame == 0 || spec.context_per_frame == 0) {
    throw ConfigError("layout: frames, patches_per_frame and context_per_frame must be >= 1");
  }
}

void TokenLayout::check_frame(std::size_t frame) const {
  if (frame == 0 || frame > spec_.frames) {
    throw std::out_of_range("layout: frame " + std::to_string(frame) + " outside [1, " +
                            std::to_string(spec_.frames) + "]");
  }
}

IndexRange TokenLayout::visual(std::size_t frame) const {
  check_frame(frame);
  const std::size_t begin = (frame - 1) * spec_.patches_per_frame;
  return {begin, begin + spec_.patches_per_frame};
}

IndexRange TokenLayout::context(std::size_t frame) const {
  check_frame(frame);
  const std::size_t begin = context_begin_ + (frame - 1) * spec_.context_per_frame;
  return {begin, begin + spec_.context_per_frame};
}

IndexRange TokenLayout::text() const { return {text_begin_, context_begin_}; }

TokenLabel TokenLayout::label(std::size_t index) const {
  if (index >= size()) {
    throw std::out_of_range("layout: index " + std::to_string(index) + " >= " +
                            std::to_string(size()));
  }
  if (index < text_begin_) return {TokenKind::Visual, index / spec_.patches_per_frame + 1};
  if (index < context_begin_) return {TokenKind::Text, 0};
  return {TokenKind::Context, (index - context_begin_) / spec_.context_per_frame + 1};
}

std::optional<std::size_t> TokenLayout::frame_of(std::size_t index) const {
  const TokenLabel l = label(index);
  if (l.kind == TokenKind::Text) return std::nullopt;
  return l.frame;
}

std::vector<std::size_t> TokenLayout::index_set(const TokenLabel& label) const {
  IndexRange r;
  switch (label.kind) {
    case TokenKind::Visual: r = visual(label.frame); break;
    case TokenKind::Context: r = context(label.frame); break;
    case TokenKind::Text: r = text(); break;
  }
  std::vector<std::size_t> out;
  out.reserve(r.size());
  for (std::size_t i = r.begin; i < r.end; ++i) out.push_back(i);
  return out;
}

TokenLayout build_layout(const LayoutSpec& spec) { return TokenLayout(spec); }

}  // namespace qvic
