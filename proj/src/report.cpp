#include "qvic/report.hpp"

#include <algorithm>
#include <iomanip>
#include <ostream>
#include <sstream>

namespace qvic {
namespace {

std::string join_ids(std::span<const FrameId> ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ';';
    s += std::to_string(ids[i]);
  }
  return s;
}

std::string join_values(std::span<const double> values) {
  std::ostringstream s;
  s << std::setprecision(10);
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s << ';';
    s << values[i];
  }
  return s.str();
}

}  // namespace

void write_trace_csv(std::ostream& out, std::span<const ClipTrace> traces) {
  out << "clip,first_frame,last_frame,recalled,relevance,n_enc,appended,pruned,updated,wall_ms\n";
  for (const auto& t : traces) {
    std::size_t appended = 0, pruned = 0, updated = 0;
    for (const auto& m : t.mutations) {
      appended += m.action == MutationAction::Append;
      pruned += m.action == MutationAction::Prune;
      updated += m.action == MutationAction::Update;
    }
    const FrameId first = t.current.empty() ? 0 : t.current.front();
    const FrameId last = t.current.empty() ? 0 : t.current.back();
    out << t.clip_index << ',' << first << ',' << last << ',' << join_ids(t.recalled) << ','
        << join_values(t.relevance) << ',' << t.encoder_tokens << ',' << appended << ','
        << pruned << ',' << updated << ',' << t.wall_ms << '\n';
  }
}

void write_mutation_csv(std::ostream& out, std::span<const MutationRecord> log) {
  out << "step,action,frame_index,relevance\n";
  out << std::setprecision(10);
  for (const auto& m : log) {
    out << m.step << ',' << to_string(m.action) << ',' << m.frame_index << ',' << m.relevance << '\n';
  }
}

void write_report_csv(std::ostream& out, std::span<const RunReport> reports) {
  out << "label,policy,trials,hits,hit_rate,needle_relevance,distractor_relevance,"
         "median_clip_ms,max_context_text_attention,hit_bitmap\n";
  out << std::setprecision(8);
  for (const auto& r : reports) {
    std::string bitmap;
    bitmap.reserve(r.hit_bitmap.size());
    for (bool b : r.hit_bitmap) bitmap += b ? '1' : '0';
    out << r.label << ',' << to_string(r.policy) << ',' << r.trials << ',' << r.hits << ','
        << r.hit_rate << ',' << r.needle_relevance << ',' << r.distractor_relevance << ','
        << r.median_clip_ms << ',' << r.max_context_text_attention << ',' << bitmap << '\n';
  }
}

std::string layout_legend(const TokenLayout& layout) {
  std::string s(layout.size(), '?');
  for (std::size_t i = 0; i < layout.size(); ++i) {
    switch (layout.label(i).kind) {
      case TokenKind::Visual: s[i] = 'v'; break;
      case TokenKind::Text: s[i] = 't'; break;
      case TokenKind::Context: s[i] = 'c'; break;
    }
  }
  return s;
}

std::string mask_ascii(const MaskPattern& mask, const TokenLayout& layout) {
  const std::string legend = layout_legend(layout);
  std::string s = "  " + legend + '\n';
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    s += legend[i];
    s += ' ';
    for (std::size_t j = 0; j < mask.cols(); ++j) s += mask.allowed(i, j) ? '#' : '.';
    s += '\n';
  }
  return s;
}

void write_mask_csv(std::ostream& out, const MaskPattern& mask) {
  for (std::size_t i = 0; i < mask.rows(); ++i) {
    for (std::size_t j = 0; j < mask.cols(); ++j) {
      if (j) out << ',';
      out << (mask.allowed(i, j) ? 1 : 0);
    }
    out << '\n';
  }
}

void write_matrix_csv(std::ostream& out, const Matrix& m) {
  out << std::setprecision(17);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      out << m(i, j);
    }
    out << '\n';
  }
}

void write_decoder_dump(std::ostream& out, const ContextMemory& memory, const Matrix& decoder_input) {
  out << "# frames " << join_ids(memory.frame_indices()) << '\n';
  out << "# rows " << decoder_input.rows() << " cols " << decoder_input.cols() << '\n';
  write_matrix_csv(out, decoder_input);
}

}  // namespace qvic
