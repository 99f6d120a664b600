#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "qvic/layout.hpp"
#include "qvic/memory.hpp"
#include "qvic/niah.hpp"
#include "qvic/numerics.hpp"
#include "qvic/pipeline.hpp"

namespace qvic {

// One row per clip. Frame id lists are ';'-separated.
void write_trace_csv(std::ostream& out, std::span<const ClipTrace> traces);
void write_mutation_csv(std::ostream& out, std::span<const MutationRecord> log);
// One row per report; the hit bitmap is a string of '0'/'1'.
void write_report_csv(std::ostream& out, std::span<const RunReport> reports);

// '#' allowed, '.' disallowed; first line is the column legend.
std::string mask_ascii(const MaskPattern& mask, const TokenLayout& layout);
void write_mask_csv(std::ostream& out, const MaskPattern& mask);
void write_matrix_csv(std::ostream& out, const Matrix& m);

// Single character per token: 'v' visual, 't' text, 'c' context.
std::string layout_legend(const TokenLayout& layout);

void write_decoder_dump(std::ostream& out, const ContextMemory& memory, const Matrix& decoder_input);

}  // namespace qvic
