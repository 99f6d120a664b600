#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace qvic {

/// Central finite differences against the analytic backward passes. The
/// loss is sum(W ⊙ y) for a seeded random W. Errors are per tensor,
/// ‖analytic − numeric‖ / max(‖analytic‖, ‖numeric‖, 1e-12).
struct GradCheckOptions {
  std::size_t instances = 20;
  std::uint64_t seed = 0;
  double step = 1e-5;
};

struct TensorCheck {
  std::string name;
  std::size_t entries = 0;
  double rel_error = 0.0;
};

struct GradCheckResult {
  std::string label;
  std::vector<TensorCheck> tensors;
  double max_rel_error = 0.0;
};

// Random small layouts (N_enc <= 16, D = 8, 2 heads) over every mask
// variant, guide on and off, with a query/key offset.
GradCheckResult check_attention_gradients(std::uint64_t seed, double step);

// Two-layer compressor with positional vectors; input and every parameter.
GradCheckResult check_compressor_gradients(std::uint64_t seed, double step);

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options);

}  // namespace qvic
