#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>

#include "qvic/numerics.hpp"

namespace qvic {

/// Seeded generator: std::mt19937_64 (stream fixed by the C++ standard) with
/// the distributions implemented here, so draws are bit-identical across
/// standard libraries. uniform() takes the top 53 bits; normal() is
/// Box-Muller.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  // [0, 1)
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

  Matrix gaussian(std::size_t rows, std::size_t cols, double stddev = 1.0);
  Matrix uniform_matrix(std::size_t rows, std::size_t cols, double lo, double hi);

 private:
  std::mt19937_64 engine_;
  std::optional<double> spare_normal_;
};

Rng seeded_rng(std::uint64_t seed);

// SplitMix64 finalizer over (master, index); used for per-trial and
// per-frame sub-streams.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

}  // namespace qvic
