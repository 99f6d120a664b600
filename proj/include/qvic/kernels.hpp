#pragma once

#include <cstddef>
#include <exception>
#include <mutex>

#include "qvic/numerics.hpp"

// Inner-loop kernels in two builds: `serial` is the reference kept for tests
// and benchmarks, `parallel` splits independent output rows across OpenMP
// threads. Each output element is accumulated in the same order by both, so
// their results are bit-identical.
namespace qvic::kernels {

namespace serial {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_transposed(const Matrix& a, const Matrix& b);
Matrix matmul_lhs_transposed(const Matrix& a, const Matrix& b);
Matrix masked_softmax(const Matrix& logits, const MaskPattern& mask);
}  // namespace serial

namespace parallel {
Matrix matmul(const Matrix& a, const Matrix& b);
Matrix matmul_transposed(const Matrix& a, const Matrix& b);
Matrix matmul_lhs_transposed(const Matrix& a, const Matrix& b);
Matrix masked_softmax(const Matrix& logits, const MaskPattern& mask);
}  // namespace parallel

// Below this many multiply-adds the parallel kernels run on one thread.
inline constexpr std::size_t kParallelWorkThreshold = 1u << 15;

int max_threads();

/// Runs fn(i) for i in [0, n) across OpenMP threads. The first exception
/// thrown by any iteration is rethrown on the calling thread.
template <class Fn>
void parallel_for(std::size_t n, Fn&& fn) {
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < count; ++i) {
    try {
      fn(static_cast<std::size_t>(i));
    } catch (...) {
      std::lock_guard lock(error_mutex);
      if (!error) error = std::current_exception();
    }
  }
  if (error) std::rethrow_exception(error);
}

}  // namespace qvic::kernels
