#include "qvic/kernels.hpp"

#include <omp.h>

#include <cmath>
#include <limits>
#include <string>

#include "qvic/error.hpp"

namespace qvic::kernels {
namespace {

void check_matmul(const Matrix& a, const Matrix& b, std::size_t a_inner, std::size_t b_inner,
                  const char* what) {
  if (a_inner != b_inner) {
    throw ShapeError(std::string(what) + ": inner dimensions differ (" + std::to_string(a.rows()) +
                     "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

// out.row(i) = a.row(i) · b, ascending k.
inline void matmul_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  auto dst = out.row(i);
  const auto src = a.row(i);
  for (std::size_t k = 0; k < a.cols(); ++k) {
    const double aik = src[k];
    const auto brow = b.row(k);
    for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aik * brow[j];
  }
}

// out(i, j) = <a.row(i), b.row(j)>, ascending k.
inline void matmul_transposed_row(const Matrix& a, const Matrix& b, Matrix& out, std::size_t i) {
  const auto arow = a.row(i);
  for (std::size_t j = 0; j < b.rows(); ++j) {
    const auto brow = b.row(j);
    double acc = 0.0;
    for (std::size_t k = 0; k < a.cols(); ++k) acc += arow[k] * brow[k];
    out(i, j) = acc;
  }
}

// out.row(i) = sum_k a(k, i) * b.row(k), ascending k.
inline void matmul_lhs_transposed_row(const Matrix& a, const Matrix& b, Matrix& out,
                                      std::size_t i) {
  auto dst = out.row(i);
  for (std::size_t k = 0; k < a.rows(); ++k) {
    const double aki = a(k, i);
    const auto brow = b.row(k);
    for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aki * brow[j];
  }
}

inline void softmax_row(const Matrix& logits, const MaskPattern& mask, Matrix& out,
                        std::size_t i) {
  double peak = -std::numeric_limits<double>::infinity();
  bool any = false;
  for (std::size_t j = 0; j < logits.cols(); ++j) {
    if (mask.allowed(i, j)) {
      any = true;
      if (logits(i, j) > peak) peak = logits(i, j);
    }
  }
  if (!any) throw ContractViolation("masked_softmax: row " + std::to_string(i) + " is fully masked");
  double total = 0.0;
  for (std::size_t j = 0; j < logits.cols(); ++j) {
    if (mask.allowed(i, j)) {
      const double e = std::exp(logits(i, j) - peak);
      out(i, j) = e;
      total += e;
    }
  }
  const double inv = 1.0 / total;
  for (std::size_t j = 0; j < logits.cols(); ++j) {
    if (mask.allowed(i, j)) out(i, j) *= inv;
  }
}

void check_softmax(const Matrix& logits, const MaskPattern& mask) {
  if (logits.rows() != mask.rows() || logits.cols() != mask.cols()) {
    throw ShapeError("masked_softmax: logits and mask shapes differ");
  }
}

template <class RowFn>
void for_rows(std::size_t rows, std::size_t work, RowFn&& fn) {
  if (work < kParallelWorkThreshold || rows < 2) {
    for (std::size_t i = 0; i < rows; ++i) fn(i);
    return;
  }
  parallel_for(rows, fn);
}

}  // namespace

int max_threads() { return omp_get_max_threads(); }

namespace serial {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_matmul(a, b, a.cols(), b.rows(), "matmul");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_row(a, b, out, i);
  return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  check_matmul(a, b, a.cols(), b.cols(), "matmul_transposed");
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) matmul_transposed_row(a, b, out, i);
  return out;
}

Matrix matmul_lhs_transposed(const Matrix& a, const Matrix& b) {
  check_matmul(a, b, a.rows(), b.rows(), "matmul_lhs_transposed");
  Matrix out(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i) matmul_lhs_transposed_row(a, b, out, i);
  return out;
}

Matrix masked_softmax(const Matrix& logits, const MaskPattern& mask) {
  check_softmax(logits, mask);
  Matrix out(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) softmax_row(logits, mask, out, i);
  return out;
}

}  // namespace serial

namespace parallel {

Matrix matmul(const Matrix& a, const Matrix& b) {
  check_matmul(a, b, a.cols(), b.rows(), "matmul");
  Matrix out(a.rows(), b.cols());
  for_rows(a.rows(), a.rows() * a.cols() * b.cols(),
           [&](std::size_t i) { matmul_row(a, b, out, i); });
  return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  check_matmul(a, b, a.cols(), b.cols(), "matmul_transposed");
  Matrix out(a.rows(), b.rows());
  for_rows(a.rows(), a.rows() * a.cols() * b.rows(),
           [&](std::size_t i) { matmul_transposed_row(a, b, out, i); });
  return out;
}

Matrix matmul_lhs_transposed(const Matrix& a, const Matrix& b) {
  check_matmul(a, b, a.rows(), b.rows(), "matmul_lhs_transposed");
  Matrix out(a.cols(), b.cols());
  for_rows(a.cols(), a.rows() * a.cols() * b.cols(),
           [&](std::size_t i) { matmul_lhs_transposed_row(a, b, out, i); });
  return out;
}

Matrix masked_softmax(const Matrix& logits, const MaskPattern& mask) {
  check_softmax(logits, mask);
  Matrix out(logits.rows(), logits.cols());
  for_rows(logits.rows(), logits.size() * 8,
           [&](std::size_t i) { softmax_row(logits, mask, out, i); });
  return out;
}

}  // namespace parallel
}  // namespace qvic::kernels
