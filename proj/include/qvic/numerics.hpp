#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace qvic {

/// Dense row-major matrix of doubles.
///
/// Every public operation in this header leaves the stored values finite.
/// Masked attention entries are represented out-of-band by MaskPattern,
/// never by storing -inf.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }

  // Rows [first, first + count) as a new matrix.
  Matrix slice_rows(std::size_t first, std::size_t count) const;
  void set_rows(std::size_t first, const Matrix& block);
  // Columns [first, first + count) as a new matrix.
  Matrix slice_cols(std::size_t first, std::size_t count) const;
  void set_cols(std::size_t first, const Matrix& block);

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s);

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(Matrix a, double s);

Matrix transpose(const Matrix& a);

// Vertical concatenation.
Matrix vstack(std::span<const Matrix> blocks);

double max_abs_diff(const Matrix& a, const Matrix& b);
double frobenius_norm(const Matrix& a);
// Sum of elementwise products.
double dot(const Matrix& a, const Matrix& b);

/// Boolean attention pattern: allowed(i, j) means query i may attend key j.
class MaskPattern {
 public:
  MaskPattern() = default;
  MaskPattern(std::size_t rows, std::size_t cols, bool allowed);

  static MaskPattern causal(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  bool allowed(std::size_t i, std::size_t j) const { return bits_[i * cols_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool allowed) { bits_[i * cols_ + j] = allowed ? 1 : 0; }

  std::size_t count_allowed() const;
  std::size_t count_allowed_in_row(std::size_t i) const;

  MaskPattern& operator&=(const MaskPattern& other);
  friend MaskPattern operator&(MaskPattern a, const MaskPattern& b) { return a &= b; }
  friend bool operator==(const MaskPattern&, const MaskPattern&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<std::uint8_t> bits_;
};

// a · b, accumulated row-major with ascending inner index.
Matrix matmul(const Matrix& a, const Matrix& b);
// a · bᵀ without materializing the transpose.
Matrix matmul_transposed(const Matrix& a, const Matrix& b);
// aᵀ · b without materializing the transpose.
Matrix matmul_lhs_transposed(const Matrix& a, const Matrix& b);

/// Row-wise softmax restricted to the allowed entries of `mask`.
/// Disallowed entries come out exactly 0. Throws ContractViolation when a
/// row has no allowed entry.
Matrix masked_softmax(const Matrix& logits, const MaskPattern& mask);

// Given p = masked_softmax(z) and dL/dp, returns dL/dz. Entries where p is a
// disallowed zero receive exactly zero gradient.
Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs);

struct LayerNormCache {
  Matrix normalized;               // pre-affine rows, mean 0 / variance 1
  std::vector<double> inv_stddev;  // per row
};

/// Per-row normalization followed by `gain` / `bias` (both length cols).
Matrix layer_norm(const Matrix& x, std::span<const double> gain, std::span<const double> bias,
                  double eps, LayerNormCache* cache = nullptr);

struct LayerNormGradients {
  Matrix x;
  std::vector<double> gain;
  std::vector<double> bias;
};

LayerNormGradients layer_norm_backward(const LayerNormCache& cache, std::span<const double> gain,
                                       const Matrix& grad_out);

}  // namespace qvic
