#include "qvic/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "qvic/error.hpp"
#include "qvic/kernels.hpp"

namespace qvic {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows_ * cols_) {
    throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                     std::to_string(rows_) + "x" + std::to_string(cols_));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Matrix Matrix::slice_rows(std::size_t first, std::size_t count) const {
  if (first + count > rows_) throw ShapeError("slice_rows: range out of bounds");
  Matrix out(count, cols_);
  std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(first * cols_), count * cols_,
              out.data_.begin());
  return out;
}

void Matrix::set_rows(std::size_t first, const Matrix& block) {
  if (block.cols_ != cols_ || first + block.rows_ > rows_) {
    throw ShapeError("set_rows: block does not fit");
  }
  std::copy(block.data_.begin(), block.data_.end(),
            data_.begin() + static_cast<std::ptrdiff_t>(first * cols_));
}

Matrix Matrix::slice_cols(std::size_t first, std::size_t count) const {
  if (first + count > cols_) throw ShapeError("slice_cols: range out of bounds");
  Matrix out(rows_, count);
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < count; ++c) out(r, c) = (*this)(r, first + c);
  }
  return out;
}

void Matrix::set_cols(std::size_t first, const Matrix& block) {
  if (block.rows_ != rows_ || first + block.cols_ > cols_) {
    throw ShapeError("set_cols: block does not fit");
  }
  for (std::size_t r = 0; r < rows_; ++r) {
    for (std::size_t c = 0; c < block.cols_; ++c) (*this)(r, first + c) = block(r, c);
  }
}

Matrix& Matrix::operator+=(const Matrix& other) {
  if (other.rows_ != rows_ || other.cols_ != cols_) throw ShapeError("operator+=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

Matrix& Matrix::operator-=(const Matrix& other) {
  if (other.rows_ != rows_ || other.cols_ != cols_) throw ShapeError("operator-=: shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

Matrix& Matrix::operator*=(double s) {
  for (auto& v : data_) v *= s;
  return *this;
}

Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
Matrix operator*(Matrix a, double s) { return a *= s; }

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  }
  return out;
}

Matrix vstack(std::span<const Matrix> blocks) {
  std::size_t rows = 0;
  const std::size_t cols = blocks.empty() ? 0 : blocks.front().cols();
  for (const auto& b : blocks) {
    if (b.cols() != cols) throw ShapeError("vstack: column counts differ");
    rows += b.rows();
  }
  Matrix out(rows, cols);
  std::size_t at = 0;
  for (const auto& b : blocks) {
    out.set_rows(at, b);
    at += b.rows();
  }
  return out;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("max_abs_diff: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    worst = std::max(worst, std::abs(a.values()[i] - b.values()[i]));
  }
  return worst;
}

double frobenius_norm(const Matrix& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

double dot(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a.values()[i] * b.values()[i];
  return s;
}

MaskPattern::MaskPattern(std::size_t rows, std::size_t cols, bool allowed)
    : rows_(rows), cols_(cols), bits_(rows * cols, allowed ? 1 : 0) {}

MaskPattern MaskPattern::causal(std::size_t n) {
  MaskPattern m(n, n, false);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j <= i; ++j) m.set(i, j, true);
  }
  return m;
}

std::size_t MaskPattern::count_allowed() const {
  return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::size_t MaskPattern::count_allowed_in_row(std::size_t i) const {
  const auto first = bits_.begin() + static_cast<std::ptrdiff_t>(i * cols_);
  return static_cast<std::size_t>(
      std::count(first, first + static_cast<std::ptrdiff_t>(cols_), std::uint8_t{1}));
}

MaskPattern& MaskPattern::operator&=(const MaskPattern& other) {
  if (other.rows_ != rows_ || other.cols_ != cols_) throw ShapeError("MaskPattern: shape mismatch");
  for (std::size_t i = 0; i < bits_.size(); ++i) bits_[i] &= other.bits_[i];
  return *this;
}

Matrix matmul(const Matrix& a, const Matrix& b) { return kernels::parallel::matmul(a, b); }

Matrix matmul_transposed(const Matrix& a, const Matrix& b) {
  return kernels::parallel::matmul_transposed(a, b);
}

Matrix matmul_lhs_transposed(const Matrix& a, const Matrix& b) {
  return kernels::parallel::matmul_lhs_transposed(a, b);
}

Matrix masked_softmax(const Matrix& logits, const MaskPattern& mask) {
  return kernels::parallel::masked_softmax(logits, mask);
}

Matrix softmax_backward(const Matrix& probs, const Matrix& grad_probs) {
  if (probs.rows() != grad_probs.rows() || probs.cols() != grad_probs.cols()) {
    throw ShapeError("softmax_backward: shape mismatch");
  }
  Matrix out(probs.rows(), probs.cols());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    double inner = 0.0;
    for (std::size_t j = 0; j < probs.cols(); ++j) inner += probs(i, j) * grad_probs(i, j);
    for (std::size_t j = 0; j < probs.cols(); ++j) {
      out(i, j) = probs(i, j) * (grad_probs(i, j) - inner);
    }
  }
  return out;
}

Matrix layer_norm(const Matrix& x, std::span<const double> gain, std::span<const double> bias,
                  double eps, LayerNormCache* cache) {
  if (gain.size() != x.cols() || bias.size() != x.cols()) {
    throw ShapeError("layer_norm: gain/bias length must equal column count");
  }
  if (!(eps > 0.0)) throw ShapeError("layer_norm: eps must be positive");
  const auto n = static_cast<double>(x.cols());
  Matrix normalized(x.rows(), x.cols());
  std::vector<double> inv_stddev(x.rows());
  Matrix out(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    const auto row = x.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= n;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_stddev[r] = inv;
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double z = (row[c] - mean) * inv;
      normalized(r, c) = z;
      out(r, c) = z * gain[c] + bias[c];
    }
  }
  if (cache != nullptr) {
    cache->normalized = std::move(normalized);
    cache->inv_stddev = std::move(inv_stddev);
  }
  return out;
}

LayerNormGradients layer_norm_backward(const LayerNormCache& cache, std::span<const double> gain,
                                       const Matrix& grad_out) {
  const Matrix& z = cache.normalized;
  if (grad_out.rows() != z.rows() || grad_out.cols() != z.cols() || gain.size() != z.cols()) {
    throw ShapeError("layer_norm_backward: shape mismatch");
  }
  const auto n = static_cast<double>(z.cols());
  LayerNormGradients g{Matrix(z.rows(), z.cols()), std::vector<double>(z.cols(), 0.0),
                       std::vector<double>(z.cols(), 0.0)};
  std::vector<double> dz(z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    double mean_dz = 0.0;
    double mean_dz_z = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) {
      g.gain[c] += grad_out(r, c) * z(r, c);
      g.bias[c] += grad_out(r, c);
      dz[c] = grad_out(r, c) * gain[c];
      mean_dz += dz[c];
      mean_dz_z += dz[c] * z(r, c);
    }
    mean_dz /= n;
    mean_dz_z /= n;
    for (std::size_t c = 0; c < z.cols(); ++c) {
      g.x(r, c) = cache.inv_stddev[r] * (dz[c] - mean_dz - z(r, c) * mean_dz_z);
    }
  }
  return g;
}

}  // namespace qvic
