#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "qvic/layout.hpp"
#include "qvic/numerics.hpp"
#include "qvic/rng.hpp"

namespace qvic {

/// Masking ladder, weakest to strongest.
enum class MaskVariant {
  SingleFrame,       // (a) each frame an isolated causal block, text isolated
  MultiCausal,       // (b) plain causal
  Framewise,         // (c) framewise context-to-visual mask M
  FramewiseBlocked,  // (d) M and context-to-text block B
  Full,              // (e) M, B and the guide bias G
};

std::string_view to_string(MaskVariant v);
// Accepts the panel letter ("a".."e") or the name printed by to_string.
MaskVariant parse_mask_variant(std::string_view text);

inline bool blocks_context_to_text(MaskVariant v) { return v >= MaskVariant::FramewiseBlocked; }
inline bool applies_guide(MaskVariant v, bool guide_on) {
  return guide_on && v == MaskVariant::Full;
}

// Disallows (i, j) iff j > i, or i is a context token of frame k and j is a
// visual token of another frame or a context token of an earlier frame.
MaskPattern build_mask_M(const TokenLayout& layout);

// Disallows exactly the context-row / text-column pairs.
MaskPattern build_block_B(const TokenLayout& layout);

/// G(i, j) = g_j on context(k) x visual(k) for every frame k and 0
/// elsewhere, with g_j the mean of logits(m, j) over the text rows m.
/// Throws ContractViolation for a layout without text.
Matrix build_guide_G(const TokenLayout& layout, const Matrix& logits);

MaskPattern build_variant(const TokenLayout& layout, MaskVariant variant);

enum class ScaleDenominator { HeadDim, ModelDim };

std::string_view to_string(ScaleDenominator s);
ScaleDenominator parse_scale_denominator(std::string_view text);

struct AttentionHeadConfig {
  std::size_t model_dim = 32;
  std::size_t heads = 4;
  ScaleDenominator scale_denominator = ScaleDenominator::HeadDim;

  std::size_t head_dim() const { return model_dim / heads; }
  // Logit scale 1/sqrt(head_dim) or 1/sqrt(model_dim).
  double scale() const;
  void validate() const;
};

struct AttentionWeights {
  std::vector<Matrix> query;  // per head, model_dim x head_dim
  std::vector<Matrix> key;
  std::vector<Matrix> value;
  Matrix output;              // model_dim x model_dim

  // Gaussian entries with standard deviation 1/sqrt(model_dim).
  static AttentionWeights random(const AttentionHeadConfig& config, Rng& rng);
  // Head h projects onto columns [h*head_dim, (h+1)*head_dim) of the
  // identity, and the output projection is the identity.
  static AttentionWeights identity(const AttentionHeadConfig& config);

  void check(const AttentionHeadConfig& config) const;
};

/// Intermediates kept by the forward pass for qmsa_backward.
struct AttentionCache {
  Matrix input;
  Matrix qk_input;  // input plus the optional query/key offset
  MaskPattern pattern;
  bool guided = false;
  std::vector<Matrix> query;
  std::vector<Matrix> key;
  std::vector<Matrix> value;
  std::vector<Matrix> attention;
  Matrix concat;
  bool filled = false;
};

struct AttentionOutput {
  Matrix y;
  std::vector<Matrix> attention;  // per head, N x N, row-stochastic
};

/// Multi-head attention whose logits are scale*QKᵀ (+ G when guided),
/// normalized over the pattern of `variant`.
///
/// `qk_offset`, when given, is added to the input of the query and key
/// projections only (positional vectors); values read the raw input.
AttentionOutput qmsa_attention(const Matrix& x, const AttentionWeights& weights,
                               const AttentionHeadConfig& config, const TokenLayout& layout,
                               MaskVariant variant, bool guide_on,
                               AttentionCache* cache = nullptr,
                               const Matrix* qk_offset = nullptr);

struct AttentionGradients {
  Matrix x;         // total, through query, key and value
  Matrix qk_input;  // through query and key only; equals the qk_offset gradient
  std::vector<Matrix> query;
  std::vector<Matrix> key;
  std::vector<Matrix> value;
  Matrix output;
  std::vector<Matrix> logits;  // dL/dS per head, including the guide path
};

AttentionGradients qmsa_backward(const AttentionCache& cache, const Matrix& grad_y,
                                 const AttentionWeights& weights,
                                 const AttentionHeadConfig& config, const TokenLayout& layout);

}  // namespace qvic
