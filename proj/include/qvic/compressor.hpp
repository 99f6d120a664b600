#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "qvic/layout.hpp"
#include "qvic/numerics.hpp"
#include "qvic/qmsa.hpp"

namespace qvic {

/// Which attention traces feed the per-frame relevance score: the top
/// `top_heads` heads of every layer in [layer_first, layer_last] (1-based,
/// inclusive).
struct RelevanceConfig {
  std::size_t top_heads = 2;
  std::size_t layer_first = 3;
  std::size_t layer_last = 4;
};

struct CompressorConfig {
  std::size_t layers = 4;
  std::size_t heads = 4;
  std::size_t model_dim = 32;
  std::size_t ff_dim = 64;
  std::size_t context_per_frame = 2;
  RelevanceConfig relevance;
  MaskVariant variant = MaskVariant::Full;
  bool guide_on = true;
  ScaleDenominator scale_denominator = ScaleDenominator::HeadDim;

  // Learned additive position vectors (visual slot, context slot, frame
  // slot), added to the query/key input of every attention sublayer.
  bool positional = true;
  std::size_t patches_per_frame = 4;
  std::size_t max_frames = 64;

  double layer_norm_eps = 1e-5;
  std::uint64_t seed = 0;

  AttentionHeadConfig attention() const { return {model_dim, heads, scale_denominator}; }

  // Stack shape. Relevance settings are checked separately.
  void validate() const;
  void validate_relevance() const;

  /// One layer, one head, identity projections, no feed-forward and no
  /// positional vectors: relevance then ranks frames by the dot product of
  /// their patches with the question rows.
  static CompressorConfig analytic(std::size_t model_dim, std::size_t context_per_frame,
                                   std::size_t patches_per_frame);
};

struct LayerWeights {
  AttentionWeights attention;
  std::vector<double> ln1_gain, ln1_bias;
  Matrix ff_in;  // model_dim x ff_dim
  std::vector<double> ff_in_bias;
  Matrix ff_out;  // ff_dim x model_dim
  std::vector<double> ff_out_bias;
  std::vector<double> ln2_gain, ln2_bias;
};

/// Also used as the gradient container of encode_backward.
struct CompressorWeights {
  Matrix context_seed;      // C x D, the template tiled once per frame
  Matrix visual_position;   // P x D
  Matrix context_position;  // C x D
  Matrix frame_position;    // max_frames x D
  std::vector<LayerWeights> layers;

  /// Seeded Gaussian entries scaled by 1/sqrt(model_dim); layer norms start
  /// at gain 1, bias 0.
  static CompressorWeights init(const CompressorConfig& config);
  static CompressorWeights analytic(const CompressorConfig& config);
  static CompressorWeights zeros_like(const CompressorWeights& other);

  void check(const CompressorConfig& config) const;
};

// Visits every parameter tensor in a fixed order.
void for_each_parameter(CompressorWeights& w,
                        const std::function<void(std::string_view, std::span<double>)>& fn);

struct AssembledInput {
  Matrix embeddings;  // N_enc x D
  TokenLayout layout;
};

/// Concatenates frame patches, question rows and `context_seed` tiled once
/// per frame. Every frame must have the same patch count.
AssembledInput assemble_input(std::span<const Matrix> frames, const Matrix& question,
                              const Matrix& context_seed);

struct EncoderOutput {
  Matrix hidden;  // row i is the updated token at input position i
  TokenLayout layout;
  std::vector<std::vector<Matrix>> traces;  // [layer][head], N_enc x N_enc
};

struct EncoderLayerCache {
  Matrix input;
  AttentionCache attention;
  LayerNormCache ln1;
  Matrix after_ln1;
  Matrix ff_pre;  // before the nonlinearity
  Matrix ff_act;
  LayerNormCache ln2;
};

struct EncoderCache {
  std::vector<EncoderLayerCache> layers;
  Matrix positions;  // qk offset, empty when positional is off
  std::vector<std::size_t> frame_slots;
  bool filled = false;
};

/// Additive position rows for `layout`. Frame k uses frame slot
/// frame_slots[k-1] (default k-1). Text rows stay zero.
Matrix position_offsets(const TokenLayout& layout, const CompressorConfig& config,
                        const CompressorWeights& weights,
                        std::span<const std::size_t> frame_slots = {});

/// The layer stack: post-norm attention and feed-forward sublayers. The
/// feed-forward nonlinearity is SiLU, x * sigmoid(x). A zero-layer stack is
/// the identity.
EncoderOutput encode(const Matrix& input, const TokenLayout& layout,
                     const CompressorConfig& config, const CompressorWeights& weights,
                     EncoderCache* cache = nullptr, std::span<const std::size_t> frame_slots = {});

struct EncoderGradients {
  Matrix input;
  CompressorWeights params;  // context_seed stays zero: encode never sees it
};

EncoderGradients encode_backward(const EncoderCache& cache, const Matrix& grad_hidden,
                                 const TokenLayout& layout, const CompressorConfig& config,
                                 const CompressorWeights& weights);

/// Per-frame relevance in [0, 1]: for each layer in range and each head,
/// the attention mass a text row places on the frame's visual tokens,
/// averaged over text rows; the top `top_heads` of those head values are
/// averaged per layer, then layers are averaged.
std::vector<double> compute_relevance(const std::vector<std::vector<Matrix>>& traces,
                                      const TokenLayout& layout, const RelevanceConfig& config);

// Frame-major slices of the context rows, each C x D.
std::vector<Matrix> extract_context(const EncoderOutput& out);

}  // namespace qvic
