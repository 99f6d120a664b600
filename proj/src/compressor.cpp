#include "qvic/compressor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>

#include "qvic/error.hpp"
#include "qvic/rng.hpp"

namespace qvic {
namespace {

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
double silu(double x) { return x * sigmoid(x); }
double silu_grad(double x) {
  const double s = sigmoid(x);
  return s * (1.0 + x * (1.0 - s));
}

void add_row_bias(Matrix& m, std::span<const double> bias) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    auto row = m.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) row[c] += bias[c];
  }
}

std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> out(m.cols(), 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += m(r, c);
  }
  return out;
}

void check_vector(const std::vector<double>& v, std::size_t n, const char* what) {
  if (v.size() != n) throw ShapeError(std::string("compressor weights: ") + what + " has wrong length");
}

void check_shape(const Matrix& m, std::size_t r, std::size_t c, const char* what) {
  if (m.rows() != r || m.cols() != c) {
    throw ShapeError(std::string("compressor weights: ") + what + " has wrong shape");
  }
}

std::vector<std::size_t> resolve_slots(const TokenLayout& layout,
                                       std::span<const std::size_t> frame_slots) {
  std::vector<std::size_t> slots;
  if (frame_slots.empty()) {
    for (std::size_t k = 0; k < layout.frames(); ++k) slots.push_back(k);
  } else {
    if (frame_slots.size() != layout.frames()) {
      throw ShapeError("encode: frame_slots must have one entry per frame");
    }
    slots.assign(frame_slots.begin(), frame_slots.end());
  }
  return slots;
}

}  // namespace

void CompressorConfig::validate() const {
  attention().validate();
  if (ff_dim == 0) throw ConfigError("compressor: ff_dim must be >= 1");
  if (context_per_frame == 0) throw ConfigError("compressor: context_per_frame must be >= 1");
  if (patches_per_frame == 0) throw ConfigError("compressor: patches_per_frame must be >= 1");
  if (max_frames == 0) throw ConfigError("compressor: max_frames must be >= 1");
  if (!(layer_norm_eps > 0.0)) throw ConfigError("compressor: layer_norm_eps must be positive");
}

void CompressorConfig::validate_relevance() const {
  const auto& r = relevance;
  if (r.layer_first < 1 || r.layer_first > r.layer_last || r.layer_last > layers) {
    throw ConfigError("relevance: need 1 <= L1 <= L2 <= layers (got [" +
                      std::to_string(r.layer_first) + ", " + std::to_string(r.layer_last) +
                      "] with " + std::to_string(layers) + " layers)");
  }
  if (r.top_heads < 1 || r.top_heads > heads) {
    throw ConfigError("relevance: need 1 <= K_h <= heads (got " + std::to_string(r.top_heads) +
                      " with " + std::to_string(heads) + " heads)");
  }
}

CompressorConfig CompressorConfig::analytic(std::size_t model_dim, std::size_t context_per_frame,
                                            std::size_t patches_per_frame) {
  CompressorConfig c;
  c.layers = 1;
  c.heads = 1;
  c.model_dim = model_dim;
  c.ff_dim = 1;
  c.context_per_frame = context_per_frame;
  c.relevance = {1, 1, 1};
  c.positional = false;
  c.patches_per_frame = patches_per_frame;
  return c;
}

CompressorWeights CompressorWeights::init(const CompressorConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t d = config.model_dim;
  const double sd = 1.0 / std::sqrt(static_cast<double>(d));
  CompressorWeights w;
  w.context_seed = rng.gaussian(config.context_per_frame, d, sd);
  w.visual_position = rng.gaussian(config.patches_per_frame, d, sd);
  w.context_position = rng.gaussian(config.context_per_frame, d, sd);
  w.frame_position = rng.gaussian(config.max_frames, d, sd);
  for (std::size_t l = 0; l < config.layers; ++l) {
    LayerWeights lw;
    lw.attention = AttentionWeights::random(config.attention(), rng);
    lw.ln1_gain.assign(d, 1.0);
    lw.ln1_bias.assign(d, 0.0);
    lw.ff_in = rng.gaussian(d, config.ff_dim, sd);
    lw.ff_in_bias.assign(config.ff_dim, 0.0);
    lw.ff_out = rng.gaussian(config.ff_dim, d, sd);
    lw.ff_out_bias.assign(d, 0.0);
    lw.ln2_gain.assign(d, 1.0);
    lw.ln2_bias.assign(d, 0.0);
    w.layers.push_back(std::move(lw));
  }
  return w;
}

CompressorWeights CompressorWeights::analytic(const CompressorConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const std::size_t d = config.model_dim;
  CompressorWeights w;
  w.context_seed = rng.gaussian(config.context_per_frame, d, 1.0 / std::sqrt(static_cast<double>(d)));
  w.visual_position = Matrix(config.patches_per_frame, d);
  w.context_position = Matrix(config.context_per_frame, d);
  w.frame_position = Matrix(config.max_frames, d);
  for (std::size_t l = 0; l < config.layers; ++l) {
    LayerWeights lw;
    lw.attention = AttentionWeights::identity(config.attention());
    lw.ln1_gain.assign(d, 1.0);
    lw.ln1_bias.assign(d, 0.0);
    lw.ff_in = Matrix(d, config.ff_dim);
    lw.ff_in_bias.assign(config.ff_dim, 0.0);
    lw.ff_out = Matrix(config.ff_dim, d);
    lw.ff_out_bias.assign(d, 0.0);
    lw.ln2_gain.assign(d, 1.0);
    lw.ln2_bias.assign(d, 0.0);
    w.layers.push_back(std::move(lw));
  }
  return w;
}

CompressorWeights CompressorWeights::zeros_like(const CompressorWeights& other) {
  CompressorWeights z = other;
  for_each_parameter(z, [](std::string_view, std::span<double> v) {
    std::fill(v.begin(), v.end(), 0.0);
  });
  return z;
}

void CompressorWeights::check(const CompressorConfig& config) const {
  const std::size_t d = config.model_dim;
  check_shape(context_seed, config.context_per_frame, d, "context_seed");
  check_shape(visual_position, config.patches_per_frame, d, "visual_position");
  check_shape(context_position, config.context_per_frame, d, "context_position");
  check_shape(frame_position, config.max_frames, d, "frame_position");
  if (layers.size() != config.layers) throw ShapeError("compressor weights: layer count mismatch");
  for (const auto& lw : layers) {
    lw.attention.check(config.attention());
    check_vector(lw.ln1_gain, d, "ln1_gain");
    check_vector(lw.ln1_bias, d, "ln1_bias");
    check_shape(lw.ff_in, d, config.ff_dim, "ff_in");
    check_vector(lw.ff_in_bias, config.ff_dim, "ff_in_bias");
    check_shape(lw.ff_out, config.ff_dim, d, "ff_out");
    check_vector(lw.ff_out_bias, d, "ff_out_bias");
    check_vector(lw.ln2_gain, d, "ln2_gain");
    check_vector(lw.ln2_bias, d, "ln2_bias");
  }
}

void for_each_parameter(CompressorWeights& w,
                        const std::function<void(std::string_view, std::span<double>)>& fn) {
  fn("context_seed", w.context_seed.values());
  fn("visual_position", w.visual_position.values());
  fn("context_position", w.context_position.values());
  fn("frame_position", w.frame_position.values());
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    auto& lw = w.layers[l];
    const std::string p = "layer" + std::to_string(l + 1) + ".";
    for (std::size_t h = 0; h < lw.attention.query.size(); ++h) {
      const std::string hp = p + "head" + std::to_string(h + 1) + ".";
      fn(hp + "query", lw.attention.query[h].values());
      fn(hp + "key", lw.attention.key[h].values());
      fn(hp + "value", lw.attention.value[h].values());
    }
    fn(p + "attn_output", lw.attention.output.values());
    fn(p + "ln1_gain", lw.ln1_gain);
    fn(p + "ln1_bias", lw.ln1_bias);
    fn(p + "ff_in", lw.ff_in.values());
    fn(p + "ff_in_bias", lw.ff_in_bias);
    fn(p + "ff_out", lw.ff_out.values());
    fn(p + "ff_out_bias", lw.ff_out_bias);
    fn(p + "ln2_gain", lw.ln2_gain);
    fn(p + "ln2_bias", lw.ln2_bias);
  }
}

AssembledInput assemble_input(std::span<const Matrix> frames, const Matrix& question,
                              const Matrix& context_seed) {
  if (frames.empty()) throw ShapeError("assemble_input: at least one frame is required");
  const std::size_t p = frames.front().rows();
  const std::size_t d = frames.front().cols();
  for (const auto& f : frames) {
    if (f.rows() != p || f.cols() != d) throw ShapeError("assemble_input: frames differ in shape");
  }
  if (question.cols() != d || context_seed.cols() != d) {
    throw ShapeError("assemble_input: embedding widths differ");
  }
  const LayoutSpec spec{frames.size(), p, context_seed.rows(), question.rows()};
  TokenLayout layout = build_layout(spec);
  Matrix x(layout.size(), d);
  for (std::size_t k = 1; k <= frames.size(); ++k) {
    x.set_rows(layout.visual(k).begin, frames[k - 1]);
    x.set_rows(layout.context(k).begin, context_seed);
  }
  if (question.rows() > 0) x.set_rows(layout.text().begin, question);
  return {std::move(x), std::move(layout)};
}

Matrix position_offsets(const TokenLayout& layout, const CompressorConfig& config,
                        const CompressorWeights& weights,
                        std::span<const std::size_t> frame_slots) {
  const auto& spec = layout.spec();
  if (spec.patches_per_frame != config.patches_per_frame ||
      spec.context_per_frame != config.context_per_frame) {
    throw ConfigError("positional: layout patch/context counts differ from the compressor config");
  }
  const auto slots = resolve_slots(layout, frame_slots);
  Matrix pos(layout.size(), config.model_dim);
  for (std::size_t k = 1; k <= layout.frames(); ++k) {
    const std::size_t slot = slots[k - 1];
    if (slot >= config.max_frames) {
      throw ConfigError("positional: frame slot " + std::to_string(slot) + " exceeds max_frames " +
                        std::to_string(config.max_frames));
    }
    const auto frame_vec = weights.frame_position.row(slot);
    const IndexRange vis = layout.visual(k);
    for (std::size_t i = vis.begin; i < vis.end; ++i) {
      auto dst = pos.row(i);
      const auto slot_vec = weights.visual_position.row(i - vis.begin);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = slot_vec[c] + frame_vec[c];
    }
    const IndexRange ctx = layout.context(k);
    for (std::size_t i = ctx.begin; i < ctx.end; ++i) {
      auto dst = pos.row(i);
      const auto slot_vec = weights.context_position.row(i - ctx.begin);
      for (std::size_t c = 0; c < dst.size(); ++c) dst[c] = slot_vec[c] + frame_vec[c];
    }
  }
  return pos;
}

EncoderOutput encode(const Matrix& input, const TokenLayout& layout,
                     const CompressorConfig& config, const CompressorWeights& weights,
                     EncoderCache* cache, std::span<const std::size_t> frame_slots) {
  config.validate();
  weights.check(config);
  if (input.rows() != layout.size() || input.cols() != config.model_dim) {
    throw ShapeError("encode: input must be N_enc x model_dim");
  }
  Matrix positions;
  if (config.positional && config.layers > 0) {
    positions = position_offsets(layout, config, weights, frame_slots);
  }
  const Matrix* offset = positions.empty() ? nullptr : &positions;
  const AttentionHeadConfig head_config = config.attention();

  EncoderOutput out{input, layout, {}};
  if (cache != nullptr) {
    cache->layers.clear();
    cache->frame_slots = resolve_slots(layout, frame_slots);
  }
  for (const auto& lw : weights.layers) {
    EncoderLayerCache lc;
    AttentionOutput attn = qmsa_attention(out.hidden, lw.attention, head_config, layout,
                                          config.variant, config.guide_on,
                                          cache != nullptr ? &lc.attention : nullptr, offset);
    Matrix residual = out.hidden + attn.y;
    Matrix h1 = layer_norm(residual, lw.ln1_gain, lw.ln1_bias, config.layer_norm_eps,
                           cache != nullptr ? &lc.ln1 : nullptr);
    Matrix pre = matmul(h1, lw.ff_in);
    add_row_bias(pre, lw.ff_in_bias);
    Matrix act = pre;
    for (auto& v : act.values()) v = silu(v);
    Matrix ff = matmul(act, lw.ff_out);
    add_row_bias(ff, lw.ff_out_bias);
    Matrix hidden = layer_norm(h1 + ff, lw.ln2_gain, lw.ln2_bias, config.layer_norm_eps,
                               cache != nullptr ? &lc.ln2 : nullptr);
    if (cache != nullptr) {
      lc.input = std::move(out.hidden);
      lc.after_ln1 = std::move(h1);
      lc.ff_pre = std::move(pre);
      lc.ff_act = std::move(act);
      cache->layers.push_back(std::move(lc));
    }
    out.hidden = std::move(hidden);
    out.traces.push_back(std::move(attn.attention));
  }
  if (cache != nullptr) {
    cache->positions = std::move(positions);
    cache->filled = true;
  }
  return out;
}

EncoderGradients encode_backward(const EncoderCache& cache, const Matrix& grad_hidden,
                                 const TokenLayout& layout, const CompressorConfig& config,
                                 const CompressorWeights& weights) {
  if (!cache.filled || cache.layers.size() != weights.layers.size()) {
    throw ContractViolation("encode_backward: forward cache is missing");
  }
  EncoderGradients g{grad_hidden, CompressorWeights::zeros_like(weights)};
  Matrix grad_positions(layout.size(), config.model_dim);

  for (std::size_t li = weights.layers.size(); li-- > 0;) {
    const auto& lw = weights.layers[li];
    const auto& lc = cache.layers[li];
    auto& gw = g.params.layers[li];

    LayerNormGradients ln2 = layer_norm_backward(lc.ln2, lw.ln2_gain, g.input);
    gw.ln2_gain = std::move(ln2.gain);
    gw.ln2_bias = std::move(ln2.bias);
    const Matrix& grad_r2 = ln2.x;

    gw.ff_out = matmul_lhs_transposed(lc.ff_act, grad_r2);
    gw.ff_out_bias = column_sums(grad_r2);
    Matrix grad_pre = matmul_transposed(grad_r2, lw.ff_out);
    for (std::size_t i = 0; i < grad_pre.size(); ++i) {
      grad_pre.values()[i] *= silu_grad(lc.ff_pre.values()[i]);
    }
    gw.ff_in = matmul_lhs_transposed(lc.after_ln1, grad_pre);
    gw.ff_in_bias = column_sums(grad_pre);
    Matrix grad_h1 = grad_r2 + matmul_transposed(grad_pre, lw.ff_in);

    LayerNormGradients ln1 = layer_norm_backward(lc.ln1, lw.ln1_gain, grad_h1);
    gw.ln1_gain = std::move(ln1.gain);
    gw.ln1_bias = std::move(ln1.bias);
    const Matrix& grad_r1 = ln1.x;

    AttentionGradients ag =
        qmsa_backward(lc.attention, grad_r1, lw.attention, config.attention(), layout);
    gw.attention.query = std::move(ag.query);
    gw.attention.key = std::move(ag.key);
    gw.attention.value = std::move(ag.value);
    gw.attention.output = std::move(ag.output);
    if (!cache.positions.empty()) grad_positions += ag.qk_input;
    g.input = grad_r1 + ag.x;
  }

  if (!cache.positions.empty()) {
    for (std::size_t k = 1; k <= layout.frames(); ++k) {
      auto frame_grad = g.params.frame_position.row(cache.frame_slots[k - 1]);
      const IndexRange vis = layout.visual(k);
      for (std::size_t i = vis.begin; i < vis.end; ++i) {
        auto slot_grad = g.params.visual_position.row(i - vis.begin);
        for (std::size_t c = 0; c < config.model_dim; ++c) {
          slot_grad[c] += grad_positions(i, c);
          frame_grad[c] += grad_positions(i, c);
        }
      }
      const IndexRange ctx = layout.context(k);
      for (std::size_t i = ctx.begin; i < ctx.end; ++i) {
        auto slot_grad = g.params.context_position.row(i - ctx.begin);
        for (std::size_t c = 0; c < config.model_dim; ++c) {
          slot_grad[c] += grad_positions(i, c);
          frame_grad[c] += grad_positions(i, c);
        }
      }
    }
  }
  return g;
}

std::vector<double> compute_relevance(const std::vector<std::vector<Matrix>>& traces,
                                      const TokenLayout& layout, const RelevanceConfig& config) {
  if (config.layer_first < 1 || config.layer_first > config.layer_last ||
      config.layer_last > traces.size()) {
    throw ConfigError("relevance: layer range [" + std::to_string(config.layer_first) + ", " +
                      std::to_string(config.layer_last) + "] not covered by " +
                      std::to_string(traces.size()) + " traced layers");
  }
  const IndexRange txt = layout.text();
  if (txt.size() == 0) throw ContractViolation("relevance: layout has no text tokens");

  std::vector<double> relevance(layout.frames(), 0.0);
  std::vector<double> head_mass;
  for (std::size_t l = config.layer_first; l <= config.layer_last; ++l) {
    const auto& heads = traces[l - 1];
    if (config.top_heads < 1 || config.top_heads > heads.size()) {
      throw ConfigError("relevance: K_h must lie in [1, heads]");
    }
    for (std::size_t f = 1; f <= layout.frames(); ++f) {
      const IndexRange vis = layout.visual(f);
      head_mass.assign(heads.size(), 0.0);
      for (std::size_t h = 0; h < heads.size(); ++h) {
        double total = 0.0;
        for (std::size_t m = txt.begin; m < txt.end; ++m) {
          for (std::size_t j = vis.begin; j < vis.end; ++j) total += heads[h](m, j);
        }
        head_mass[h] = total / static_cast<double>(txt.size());
      }
      std::partial_sort(head_mass.begin(),
                        head_mass.begin() + static_cast<std::ptrdiff_t>(config.top_heads),
                        head_mass.end(), std::greater<>());
      double top = 0.0;
      for (std::size_t h = 0; h < config.top_heads; ++h) top += head_mass[h];
      relevance[f - 1] += top / static_cast<double>(config.top_heads);
    }
  }
  const auto layers = static_cast<double>(config.layer_last - config.layer_first + 1);
  for (auto& r : relevance) r = std::clamp(r / layers, 0.0, 1.0);
  return relevance;
}

std::vector<Matrix> extract_context(const EncoderOutput& out) {
  std::vector<Matrix> slices;
  slices.reserve(out.layout.frames());
  for (std::size_t k = 1; k <= out.layout.frames(); ++k) {
    const IndexRange ctx = out.layout.context(k);
    slices.push_back(out.hidden.slice_rows(ctx.begin, ctx.size()));
  }
  return slices;
}

}  // namespace qvic
