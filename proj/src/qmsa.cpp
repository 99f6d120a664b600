#include "qvic/qmsa.hpp"

#include <cmath>
#include <string>

#include "qvic/error.hpp"
#include "qvic/kernels.hpp"

namespace qvic {

std::string_view to_string(MaskVariant v) {
  switch (v) {
    case MaskVariant::SingleFrame: return "single_frame";
    case MaskVariant::MultiCausal: return "multi_causal";
    case MaskVariant::Framewise: return "framewise_M";
    case MaskVariant::FramewiseBlocked: return "M_plus_B";
    case MaskVariant::Full: return "full_QMSA";
  }
  return "unknown";
}

MaskVariant parse_mask_variant(std::string_view text) {
  if (text == "a" || text == "single_frame") return MaskVariant::SingleFrame;
  if (text == "b" || text == "multi_causal") return MaskVariant::MultiCausal;
  if (text == "c" || text == "framewise_M") return MaskVariant::Framewise;
  if (text == "d" || text == "M_plus_B") return MaskVariant::FramewiseBlocked;
  if (text == "e" || text == "full_QMSA") return MaskVariant::Full;
  throw ConfigError("unknown mask variant '" + std::string(text) + "'");
}

std::string_view to_string(ScaleDenominator s) {
  return s == ScaleDenominator::HeadDim ? "head_dim" : "model_dim";
}

ScaleDenominator parse_scale_denominator(std::string_view text) {
  if (text == "head_dim") return ScaleDenominator::HeadDim;
  if (text == "model_dim") return ScaleDenominator::ModelDim;
  throw ConfigError("unknown scale denominator '" + std::string(text) + "'");
}

MaskPattern build_mask_M(const TokenLayout& layout) {
  const std::size_t n = layout.size();
  MaskPattern m = MaskPattern::causal(n);
  for (std::size_t k = 1; k <= layout.frames(); ++k) {
    const IndexRange ctx = layout.context(k);
    const IndexRange own = layout.visual(k);
    const IndexRange vis = layout.all_visual();
    const IndexRange earlier_ctx{layout.all_context().begin, ctx.begin};
    for (std::size_t i = ctx.begin; i < ctx.end; ++i) {
      for (std::size_t j = vis.begin; j < vis.end; ++j) {
        if (!own.contains(j)) m.set(i, j, false);
      }
      for (std::size_t j = earlier_ctx.begin; j < earlier_ctx.end; ++j) m.set(i, j, false);
    }
  }
  return m;
}

MaskPattern build_block_B(const TokenLayout& layout) {
  const std::size_t n = layout.size();
  MaskPattern b(n, n, true);
  const IndexRange ctx = layout.all_context();
  const IndexRange txt = layout.text();
  for (std::size_t i = ctx.begin; i < ctx.end; ++i) {
    for (std::size_t j = txt.begin; j < txt.end; ++j) b.set(i, j, false);
  }
  return b;
}

Matrix build_guide_G(const TokenLayout& layout, const Matrix& logits) {
  const std::size_t n = layout.size();
  if (logits.rows() != n || logits.cols() != n) throw ShapeError("build_guide_G: logits must be N x N");
  const IndexRange txt = layout.text();
  if (txt.size() == 0) throw ContractViolation("build_guide_G: guide is undefined without text tokens");
  Matrix g(n, n);
  const double inv = 1.0 / static_cast<double>(txt.size());
  for (std::size_t k = 1; k <= layout.frames(); ++k) {
    const IndexRange vis = layout.visual(k);
    const IndexRange ctx = layout.context(k);
    for (std::size_t j = vis.begin; j < vis.end; ++j) {
      double mean = 0.0;
      for (std::size_t m = txt.begin; m < txt.end; ++m) mean += logits(m, j);
      mean *= inv;
      for (std::size_t i = ctx.begin; i < ctx.end; ++i) g(i, j) = mean;
    }
  }
  return g;
}

namespace {

// Frame-isolated causal blocks; text forms its own block.
MaskPattern build_single_frame(const TokenLayout& layout) {
  const std::size_t n = layout.size();
  MaskPattern m(n, n, false);
  for (std::size_t i = 0; i < n; ++i) {
    const TokenLabel li = layout.label(i);
    for (std::size_t j = 0; j <= i; ++j) {
      const TokenLabel lj = layout.label(j);
      const bool both_text = li.kind == TokenKind::Text && lj.kind == TokenKind::Text;
      const bool same_frame =
          li.kind != TokenKind::Text && lj.kind != TokenKind::Text && li.frame == lj.frame;
      if (both_text || same_frame) m.set(i, j, true);
    }
  }
  return m;
}

std::size_t checked_head_count(const AttentionWeights& w) { return w.query.size(); }

}  // namespace

MaskPattern build_variant(const TokenLayout& layout, MaskVariant variant) {
  switch (variant) {
    case MaskVariant::SingleFrame: return build_single_frame(layout);
    case MaskVariant::MultiCausal: return MaskPattern::causal(layout.size());
    case MaskVariant::Framewise: return build_mask_M(layout);
    case MaskVariant::FramewiseBlocked:
    case MaskVariant::Full: return build_mask_M(layout) & build_block_B(layout);
  }
  throw ContractViolation("build_variant: unknown variant");
}

double AttentionHeadConfig::scale() const {
  const std::size_t denom = scale_denominator == ScaleDenominator::HeadDim ? head_dim() : model_dim;
  return 1.0 / std::sqrt(static_cast<double>(denom));
}

void AttentionHeadConfig::validate() const {
  if (model_dim == 0 || heads == 0) throw ConfigError("attention: model_dim and heads must be >= 1");
  if (model_dim % heads != 0) {
    throw ConfigError("attention: model_dim " + std::to_string(model_dim) +
                      " is not divisible by heads " + std::to_string(heads));
  }
}

AttentionWeights AttentionWeights::random(const AttentionHeadConfig& config, Rng& rng) {
  config.validate();
  const double sd = 1.0 / std::sqrt(static_cast<double>(config.model_dim));
  AttentionWeights w;
  for (std::size_t h = 0; h < config.heads; ++h) {
    w.query.push_back(rng.gaussian(config.model_dim, config.head_dim(), sd));
    w.key.push_back(rng.gaussian(config.model_dim, config.head_dim(), sd));
    w.value.push_back(rng.gaussian(config.model_dim, config.head_dim(), sd));
  }
  w.output = rng.gaussian(config.model_dim, config.model_dim, sd);
  return w;
}

AttentionWeights AttentionWeights::identity(const AttentionHeadConfig& config) {
  config.validate();
  const Matrix eye = Matrix::identity(config.model_dim);
  AttentionWeights w;
  for (std::size_t h = 0; h < config.heads; ++h) {
    Matrix slice = eye.slice_cols(h * config.head_dim(), config.head_dim());
    w.query.push_back(slice);
    w.key.push_back(slice);
    w.value.push_back(std::move(slice));
  }
  w.output = eye;
  return w;
}

void AttentionWeights::check(const AttentionHeadConfig& config) const {
  config.validate();
  if (query.size() != config.heads || key.size() != config.heads || value.size() != config.heads) {
    throw ShapeError("attention weights: head count does not match config");
  }
  const auto ok = [&](const Matrix& m) {
    return m.rows() == config.model_dim && m.cols() == config.head_dim();
  };
  for (std::size_t h = 0; h < config.heads; ++h) {
    if (!ok(query[h]) || !ok(key[h]) || !ok(value[h])) {
      throw ShapeError("attention weights: projection must be model_dim x head_dim");
    }
  }
  if (output.rows() != config.model_dim || output.cols() != config.model_dim) {
    throw ShapeError("attention weights: output projection must be model_dim x model_dim");
  }
}

AttentionOutput qmsa_attention(const Matrix& x, const AttentionWeights& weights,
                               const AttentionHeadConfig& config, const TokenLayout& layout,
                               MaskVariant variant, bool guide_on, AttentionCache* cache,
                               const Matrix* qk_offset) {
  weights.check(config);
  const std::size_t n = layout.size();
  if (x.rows() != n || x.cols() != config.model_dim) {
    throw ShapeError("qmsa_attention: input must be N_enc x model_dim");
  }
  Matrix qk_input = x;
  if (qk_offset != nullptr) qk_input += *qk_offset;

  const MaskPattern pattern = build_variant(layout, variant);
  const bool guided = applies_guide(variant, guide_on);
  const std::size_t heads = checked_head_count(weights);
  const std::size_t dh = config.head_dim();
  const double scale = config.scale();

  std::vector<Matrix> q(heads), k(heads), v(heads), attn(heads), head_out(heads);
  kernels::parallel_for(heads, [&](std::size_t h) {
    q[h] = kernels::serial::matmul(qk_input, weights.query[h]);
    k[h] = kernels::serial::matmul(qk_input, weights.key[h]);
    v[h] = kernels::serial::matmul(x, weights.value[h]);
    Matrix logits = kernels::serial::matmul_transposed(q[h], k[h]);
    logits *= scale;
    if (guided) logits += build_guide_G(layout, logits);
    attn[h] = kernels::serial::masked_softmax(logits, pattern);
    head_out[h] = kernels::serial::matmul(attn[h], v[h]);
  });

  Matrix concat(n, config.model_dim);
  for (std::size_t h = 0; h < heads; ++h) concat.set_cols(h * dh, head_out[h]);
  AttentionOutput out{matmul(concat, weights.output), attn};

  if (cache != nullptr) {
    cache->input = x;
    cache->qk_input = std::move(qk_input);
    cache->pattern = pattern;
    cache->guided = guided;
    cache->query = std::move(q);
    cache->key = std::move(k);
    cache->value = std::move(v);
    cache->attention = std::move(attn);
    cache->concat = std::move(concat);
    cache->filled = true;
  }
  return out;
}

AttentionGradients qmsa_backward(const AttentionCache& cache, const Matrix& grad_y,
                                 const AttentionWeights& weights,
                                 const AttentionHeadConfig& config, const TokenLayout& layout) {
  if (!cache.filled) throw ContractViolation("qmsa_backward: forward cache is empty");
  weights.check(config);
  const std::size_t n = layout.size();
  if (grad_y.rows() != n || grad_y.cols() != config.model_dim) {
    throw ShapeError("qmsa_backward: upstream gradient must be N_enc x model_dim");
  }
  const std::size_t heads = config.heads;
  const std::size_t dh = config.head_dim();
  const double scale = config.scale();
  const IndexRange txt = layout.text();

  AttentionGradients g;
  g.output = matmul_lhs_transposed(cache.concat, grad_y);
  const Matrix grad_concat = matmul_transposed(grad_y, weights.output);

  g.query.resize(heads);
  g.key.resize(heads);
  g.value.resize(heads);
  g.logits.resize(heads);
  std::vector<Matrix> dqk(heads), dv_in(heads);

  kernels::parallel_for(heads, [&](std::size_t h) {
    namespace ks = kernels::serial;
    const Matrix grad_head = grad_concat.slice_cols(h * dh, dh);
    const Matrix& attn = cache.attention[h];
    const Matrix grad_attn = ks::matmul_transposed(grad_head, cache.value[h]);
    const Matrix grad_v = ks::matmul_lhs_transposed(attn, grad_head);
    Matrix grad_s = softmax_backward(attn, grad_attn);
    if (cache.guided) {
      // G(i, j) = mean_m S(m, j) over text rows m, on context(k) x visual(k).
      const double inv = 1.0 / static_cast<double>(txt.size());
      for (std::size_t f = 1; f <= layout.frames(); ++f) {
        const IndexRange vis = layout.visual(f);
        const IndexRange ctx = layout.context(f);
        for (std::size_t j = vis.begin; j < vis.end; ++j) {
          double grad_g = 0.0;
          for (std::size_t i = ctx.begin; i < ctx.end; ++i) grad_g += grad_s(i, j);
          for (std::size_t m = txt.begin; m < txt.end; ++m) grad_s(m, j) += grad_g * inv;
        }
      }
    }
    Matrix grad_q = ks::matmul(grad_s, cache.key[h]);
    grad_q *= scale;
    Matrix grad_k = ks::matmul_lhs_transposed(grad_s, cache.query[h]);
    grad_k *= scale;

    g.query[h] = ks::matmul_lhs_transposed(cache.qk_input, grad_q);
    g.key[h] = ks::matmul_lhs_transposed(cache.qk_input, grad_k);
    g.value[h] = ks::matmul_lhs_transposed(cache.input, grad_v);
    dqk[h] = ks::matmul_transposed(grad_q, weights.query[h]) +
             ks::matmul_transposed(grad_k, weights.key[h]);
    dv_in[h] = ks::matmul_transposed(grad_v, weights.value[h]);
    g.logits[h] = std::move(grad_s);
  });

  g.qk_input = Matrix(n, config.model_dim);
  Matrix grad_values(n, config.model_dim);
  for (std::size_t h = 0; h < heads; ++h) {
    g.qk_input += dqk[h];
    grad_values += dv_in[h];
  }
  g.x = g.qk_input + grad_values;
  return g;
}

}  // namespace qvic
