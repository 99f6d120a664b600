#include "qvic/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>

#include "qvic/compressor.hpp"
#include "qvic/error.hpp"
#include "qvic/qmsa.hpp"
#include "qvic/rng.hpp"

namespace qvic {
namespace {

TensorCheck compare(std::string name, std::span<double> values, std::span<const double> analytic,
                    const std::function<double()>& loss, double step) {
  if (values.size() != analytic.size()) throw ShapeError("gradcheck: gradient size mismatch for " + name);
  double diff = 0.0, norm_a = 0.0, norm_n = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double saved = values[i];
    values[i] = saved + step;
    const double up = loss();
    values[i] = saved - step;
    const double down = loss();
    values[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    diff += (numeric - analytic[i]) * (numeric - analytic[i]);
    norm_a += analytic[i] * analytic[i];
    norm_n += numeric * numeric;
  }
  const double denom = std::max({std::sqrt(norm_a), std::sqrt(norm_n), 1e-12});
  return {std::move(name), values.size(), std::sqrt(diff) / denom};
}

void finish(GradCheckResult& r) {
  for (const auto& t : r.tensors) r.max_rel_error = std::max(r.max_rel_error, t.rel_error);
}

LayoutSpec random_layout(Rng& rng, std::size_t max_tokens) {
  while (true) {
    LayoutSpec s{1 + rng.below(3), 1 + rng.below(3), 1 + rng.below(2), 1 + rng.below(2)};
    if (s.total_len() <= max_tokens) return s;
  }
}

}  // namespace

GradCheckResult check_attention_gradients(std::uint64_t seed, double step) {
  Rng rng(seed);
  const TokenLayout layout = build_layout(random_layout(rng, 16));
  const AttentionHeadConfig cfg{8, 2, ScaleDenominator::HeadDim};
  const auto variant = static_cast<MaskVariant>(rng.below(5));
  const bool guide = rng.below(2) == 1;
  AttentionWeights w = AttentionWeights::random(cfg, rng);
  Matrix x = rng.gaussian(layout.size(), cfg.model_dim, 1.0);
  Matrix offset = rng.gaussian(layout.size(), cfg.model_dim, 0.5);
  const Matrix probe = rng.gaussian(layout.size(), cfg.model_dim, 1.0);

  auto loss = [&] {
    return dot(probe, qmsa_attention(x, w, cfg, layout, variant, guide, nullptr, &offset).y);
  };
  AttentionCache cache;
  qmsa_attention(x, w, cfg, layout, variant, guide, &cache, &offset);
  const AttentionGradients g = qmsa_backward(cache, probe, w, cfg, layout);

  GradCheckResult r;
  r.label = "qmsa " + std::string(to_string(variant)) + (guide ? " guide" : "") + " N=" +
            std::to_string(layout.size());
  r.tensors.push_back(compare("x", x.values(), g.x.values(), loss, step));
  r.tensors.push_back(compare("qk_offset", offset.values(), g.qk_input.values(), loss, step));
  for (std::size_t h = 0; h < cfg.heads; ++h) {
    const std::string suffix = "[" + std::to_string(h) + "]";
    r.tensors.push_back(compare("query" + suffix, w.query[h].values(), g.query[h].values(), loss, step));
    r.tensors.push_back(compare("key" + suffix, w.key[h].values(), g.key[h].values(), loss, step));
    r.tensors.push_back(compare("value" + suffix, w.value[h].values(), g.value[h].values(), loss, step));
  }
  r.tensors.push_back(compare("output", w.output.values(), g.output.values(), loss, step));
  finish(r);
  return r;
}

GradCheckResult check_compressor_gradients(std::uint64_t seed, double step) {
  Rng rng(seed);
  const LayoutSpec spec = random_layout(rng, 16);
  CompressorConfig cfg;
  cfg.layers = 2;
  cfg.heads = 2;
  cfg.model_dim = 8;
  cfg.ff_dim = 6;
  cfg.context_per_frame = spec.context_per_frame;
  cfg.patches_per_frame = spec.patches_per_frame;
  cfg.max_frames = 4;
  cfg.relevance = {1, 1, 2};
  cfg.variant = static_cast<MaskVariant>(rng.below(5));
  cfg.guide_on = rng.below(2) == 1;
  cfg.seed = rng.next_u64();
  CompressorWeights w = CompressorWeights::init(cfg);
  // Nonzero biases and non-unit gains so every parameter path is exercised.
  for (auto& layer : w.layers) {
    for (auto* v : {&layer.ln1_gain, &layer.ln1_bias, &layer.ff_in_bias, &layer.ff_out_bias,
                    &layer.ln2_gain, &layer.ln2_bias}) {
      for (auto& e : *v) e += rng.uniform(-0.5, 0.5);
    }
  }
  const TokenLayout layout = build_layout(spec);
  Matrix x = rng.gaussian(layout.size(), cfg.model_dim, 1.0);
  const Matrix probe = rng.gaussian(layout.size(), cfg.model_dim, 1.0);

  auto loss = [&] { return dot(probe, encode(x, layout, cfg, w).hidden); };
  EncoderCache cache;
  encode(x, layout, cfg, w, &cache);
  EncoderGradients g = encode_backward(cache, probe, layout, cfg, w);

  GradCheckResult r;
  r.label = "compressor " + std::string(to_string(cfg.variant)) + (cfg.guide_on ? " guide" : "") +
            " N=" + std::to_string(layout.size());
  r.tensors.push_back(compare("input", x.values(), g.input.values(), loss, step));
  std::vector<std::span<double>> analytic;
  for_each_parameter(g.params, [&](std::string_view, std::span<double> v) { analytic.push_back(v); });
  std::size_t i = 0;
  for_each_parameter(w, [&](std::string_view name, std::span<double> v) {
    const auto a = analytic[i++];
    if (name == "context_seed") return;  // encode never reads it
    r.tensors.push_back(compare(std::string(name), v, a, loss, step));
  });
  finish(r);
  return r;
}

std::vector<GradCheckResult> run_gradcheck(const GradCheckOptions& options) {
  std::vector<GradCheckResult> out;
  for (std::size_t i = 0; i < options.instances; ++i) {
    out.push_back(check_attention_gradients(derive_seed(options.seed, 2 * i), options.step));
    out.push_back(check_compressor_gradients(derive_seed(options.seed, 2 * i + 1), options.step));
  }
  return out;
}

}  // namespace qvic
