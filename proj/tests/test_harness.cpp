#include <gtest/gtest.h>

#include <sstream>

#include "qvic/error.hpp"
#include "qvic/niah.hpp"
#include "qvic/report.hpp"
#include "qvic/settings.hpp"

using namespace qvic;

TEST(Settings, ConfigFileAndOverrides) {
  Settings s;
  std::istringstream cfg(
      "# stream\n"
      "K = 16\n"
      "Kr=8   # trailing comment\n"
      "\n"
      "variant = d\n"
      "needle_positions = 3, 9 ,12\n"
      "policy = uniform_budget,relevance_feedback\n"
      "update_recalled = on\n"
      "margin = 0.5\n");
  apply_config(s, cfg);
  EXPECT_EQ(s.clip_frames, 16u);
  EXPECT_EQ(s.recall_frames, 8u);
  EXPECT_EQ(s.variant, MaskVariant::FramewiseBlocked);
  EXPECT_EQ(s.needle_positions, (std::vector<FrameId>{3, 9, 12}));
  ASSERT_EQ(s.policies.size(), 2u);
  EXPECT_EQ(s.policies[0], Policy::UniformBudget);
  EXPECT_TRUE(s.update_recalled);
  EXPECT_DOUBLE_EQ(s.margin, 0.5);
  apply_setting(s, "K", "32");
  EXPECT_EQ(s.clip_frames, 32u);
  EXPECT_EQ(s.stream_config().clip_frames, 32u);
}

TEST(Settings, ErrorsNameTheLine) {
  Settings s;
  std::istringstream unknown("K = 4\nbogus = 1\n");
  try {
    apply_config(s, unknown);
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
  std::istringstream no_eq("K 4\n");
  EXPECT_THROW(apply_config(s, no_eq), ConfigError);
  EXPECT_THROW(apply_setting(s, "K", "-1"), ConfigError);
  EXPECT_THROW(apply_setting(s, "K", "4x"), ConfigError);
  EXPECT_THROW(apply_setting(s, "guide", "maybe"), ConfigError);
  EXPECT_THROW(apply_setting(s, "policy", "lru"), ConfigError);
  EXPECT_THROW(apply_config_file(s, "/nonexistent/qvic.conf"), ConfigError);
}

TEST(Settings, AnalyticPreset) {
  Settings s;
  s.analytic = true;
  s.model_dim = 16;
  const CompressorConfig c = s.compressor_config();
  EXPECT_EQ(c.layers, 1u);
  EXPECT_EQ(c.heads, 1u);
  EXPECT_FALSE(c.positional);
  s.analytic = false;
  EXPECT_EQ(s.compressor_config().layers, s.layers);
}

TEST(Report, CsvShapes) {
  ClipTrace t;
  t.clip_index = 2;
  t.current = {33, 34};
  t.recalled = {4, 9};
  t.relevance = {0.25, 0.5, 0.125, 1.0};
  t.encoder_tokens = 13;
  t.mutations = {{2, MutationAction::Append, 33, 0.25}, {2, MutationAction::Prune, 4, 0.1}};
  std::ostringstream trace;
  write_trace_csv(trace, std::vector<ClipTrace>{t});
  EXPECT_NE(trace.str().find("\n2,33,34,4;9,0.25;0.5;0.125;1,13,1,1,0,"), std::string::npos);

  std::ostringstream log;
  write_mutation_csv(log, t.mutations);
  EXPECT_EQ(log.str(), "step,action,frame_index,relevance\n2,append,33,0.25\n2,prune,4,0.1\n");

  RunReport r;
  r.label = "x";
  r.trials = 3;
  r.hits = 2;
  r.hit_rate = 2.0 / 3.0;
  r.hit_bitmap = {true, false, true};
  std::ostringstream rep;
  write_report_csv(rep, std::vector<RunReport>{r, r});
  const std::string csv = rep.str();
  EXPECT_NE(csv.find(",101\n"), std::string::npos);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
}

TEST(Report, MaskAscii) {
  const TokenLayout l = build_layout({1, 1, 1, 1});
  EXPECT_EQ(mask_ascii(build_mask_M(l), l), "  vtc\nv #..\nt ##.\nc ###\n");
}

TEST(Niah, HypergeometricClosedForm) {
  EXPECT_NEAR(hypergeometric_all_retained(240, 64, 4), 0.0047128, 1e-6);
  EXPECT_DOUBLE_EQ(hypergeometric_all_retained(10, 10, 4), 1.0);
  EXPECT_DOUBLE_EQ(hypergeometric_all_retained(10, 3, 4), 0.0);
  EXPECT_DOUBLE_EQ(hypergeometric_all_retained(10, 5, 1), 0.5);
}

TEST(Niah, TrialPositionsAreSeededAndDistinct) {
  NiahSpec spec;
  spec.seed = 3;
  const auto a = needle_positions_for_trial(spec, 7);
  EXPECT_EQ(a, needle_positions_for_trial(spec, 7));
  EXPECT_NE(a, needle_positions_for_trial(spec, 8));
  ASSERT_EQ(a.size(), 4u);
  EXPECT_TRUE(std::adjacent_find(a.begin(), a.end()) == a.end());
  for (FrameId f : a) {
    EXPECT_GE(f, 1u);
    EXPECT_LE(f, 240u);
  }
}

namespace {

StreamConfig analytic_stream(std::size_t capacity) {
  StreamConfig c;
  c.clip_frames = 16;
  c.recall_frames = 16;
  c.capacity = capacity;
  c.min_frames = 16;
  c.compressor = CompressorConfig::analytic(8, 1, 2);
  return c;
}

}  // namespace

TEST(Niah, UnboundedMemoryHitsForEveryPolicy) {
  NiahSpec spec;
  spec.frames = 64;
  spec.patches = 2;
  spec.trials = 8;
  const StreamConfig cfg = analytic_stream(64);
  const auto w = CompressorWeights::analytic(cfg.compressor);
  for (Policy p : {Policy::RelevanceFeedback, Policy::UniformBudget, Policy::Fifo}) {
    const RunReport r = run_niah(spec, cfg, p, w);
    EXPECT_EQ(r.hit_rate, 1.0) << to_string(p);
    EXPECT_EQ(r.hit_bitmap.size(), 8u);
  }
}

TEST(Niah, RelevanceBeatsFifoUnderBudget) {
  NiahSpec spec;
  spec.frames = 96;
  spec.patches = 2;
  spec.trials = 10;
  const StreamConfig cfg = analytic_stream(16);
  const auto w = CompressorWeights::analytic(cfg.compressor);
  const RunReport rel = run_niah(spec, cfg, Policy::RelevanceFeedback, w);
  EXPECT_EQ(rel.hit_rate, 1.0);
  EXPECT_GT(rel.needle_relevance, rel.distractor_relevance);
  EXPECT_LT(run_niah(spec, cfg, Policy::Fifo, w).hit_rate, 1.0);
}

TEST(Niah, BudgetBelowNeedleCountWarns) {
  NiahSpec spec;
  spec.frames = 64;
  spec.patches = 2;
  spec.needles = 20;
  spec.trials = 2;
  const StreamConfig cfg = analytic_stream(16);
  const RunReport r = run_niah(spec, cfg, Policy::RelevanceFeedback,
                               CompressorWeights::analytic(cfg.compressor));
  EXPECT_EQ(r.hit_rate, 0.0);
  EXPECT_FALSE(r.warnings.empty());
}

TEST(Ladder, StepConfigs) {
  StreamConfig base = analytic_stream(16);
  EXPECT_EQ(ladder_config(base, LadderStep::Memory).recall_frames, 0u);
  EXPECT_EQ(ladder_config(base, LadderStep::Feedback).recall_frames, 16u);
  EXPECT_EQ(ladder_config(base, LadderStep::Blocking).compressor.variant, MaskVariant::FramewiseBlocked);
  EXPECT_TRUE(ladder_config(base, LadderStep::Guiding).compressor.guide_on);
  EXPECT_FALSE(ladder_config(base, LadderStep::Blocking).compressor.guide_on);
  EXPECT_EQ(ladder_policy(LadderStep::Vanilla), Policy::UniformBudget);
  EXPECT_EQ(parse_ladder_step("+B"), LadderStep::Blocking);
  EXPECT_THROW(parse_ladder_step("+Z"), ConfigError);
}
