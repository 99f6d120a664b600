// qvic: streaming compression runs, NIAH suites, ablations, mask dumps and
// gradient checks from one binary.
//
//   qvic run --frames 640 --K 32 --Kr 32 --L 256 --trace_out trace.csv
//   qvic niah --policy uniform_budget,relevance_feedback --L 64
//   qvic ablate --L 64 --steps +memory,+feedback
//   qvic masks --mask_frames 2 --patches 2 --context 1 --text 1
//   qvic gradcheck
//
// Every setting can also come from `--config FILE` (key = value lines);
// flags given on the command line win over the file.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "qvic/error.hpp"
#include "qvic/gradcheck.hpp"
#include "qvic/niah.hpp"
#include "qvic/pipeline.hpp"
#include "qvic/qmsa.hpp"
#include "qvic/report.hpp"
#include "qvic/settings.hpp"
#include "qvic/version.hpp"

namespace {

using namespace qvic;

constexpr int kExitOk = 0;
constexpr int kExitFailed = 1;
constexpr int kExitUsage = 2;
constexpr int kExitConfig = 3;
constexpr int kExitData = 4;

struct Flags {
  std::string config;
  std::map<std::string, std::string> values;
};

void add_setting_flags(CLI::App* cmd, Flags& flags) {
  cmd->add_option("--config", flags.config, "key = value settings file");
  for (const auto& key : setting_keys()) {
    const std::string name(key.name);
    cmd->add_option_function<std::string>(
        "--" + name, [&flags, name](const std::string& v) { flags.values[name] = v; },
        std::string(key.help));
  }
}

Settings resolve(const Flags& flags) {
  Settings s;
  if (!flags.config.empty()) apply_config_file(s, flags.config);
  for (const auto& [key, value] : flags.values) apply_setting(s, key, value);
  return s;
}

void write_to(const std::filesystem::path& path, const std::function<void(std::ostream&)>& fn) {
  if (path.empty()) {
    fn(std::cout);
    return;
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  fn(out);
}

int cmd_run(Settings s) {
  std::unique_ptr<Embedder> embedder;
  if (!s.embeddings.empty()) {
    if (s.question.empty()) throw ConfigError("run: --embeddings needs --question");
    auto file = FileEmbedder::load(s.embeddings, s.question);
    s.model_dim = file.model_dim();
    s.patches = file.patches_per_frame();
    embedder = std::make_unique<FileEmbedder>(std::move(file));
  } else {
    embedder = std::make_unique<SyntheticEmbedder>(s.synthetic_spec());
  }
  const StreamConfig config = s.stream_config();
  const CompressorWeights weights = s.load_weights(config.compressor);
  const StreamResult result =
      run_stream(*embedder, config, weights,
                 retention_for(s.policies.front(), embedder->frame_count(), config.capacity));
  write_to(s.trace_out, [&](std::ostream& out) { write_trace_csv(out, result.traces); });
  if (!s.mutations_out.empty()) {
    write_to(s.mutations_out, [&](std::ostream& out) { write_mutation_csv(out, result.mutation_log()); });
  }
  if (!s.decoder_out.empty()) {
    const Matrix decoder = assemble_decoder_input(result.memory, embedder->question());
    write_to(s.decoder_out, [&](std::ostream& out) { write_decoder_dump(out, result.memory, decoder); });
  }
  std::cerr << result.traces.size() << " clips, memory holds " << result.memory.size() << " of "
            << result.memory.capacity() << " frames\n";
  return kExitOk;
}

void print_warnings(const std::vector<RunReport>& reports) {
  for (const auto& r : reports) {
    for (const auto& w : r.warnings) std::cerr << "warning (" << r.label << "): " << w << '\n';
  }
}

int cmd_niah(const Settings& s) {
  const NiahSpec spec = s.niah_spec();
  const StreamConfig config = s.stream_config();
  const CompressorWeights weights = s.load_weights(config.compressor);
  std::vector<RunReport> reports;
  for (Policy p : s.policies) reports.push_back(run_niah(spec, config, p, weights));
  print_warnings(reports);
  write_to(s.report_out, [&](std::ostream& out) { write_report_csv(out, reports); });
  return kExitOk;
}

int cmd_ablate(const Settings& s) {
  const NiahSpec spec = s.niah_spec();
  const StreamConfig config = s.stream_config();
  const CompressorWeights weights = s.load_weights(config.compressor);
  std::vector<RunReport> reports;
  if (s.steps.empty()) {
    reports = run_ablation_ladder(spec, config, weights);
  } else {
    for (LadderStep step : s.steps) reports.push_back(run_ablation_step(spec, config, step, weights));
  }
  print_warnings(reports);
  write_to(s.report_out, [&](std::ostream& out) { write_report_csv(out, reports); });
  return kExitOk;
}

int cmd_masks(const Settings& s) {
  const TokenLayout layout =
      build_layout({s.mask_frames, s.patches, s.context_per_frame, s.text_len});
  std::vector<std::pair<std::string, MaskPattern>> masks{
      {"mask_M", build_mask_M(layout)}, {"block_B", build_block_B(layout)}};
  for (auto v : {MaskVariant::SingleFrame, MaskVariant::MultiCausal, MaskVariant::Framewise,
                 MaskVariant::FramewiseBlocked, MaskVariant::Full}) {
    masks.emplace_back("variant_" + std::string(to_string(v)), build_variant(layout, v));
  }
  for (const auto& [name, mask] : masks) {
    std::cout << name << " (allowed " << mask.count_allowed() << ")\n"
              << mask_ascii(mask, layout) << '\n';
  }
  Rng rng(s.seed);
  const Matrix logits = rng.gaussian(layout.size(), layout.size(), 1.0);
  const Matrix guide = build_guide_G(layout, logits);
  if (s.mask_dir.empty()) {
    std::cout << "guide_G from seeded random logits (seed " << s.seed << ")\n";
    write_matrix_csv(std::cout, guide);
    return kExitOk;
  }
  std::filesystem::create_directories(s.mask_dir);
  for (const auto& [name, mask] : masks) {
    write_to(s.mask_dir / (name + ".csv"), [&](std::ostream& out) { write_mask_csv(out, mask); });
  }
  write_to(s.mask_dir / "logits_S.csv", [&](std::ostream& out) { write_matrix_csv(out, logits); });
  write_to(s.mask_dir / "guide_G.csv", [&](std::ostream& out) { write_matrix_csv(out, guide); });
  return kExitOk;
}

int cmd_gradcheck(const Settings& s, std::size_t instances, double tolerance) {
  const auto results = run_gradcheck({instances, s.seed, 1e-5});
  double worst = 0.0;
  for (const auto& r : results) {
    std::printf("%-48s max_rel_err=%.3e\n", r.label.c_str(), r.max_rel_error);
    worst = std::max(worst, r.max_rel_error);
  }
  const bool ok = worst < tolerance;
  std::printf("%s: worst relative error %.3e (tolerance %.1e)\n", ok ? "ok" : "FAILED", worst, tolerance);
  return ok ? kExitOk : kExitFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Query-guided streaming visual compression with context memory"};
  app.require_subcommand(1);

  Flags run_flags, niah_flags, ablate_flags, masks_flags, grad_flags;
  auto* run = app.add_subcommand("run", "stream a QVEM file or a synthetic stream");
  add_setting_flags(run, run_flags);
  auto* niah = app.add_subcommand("niah", "synthetic needle-in-a-haystack suite");
  add_setting_flags(niah, niah_flags);
  auto* ablate = app.add_subcommand("ablate", "incremental component ladder on the NIAH suite");
  add_setting_flags(ablate, ablate_flags);
  auto* masks = app.add_subcommand("masks", "dump M, B, G and the variant patterns");
  add_setting_flags(masks, masks_flags);
  auto* grad = app.add_subcommand("gradcheck", "finite-difference gradient suite");
  add_setting_flags(grad, grad_flags);
  std::size_t grad_instances = 20;
  double grad_tolerance = 1e-4;
  grad->add_option("--instances", grad_instances, "seeded instances per check")->capture_default_str();
  grad->add_option("--tolerance", grad_tolerance, "largest accepted relative error")->capture_default_str();
  auto* version = app.add_subcommand("version", "print the version");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*version) {
      std::cout << "qvic " << kVersion << '\n';
      return kExitOk;
    }
    if (*run) return cmd_run(resolve(run_flags));
    if (*niah) return cmd_niah(resolve(niah_flags));
    if (*ablate) return cmd_ablate(resolve(ablate_flags));
    if (*masks) return cmd_masks(resolve(masks_flags));
    if (*grad) return cmd_gradcheck(resolve(grad_flags), grad_instances, grad_tolerance);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailed;
  }
  return kExitUsage;
}
