#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dbda/config.hpp"
#include "dbda/data.hpp"
#include "dbda/gradcheck.hpp"
#include "dbda/log.hpp"
#include "dbda/model.hpp"
#include "dbda/netpbm.hpp"
#include "dbda/synthetic.hpp"
#include "dbda/train.hpp"

namespace fs = std::filesystem;
using namespace dbda;

namespace {

std::string key_reference() {
  std::string out =
      "Configuration keys (key = value lines under [model] [train] [data] [losses]):\n";
  for (const ConfigKeyInfo& k : config_keys()) {
    char line[256];
    std::snprintf(line, sizeof(line), "  %-24s %-9s default %-14s %s\n", k.key.c_str(),
                  k.type.c_str(), k.def.empty() ? "(empty)" : k.def.c_str(), k.doc.c_str());
    out += line;
  }
  out +=
      "\nEnvironment: DBDA_LOG=quiet|info|debug controls logging.\n"
      "Exit codes: 0 success, 2 configuration error, 3 numeric failure, 4 I/O error.";
  return out;
}

int cmd_generate(const std::string& config_path, const std::string& out_dir, bool force,
                 std::optional<uint64_t> seed) {
  TrainConfig cfg = load_config_file(config_path);
  if (seed) cfg.data.synth.seed = *seed;

  if (fs::exists(out_dir)) {
    if (!fs::is_directory(out_dir)) {
      throw IoError("output path '" + out_dir + "' exists and is not a directory");
    }
    if (!fs::is_empty(out_dir) && !force) {
      throw ConfigError("output directory '" + out_dir +
                        "' is not empty (pass --force to write into it)");
    }
  }
  fs::create_directories(fs::path(out_dir) / "source");
  fs::create_directories(fs::path(out_dir) / "target");

  const int64_t n = cfg.data.train_count;
  const int64_t m = cfg.data.test_count;
  std::vector<ManifestEntry> manifest;

  auto emit = [&](Domain dom, Split split, int64_t first, int64_t count) {
    const auto samples = generate_synthetic_domain(cfg.data.synth, dom, first, count);
    for (int64_t i = 0; i < count; ++i) {
      const SegSample& s = samples[static_cast<size_t>(i)];
      char stem[64];
      std::snprintf(stem, sizeof(stem), "%s/%s_%04lld", domain_name(dom), split_name(split),
                    static_cast<long long>(i));
      const std::string image_rel = std::string(stem) + ".ppm";
      const std::string label_rel = std::string(stem) + ".pgm";
      write_ppm((fs::path(out_dir) / image_rel).string(), s.image);
      write_pgm((fs::path(out_dir) / label_rel).string(),
                LabelMap{s.image.h, s.image.w, s.label});
      manifest.push_back({dom, split, s.id, image_rel, label_rel});
    }
  };
  emit(Domain::source, Split::train, 0, n);
  emit(Domain::target, Split::train, n, n);
  emit(Domain::target, Split::test, 2 * n, m);
  emit(Domain::source, Split::test, 2 * n + m, m);

  const std::string manifest_path = (fs::path(out_dir) / "manifest.txt").string();
  write_manifest(manifest_path, manifest);
  log_info("wrote %lld rasters per domain under %s", static_cast<long long>(n + m),
           out_dir.c_str());
  std::printf("%s\n", manifest_path.c_str());
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_dir,
              std::optional<uint64_t> seed) {
  TrainConfig cfg = load_config_file(config_path);
  if (seed) cfg.seed = *seed;
  RunResult res = run(cfg, out_dir);
  std::printf("preset=%s seed=%llu mean_iou=%.6f mean_f1=%.6f overall_accuracy=%.6f\n",
              preset_name(cfg.preset), static_cast<unsigned long long>(cfg.seed),
              res.report.mean_iou, res.report.mean_f1, res.report.overall_accuracy);
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint_path,
             const std::string& out_dir) {
  TrainConfig cfg = load_config_file(config_path);
  SegModel model = SegModel::load(checkpoint_path);
  if (!(model.config() == cfg.model)) {
    throw ConfigError("checkpoint architecture (" + describe(model.config()) +
                      ") does not match the config (" + describe(cfg.model) + ")");
  }
  LoadedData data = load_datasets(cfg.data, cfg.model.classes);
  if (data.tgt_test.empty()) throw ConfigError("eval: empty target test split");
  MetricReport rep = evaluate(model, data.tgt_test);
  fs::create_directories(out_dir);
  write_report_csv((fs::path(out_dir) / cfg.report_name).string(), rep);
  std::fputs(report_csv(rep).c_str(), stdout);
  return 0;
}

int cmd_gradcheck(const std::string& scope, uint64_t seed) {
  const auto results = run_gradcheck(scope, seed);
  for (const GradCheckResult& r : results) {
    std::printf("%-18s coords=%-4lld max_rel_err=%-10.3g max_abs_err=%-10.3g %s\n",
                r.name.c_str(), static_cast<long long>(r.coords), r.max_rel_err, r.max_abs_err,
                r.pass ? "pass" : "FAIL");
  }
  if (!all_passed(results)) {
    std::fprintf(stderr, "error: gradient checks failed\n");
    return 3;
  }
  std::printf("all %zu gradient checks passed\n", results.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-adaptive semantic segmentation: supervised source training with "
               "entropy and class-distribution alignment on an unlabeled target domain"};
  app.footer(key_reference());
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir = ".";
  std::string checkpoint_path;
  std::string scope = "all";
  uint64_t seed_value = 0;
  uint64_t gc_seed = 1234;
  bool force = false;

  CLI::App* gen = app.add_subcommand("generate", "Write a synthetic two-domain dataset");
  gen->add_option("--config", config_path, "experiment config file")->required();
  gen->add_option("--out", out_dir, "output directory")->required();
  CLI::Option* gen_seed = gen->add_option("--seed", seed_value, "override data.seed");
  gen->add_flag("--force", force, "write into a non-empty directory");

  CLI::App* train = app.add_subcommand("train", "Train a model and write its artifacts");
  train->add_option("--config", config_path, "experiment config file")->required();
  train->add_option("--out", out_dir, "output directory (default .)");
  CLI::Option* train_seed = train->add_option("--seed", seed_value, "override train.seed");

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on the target test split");
  eval->add_option("--config", config_path, "experiment config file")->required();
  eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  eval->add_option("--out", out_dir, "report output directory (default .)");

  CLI::App* gc = app.add_subcommand("gradcheck", "Check analytic gradients against central differences");
  gc->add_option("scope", scope, "ops|losses|model|all (default all)");
  gc->add_option("--seed", gc_seed, "check seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }

  try {
    if (gen->parsed()) {
      return cmd_generate(config_path, out_dir, force,
                          gen_seed->count() ? std::optional<uint64_t>(seed_value) : std::nullopt);
    }
    if (train->parsed()) {
      return cmd_train(config_path, out_dir,
                       train_seed->count() ? std::optional<uint64_t>(seed_value) : std::nullopt);
    }
    if (eval->parsed()) return cmd_eval(config_path, checkpoint_path, out_dir);
    if (gc->parsed()) return cmd_gradcheck(scope, gc_seed);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
