#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <sys/wait.h>
#include <vector>

#include "dbda/config.hpp"
#include "dbda/data.hpp"
#include "dbda/gradcheck.hpp"
#include "dbda/losses.hpp"
#include "dbda/metrics.hpp"
#include "dbda/model.hpp"
#include "dbda/rng.hpp"
#include "dbda/tensor.hpp"
#include "dbda/train.hpp"

namespace fs = std::filesystem;
using namespace dbda;

namespace {

int g_checks_failed = 0;

void expect(bool ok, const std::string& what) {
  if (!ok) {
    ++g_checks_failed;
    std::printf("       check failed: %s\n", what.c_str());
  }
}

void expect_close(double got, double want, double tol, const std::string& what) {
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%s: got %.12g, want %.12g (tol %g)", what.c_str(), got, want,
                tol);
  expect(std::fabs(got - want) <= tol, buf);
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "dbda_acceptance" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::vector<char> read_bytes(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return {};
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::string shipped_config_path() {
  return std::string(DBDA_CONFIG_DIR) + "/synthetic-shift.conf";
}

// B×C×H×W probabilities, channel-normalized per pixel.
Tensor random_probs(int64_t B, int64_t C, int64_t H, int64_t W, Rng& rng) {
  std::vector<double> v(static_cast<size_t>(B * C * H * W));
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t i = 0; i < H * W; ++i) {
      double total = 0.0;
      for (int64_t c = 0; c < C; ++c) {
        const double x = rng.uniform(0.02, 1.0);
        v[static_cast<size_t>((b * C + c) * H * W + i)] = x;
        total += x;
      }
      for (int64_t c = 0; c < C; ++c) {
        v[static_cast<size_t>((b * C + c) * H * W + i)] /= total;
      }
    }
  }
  return Tensor::constant({B, C, H, W}, std::move(v));
}

Tensor pixel_probs(const std::vector<std::vector<double>>& pixels) {
  const auto W = static_cast<int64_t>(pixels.size());
  const auto C = static_cast<int64_t>(pixels[0].size());
  std::vector<double> v(static_cast<size_t>(C * W));
  for (int64_t w = 0; w < W; ++w) {
    for (int64_t c = 0; c < C; ++c) v[static_cast<size_t>(c * W + w)] = pixels[w][c];
  }
  return Tensor::constant({1, C, 1, W}, std::move(v));
}

double median3(double a, double b, double c) {
  double v[3] = {a, b, c};
  std::sort(v, v + 3);
  return v[1];
}

// 1: every analytic gradient in the registered suite matches central
// differences, with at least 100 probed coordinates per check, in under 60s.
bool criterion_gradients() {
  const auto results = run_gradcheck("all", 1234);
  double total_seconds = 0.0;
  for (const GradCheckResult& r : results) {
    expect(r.pass, "gradient check '" + r.name + "' failed (max_rel_err " +
                       std::to_string(r.max_rel_err) + ")");
    expect(r.coords >= 100,
           "gradient check '" + r.name + "' probed only " + std::to_string(r.coords) + " coords");
    total_seconds += r.seconds;
  }
  expect(!results.empty(), "no gradient checks ran");
  expect(total_seconds < 60.0,
         "gradient suite took " + std::to_string(total_seconds) + "s (budget 60s)");
  return g_checks_failed == 0;
}

// 2: the loss terms reproduce their hand-derived scalar values.
bool criterion_loss_values() {
  expect_close(cross_entropy(pixel_probs({{0.5, 0.5}}), {0}).detached, 0.693147, 1e-6,
               "cross entropy, one pixel at p=0.5");
  expect_close(cross_entropy(pixel_probs({{0.5, 0.5}}), {0}).detached, std::log(2.0), 1e-12,
               "cross entropy vs ln 2");

  expect_close(cross_entropy(pixel_probs({{0.5, 0.5}, {0.25, 0.75}}), {0, 0}).detached, 1.039721,
               1e-6, "cross entropy, two pixels at p=0.5 and 0.25");
  expect_close(cross_entropy(pixel_probs({{0.5, 0.5}, {0.25, 0.75}}), {0, 0}).detached,
               0.5 * (std::log(2.0) + std::log(4.0)), 1e-12,
               "cross entropy vs (ln2 + ln4)/2");

  expect_close(pseudo_label_ce(pixel_probs({{0.9, 0.1}}), 0.8).detached, 0.105361, 1e-6,
               "pseudo-label loss, confident pixel");
  expect_close(pseudo_label_ce(pixel_probs({{0.9, 0.1}}), 0.8).detached, -std::log(0.9), 1e-12,
               "pseudo-label loss vs -ln 0.9");
  expect_close(pseudo_label_ce(pixel_probs({{0.5, 0.5}}), 0.5).detached, std::log(2.0), 1e-12,
               "pseudo-label loss at an inclusive-threshold tie");

  expect_close(entropy_min(pixel_probs({{0.8, 0.2}})).detached, 0.721928, 1e-6,
               "normalized entropy of [0.8, 0.2]");
  expect_close(entropy_min(pixel_probs({{0.8, 0.2}})).detached,
               -(0.8 * std::log(0.8) + 0.2 * std::log(0.2)) / std::log(2.0), 1e-12,
               "normalized entropy vs its formula");
  for (int64_t C : {2, 6}) {
    std::vector<double> uni(static_cast<size_t>(C), 1.0 / static_cast<double>(C));
    expect_close(entropy_min(Tensor::constant({1, C, 1, 1}, uni)).detached, 1.0, 1e-9,
                 "entropy of the uniform distribution, C=" + std::to_string(C));
    std::vector<double> hot(static_cast<size_t>(C), 0.0);
    hot[0] = 1.0;
    expect_close(entropy_min(Tensor::constant({1, C, 1, 1}, hot)).detached, 0.0, 1e-9,
                 "entropy of a one-hot distribution, C=" + std::to_string(C));
  }

  Tensor two_px = pixel_probs({{0.7, 0.3}, {0.1, 0.9}});
  Tensor counts = soft_class_counts(two_px);
  expect_close(counts.values()[0], 0.8, 1e-9, "soft count of class 0");
  expect_close(counts.values()[1], 1.2, 1e-9, "soft count of class 1");
  ClassDistribution two_px_dist = soft_class_distribution(two_px);
  expect_close(two_px_dist.probs.values()[0], 0.4, 1e-9, "soft distribution of class 0");
  expect_close(two_px_dist.probs.values()[1], 0.6, 1e-9, "soft distribution of class 1");

  ClassDistribution p = distribution_from_values({0.5, 0.5});
  ClassDistribution q = distribution_from_values({0.9, 0.1});
  expect_close(kl_distribution(p, q).detached, 0.255413, 1e-6,
               "divergence of [0.5,0.5] from [0.9,0.1]");
  expect_close(kl_distribution(p, q).detached,
               0.5 * (0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1)), 1e-12,
               "forward divergence vs its formula");
  expect_close(kl_distribution(q, p).detached,
               0.5 * (0.9 * std::log(0.9 / 0.5) + 0.1 * std::log(0.1 / 0.5)), 1e-12,
               "reverse divergence vs its formula");
  expect_close(kl_distribution(q, p).detached, 0.184032, 1e-6,
               "divergence of [0.9,0.1] from [0.5,0.5]");
  expect_close(kl_distribution(p, p).detached, 0.0, 1e-12, "self-divergence");
  expect(kl_distribution(q, p).detached != kl_distribution(p, q).detached,
         "the divergence should be asymmetric");
  return g_checks_failed == 0;
}

// 3: soft class counts match a brute-force accumulation on 50 random inputs.
bool criterion_soft_counts() {
  Rng rng(31337);
  for (int trial = 0; trial < 50; ++trial) {
    const int64_t B = 1 + static_cast<int64_t>(rng.below(3));
    const int64_t C = 2 + static_cast<int64_t>(rng.below(4));
    const int64_t H = 1 + static_cast<int64_t>(rng.below(6));
    const int64_t W = 1 + static_cast<int64_t>(rng.below(6));
    Tensor probs = random_probs(B, C, H, W, rng);

    std::vector<double> brute(static_cast<size_t>(C), 0.0);
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t c = 0; c < C; ++c) {
        for (int64_t i = 0; i < H * W; ++i) {
          brute[static_cast<size_t>(c)] +=
              probs.values()[static_cast<size_t>((b * C + c) * H * W + i)];
        }
      }
    }

    Tensor counts = soft_class_counts(probs);
    double total = 0.0;
    for (int64_t c = 0; c < C; ++c) {
      total += counts.values()[static_cast<size_t>(c)];
      expect_close(counts.values()[static_cast<size_t>(c)], brute[static_cast<size_t>(c)], 1e-9,
                   "trial " + std::to_string(trial) + " class " + std::to_string(c));
    }
    expect_close(total, static_cast<double>(B * H * W), 1e-9,
                 "trial " + std::to_string(trial) + " total mass");
  }
  return g_checks_failed == 0;
}

// 4: metrics match hand-computed confusion-matrix cases and the F1/IoU
// identity holds on 1000 random matrices.
bool criterion_metrics() {
  ConfusionMatrix cm(2);
  cm.add(0, 0, 3);
  cm.add(1, 0, 1);
  cm.add(0, 1, 2);
  MetricReport r = report(cm);
  expect_close(r.precision[0], 0.75, 1e-12, "precision at TP=3 FP=1");
  expect_close(r.recall[0], 0.6, 1e-12, "recall at TP=3 FN=2");
  expect_close(r.f1[0], 2.0 / 3.0, 1e-9, "F1 at TP=3 FP=1 FN=2");
  expect_close(r.iou[0], 0.5, 1e-12, "IoU at TP=3 FP=1 FN=2");

  ConfusionMatrix diag(3);
  for (int64_t c = 0; c < 3; ++c) diag.add(c, c, 4);
  MetricReport rd = report(diag);
  expect_close(rd.mean_iou, 1.0, 1e-12, "mean IoU of a diagonal matrix");
  expect_close(rd.overall_accuracy, 1.0, 1e-12, "accuracy of a diagonal matrix");

  ConfusionMatrix anti(2);
  anti.add(0, 1, 5);
  anti.add(1, 0, 5);
  MetricReport ra = report(anti);
  expect_close(ra.mean_iou, 0.0, 1e-12, "mean IoU of an anti-diagonal matrix");
  expect_close(ra.overall_accuracy, 0.0, 1e-12, "accuracy of an anti-diagonal matrix");

  ConfusionMatrix skew(3);
  skew.add(0, 0, 4);
  skew.add(0, 1, 1);
  skew.add(1, 1, 6);
  skew.add(1, 2, 1);
  skew.add(2, 0, 2);
  skew.add(2, 2, 9);
  MetricReport rs = report(skew);
  expect_close(rs.iou[0], 4.0 / 7.0, 1e-12, "class-0 IoU of a mixed matrix");
  expect_close(rs.iou[1], 6.0 / 8.0, 1e-12, "class-1 IoU of a mixed matrix");
  expect_close(rs.iou[2], 9.0 / 12.0, 1e-12, "class-2 IoU of a mixed matrix");
  expect_close(rs.overall_accuracy, 19.0 / 23.0, 1e-12, "accuracy of a mixed matrix");
  expect_close(rs.mean_class_accuracy, (4.0 / 5.0 + 6.0 / 7.0 + 9.0 / 11.0) / 3.0, 1e-12,
               "mean class accuracy of a mixed matrix");

  ConfusionMatrix missing(3);
  missing.add(0, 0, 5);
  missing.add(1, 1, 5);
  MetricReport rm = report(missing);
  expect(rm.degenerate[2], "a class absent from truth and prediction should be flagged");
  expect_close(rm.mean_iou, 2.0 / 3.0, 1e-12, "absent class contributes zero to the mean");

  Rng rng(424242);
  for (int trial = 0; trial < 1000; ++trial) {
    const int64_t C = 2 + static_cast<int64_t>(rng.below(4));
    ConfusionMatrix random_cm(C);
    for (int64_t t = 0; t < C; ++t) {
      for (int64_t pcol = 0; pcol < C; ++pcol) random_cm.add(t, pcol, rng.below(25));
    }
    MetricReport rr = report(random_cm);
    for (int64_t c = 0; c < C; ++c) {
      const double identity = 2.0 * rr.iou[c] / (1.0 + rr.iou[c]);
      if (std::fabs(rr.f1[c] - identity) > 1e-12) {
        expect(false, "F1 != 2*IoU/(1+IoU) at trial " + std::to_string(trial));
        return false;
      }
    }
  }
  return g_checks_failed == 0;
}

// 5: with both unlabeled-target weights pinned to zero, the full training
// loop is bit-for-bit a plain supervised loop over the source stream.
bool criterion_source_only_equivalence() {
  TrainConfig cfg = load_config_file(shipped_config_path());
  cfg.preset = Preset::source_only;
  cfg.steps = 100;
  finalize_config(cfg);

  const fs::path out = fresh_dir("source_only");
  RunResult res = run(cfg, out.string());

  LoadedData data = load_datasets(cfg.data, cfg.model.classes);
  const int64_t n_src = static_cast<int64_t>(data.src_train.size());
  const int64_t n_tgt = static_cast<int64_t>(data.tgt_train.size());
  SegModel model = SegModel::build(cfg.model, model_seed(cfg.seed));
  SgdOptimizer opt(model.parameter_tensors(), cfg.momentum, cfg.weight_decay);

  int64_t step = 0;
  for (int64_t epoch = 0; step < cfg.steps; ++epoch) {
    for (const BatchPair& pair : pair_indices(n_src, n_tgt, cfg.batch, epoch_seed(cfg.seed, epoch))) {
      if (step >= cfg.steps) break;
      SegBatch src = make_batch(data.src_train, pair.src, true);
      opt.zero_grad();
      LossValue l_seg = cross_entropy(softmax_channel(model.forward(src.images)), src.labels);
      l_seg.value.backward();
      opt.step(poly_lr(cfg.lr0, step, cfg.steps, cfg.poly_power));

      expect(l_seg.detached == res.records[static_cast<size_t>(step)].l_seg,
             "supervised loss diverged at step " + std::to_string(step));
      ++step;
    }
  }

  const fs::path ref_ckpt = out / "reference.ckpt";
  model.save(ref_ckpt.string());

  const std::vector<char> a = read_bytes(res.checkpoint_path);
  const std::vector<char> b = read_bytes(ref_ckpt.string());
  expect(!a.empty(), "training checkpoint missing");
  expect(!b.empty(), "reference checkpoint missing");
  expect(a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size()) == 0,
         "checkpoint bytes differ from the reference supervised loop");
  return g_checks_failed == 0;
}

// 6: on the shipped shifted-domain experiment, the full objective beats
// source-only training by at least 0.03 median target mIoU over three seeds,
// and also beats distribution alignment alone.
bool criterion_adaptation_gap() {
  const auto t0 = std::chrono::steady_clock::now();
  TrainConfig base = load_config_file(shipped_config_path());

  auto miou = [&](Preset preset, uint64_t seed, const std::string& tag) {
    TrainConfig cfg = base;
    cfg.preset = preset;
    cfg.seed = seed;
    finalize_config(cfg);
    const fs::path out = fresh_dir("gap_" + tag);
    const double v = run(cfg, out.string()).report.mean_iou;
    std::printf("       %-12s seed %llu: target mIoU %.4f\n", preset_name(preset),
                static_cast<unsigned long long>(seed), v);
    return v;
  };

  const uint64_t seeds[3] = {11, 12, 13};
  double so[3], dg[3], full[3];
  for (int i = 0; i < 3; ++i) {
    so[i] = miou(Preset::source_only, seeds[i], "so_" + std::to_string(seeds[i]));
  }
  for (int i = 0; i < 3; ++i) {
    dg[i] = miou(Preset::dbda_dagger, seeds[i], "dg_" + std::to_string(seeds[i]));
  }
  for (int i = 0; i < 3; ++i) {
    full[i] = miou(Preset::dbda, seeds[i], "full_" + std::to_string(seeds[i]));
  }

  const double med_so = median3(so[0], so[1], so[2]);
  const double med_dg = median3(dg[0], dg[1], dg[2]);
  const double med_full = median3(full[0], full[1], full[2]);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  std::printf("       medians: source-only %.4f, dbda-dagger %.4f, dbda %.4f (%.0fs)\n", med_so,
              med_dg, med_full, elapsed);

  expect(med_full >= med_so + 0.03,
         "median mIoU gap over source-only is below 0.03 (" + std::to_string(med_full - med_so) +
             ")");
  expect(med_full >= med_dg, "full objective fell below distribution alignment alone");
  expect(elapsed < 1800.0, "adaptation comparison exceeded its 30 minute budget");
  return g_checks_failed == 0;
}

// 7: two identical command-line training runs produce byte-identical
// artifacts (step log, metric report, checkpoint).
bool criterion_repeatability() {
  TrainConfig cfg = load_config_file(shipped_config_path());
  cfg.steps = 60;
  finalize_config(cfg);
  const fs::path dir = fresh_dir("repeat");
  const fs::path conf = dir / "short.conf";
  write_config_file(conf.string(), cfg);

  auto invoke = [&](const std::string& out) {
    const std::string cmd = std::string("\"") + DBDA_CLI_PATH + "\" train --config \"" +
                            conf.string() + "\" --out \"" + out + "\" > \"" + out +
                            "/stdout.txt\" 2> \"" + out + "/stderr.txt\"";
    return std::system(cmd.c_str());
  };

  const fs::path out1 = fresh_dir("repeat/run1");
  const fs::path out2 = fresh_dir("repeat/run2");
  const int s1 = invoke(out1.string());
  const int s2 = invoke(out2.string());
  expect(WIFEXITED(s1) && WEXITSTATUS(s1) == 0, "first training invocation failed");
  expect(WIFEXITED(s2) && WEXITSTATUS(s2) == 0, "second training invocation failed");

  for (const char* name : {"steps.csv", "report.csv", "model.ckpt"}) {
    const std::vector<char> a = read_bytes((out1 / name).string());
    const std::vector<char> b = read_bytes((out2 / name).string());
    expect(!a.empty(), std::string(name) + " missing from the first run");
    expect(a == b, std::string(name) + " differs between identical runs");
  }
  return g_checks_failed == 0;
}

// 8: the polynomial schedule hits its endpoints and midpoint value.
bool criterion_schedule() {
  expect_close(poly_lr(0.003, 0, 2000, 0.9), 0.003, 1e-15, "schedule at step 0");
  expect_close(poly_lr(0.003, 2000, 2000, 0.9), 0.0, 1e-15, "schedule at the final step");
  expect_close(poly_lr(1.0, 1000, 2000, 0.9), 0.535887, 1e-6, "unit schedule at the midpoint");
  expect_close(poly_lr(0.003, 1000, 2000, 0.9), 0.003 * std::pow(0.5, 0.9), 1e-15,
               "schedule midpoint vs its closed form");
  expect_close(poly_lr(2.0, 500, 1000, 1.0), 1.0, 1e-12, "linear schedule at the midpoint");
  return g_checks_failed == 0;
}

struct Criterion {
  int number;
  const char* name;
  bool (*fn)();
};

}  // namespace

int main(int argc, char** argv) {
  const Criterion criteria[] = {
      {1, "analytic gradients match central differences", criterion_gradients},
      {2, "loss terms reproduce their derived scalar values", criterion_loss_values},
      {3, "soft class counts match brute-force accumulation", criterion_soft_counts},
      {4, "metrics match hand-computed confusion matrices", criterion_metrics},
      {5, "zero-weight adaptation equals plain supervised training", criterion_source_only_equivalence},
      {6, "adaptation beats source-only by 0.03 median mIoU", criterion_adaptation_gap},
      {7, "identical invocations produce identical artifacts", criterion_repeatability},
      {8, "polynomial schedule hits its reference values", criterion_schedule},
  };

  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const int n = std::atoi(argv[i]);
    if (n < 1 || n > 8) {
      std::fprintf(stderr, "usage: %s [criterion numbers 1-8]\n", argv[0]);
      return 2;
    }
    only.insert(n);
  }

  int failures = 0;
  for (const Criterion& c : criteria) {
    if (!only.empty() && !only.count(c.number)) continue;
    g_checks_failed = 0;
    bool ok = false;
    std::string error;
    try {
      ok = c.fn();
    } catch (const std::exception& e) {
      error = e.what();
      ok = false;
    }
    if (!error.empty()) std::printf("       unexpected error: %s\n", error.c_str());
    std::printf("%s  %d: %s\n", ok ? "PASS" : "FAIL", c.number, c.name);
    std::fflush(stdout);
    failures += !ok;
  }

  if (failures) {
    std::printf("%d of %zu criteria failed\n", failures,
                only.empty() ? sizeof(criteria) / sizeof(criteria[0]) : only.size());
    return 1;
  }
  std::printf("all criteria passed\n");
  return 0;
}
