#include "dbda/train.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "dbda/log.hpp"
#include "dbda/losses.hpp"
#include "dbda/rng.hpp"

namespace fs = std::filesystem;

namespace dbda {

const char* preset_name(Preset p) {
  switch (p) {
    case Preset::source_only:
      return "source-only";
    case Preset::minent:
      return "minent";
    case Preset::dbda_dagger:
      return "dbda-dagger";
    case Preset::dbda:
      return "dbda";
  }
  return "?";
}

Preset preset_from_name(const std::string& s) {
  if (s == "source-only") return Preset::source_only;
  if (s == "minent") return Preset::minent;
  if (s == "dbda-dagger") return Preset::dbda_dagger;
  if (s == "dbda") return Preset::dbda;
  throw ConfigError("unknown preset '" + s +
                    "' (expected source-only|minent|dbda-dagger|dbda)");
}

double poly_lr(double lr0, int64_t step, int64_t total, double power) {
  if (total < 1) throw ConfigError("poly_lr: total steps must be positive");
  if (step < 0 || step > total) {
    throw ConfigError("poly_lr: step " + std::to_string(step) + " outside [0," +
                      std::to_string(total) + "]");
  }
  return lr0 * std::pow(1.0 - static_cast<double>(step) / static_cast<double>(total), power);
}

uint64_t model_seed(uint64_t seed) { return Rng::mix(seed, 0x0de1ULL); }

uint64_t epoch_seed(uint64_t seed, int64_t epoch) {
  return Rng::mix(Rng::mix(seed, 0xe90cULL), static_cast<uint64_t>(epoch));
}

SgdOptimizer::SgdOptimizer(std::vector<Tensor> params, double momentum, double weight_decay)
    : params_(std::move(params)), momentum_(momentum), weight_decay_(weight_decay) {
  velocity_.reserve(params_.size());
  for (const Tensor& p : params_) {
    velocity_.emplace_back(static_cast<size_t>(p.size()), 0.0);
  }
}

void SgdOptimizer::zero_grad() {
  for (Tensor& p : params_) p.zero_grad();
}

void SgdOptimizer::step(double lr) {
  for (size_t i = 0; i < params_.size(); ++i) {
    auto& w = params_[i].values_mut();
    const auto& g = params_[i].grad();
    auto& v = velocity_[i];
    for (size_t j = 0; j < w.size(); ++j) {
      const double gj = (g.empty() ? 0.0 : g[j]) + weight_decay_ * w[j];
      v[j] = momentum_ * v[j] + gj;
      w[j] -= lr * v[j];
    }
  }
}

namespace {

void check_finite(double v, const char* term, int64_t step) {
  if (!std::isfinite(v)) {
    throw NumericError(std::string("training aborted: ") + term + " is not finite at step " +
                       std::to_string(step));
  }
}

}  // namespace

StepRecord joint_step(const SegModel& model, SgdOptimizer& opt, const SegBatch& src,
                      const SegBatch& tgt, const TrainConfig& cfg, int64_t step) {
  const double lr = poly_lr(cfg.lr0, step, cfg.steps, cfg.poly_power);
  const bool use_ent = cfg.lambda1 != 0.0;
  const bool use_dist = cfg.lambda2 != 0.0;

  opt.zero_grad();

  Tensor probs_s = softmax_channel(model.forward(src.images));
  LossValue l_seg = cross_entropy(probs_s, src.labels);
  check_finite(l_seg.detached, "supervised loss", step);

  Tensor total = l_seg.value;
  double ent_logged = 0.0, dist_logged = 0.0;
  if (use_ent || use_dist) {
    if (!tgt.images.defined()) {
      throw Error("joint_step: preset needs a target batch but none was given");
    }
    Tensor probs_t = softmax_channel(model.forward(tgt.images));
    if (use_ent) {
      LossValue ent = cfg.pseudo_labels ? pseudo_label_ce(probs_t, cfg.pseudo_threshold)
                                        : entropy_min(probs_t);
      check_finite(ent.detached, cfg.pseudo_labels ? "pseudo-label loss" : "entropy loss", step);
      ent_logged = ent.detached;
      if (ent.active) total = add(total, scale(ent.value, cfg.lambda1));
    }
    if (use_dist) {
      LossValue dist =
          kl_distribution(soft_class_distribution(probs_s), soft_class_distribution(probs_t));
      check_finite(dist.detached, "distribution loss", step);
      dist_logged = dist.detached;
      total = add(total, scale(dist.value, cfg.lambda2));
    }
  }
  const double total_value = total.item();
  check_finite(total_value, "total loss", step);

  total.backward();
  opt.step(lr);

  return StepRecord{step, lr, l_seg.detached, ent_logged, dist_logged, total_value};
}

std::vector<int32_t> predict_labels(const SegModel& model, const SegSample& sample) {
  SegBatch b = make_batch({sample}, {0}, false);
  Tensor logits = model.forward(b.images);
  const int64_t C = logits.shape()[1], HW = logits.shape()[2] * logits.shape()[3];
  const auto& v = logits.values();
  std::vector<int32_t> pred(static_cast<size_t>(HW));
  for (int64_t i = 0; i < HW; ++i) {
    int32_t best = 0;
    double best_v = v[i];
    for (int64_t c = 1; c < C; ++c) {
      if (v[c * HW + i] > best_v) {
        best_v = v[c * HW + i];
        best = static_cast<int32_t>(c);
      }
    }
    pred[i] = best;
  }
  return pred;
}

MetricReport evaluate(const SegModel& model, const std::vector<SegSample>& samples) {
  if (samples.empty()) throw ConfigError("evaluate: no samples");
  const int64_t C = model.config().classes;
  ConfusionMatrix cm(C);

  constexpr int64_t kEvalBatch = 8;
  std::vector<int64_t> idx;
  for (size_t start = 0; start < samples.size(); start += kEvalBatch) {
    const size_t end = std::min(samples.size(), start + kEvalBatch);
    idx.clear();
    for (size_t i = start; i < end; ++i) {
      if (samples[i].label.empty()) {
        throw Error("evaluate: sample '" + samples[i].id + "' has no labels");
      }
      idx.push_back(static_cast<int64_t>(i));
    }
    SegBatch b = make_batch(samples, idx, true);
    Tensor logits = model.forward(b.images);
    const int64_t B = logits.shape()[0], HW = logits.shape()[2] * logits.shape()[3];
    const auto& v = logits.values();
    std::vector<int32_t> pred(static_cast<size_t>(HW));
    for (int64_t bi = 0; bi < B; ++bi) {
      const double* img = v.data() + bi * C * HW;
      for (int64_t i = 0; i < HW; ++i) {
        int32_t best = 0;
        double best_v = img[i];
        for (int64_t c = 1; c < C; ++c) {
          if (img[c * HW + i] > best_v) {
            best_v = img[c * HW + i];
            best = static_cast<int32_t>(c);
          }
        }
        pred[i] = best;
      }
      const std::vector<int32_t> truth(b.labels.begin() + bi * HW,
                                       b.labels.begin() + (bi + 1) * HW);
      cm.accumulate(pred, truth);
    }
  }
  return report(cm);
}

namespace {

void write_steps_csv(const std::string& path, const std::vector<StepRecord>& records) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open step log '" + path + "' for writing");
  out << "step,lr,l_seg,l_ent,l_dist,total\n";
  char line[256];
  for (const StepRecord& r : records) {
    std::snprintf(line, sizeof(line), "%lld,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                  static_cast<long long>(r.step), r.lr, r.l_seg, r.l_ent, r.l_dist, r.total);
    out << line;
  }
  out.flush();
  if (!out) throw IoError("write failed for step log '" + path + "'");
}

}  // namespace

RunResult run(const TrainConfig& cfg, const std::string& out_dir) {
  if (cfg.steps < 1) throw ConfigError("train: steps must be positive");
  if (cfg.batch < 1) throw ConfigError("train: batch size must be positive");

  LoadedData data = load_datasets(cfg.data, cfg.model.classes);
  const int64_t n_src = static_cast<int64_t>(data.src_train.size());
  const int64_t n_tgt = static_cast<int64_t>(data.tgt_train.size());
  if (n_src == 0 || n_tgt == 0) {
    throw ConfigError("train: empty training split (source " + std::to_string(n_src) +
                      " tiles, target " + std::to_string(n_tgt) + " tiles)");
  }
  if (data.tgt_test.empty()) {
    throw ConfigError("train: empty target test split");
  }
  log_info("loaded %lld source / %lld target train tiles, %lld target test tiles",
           static_cast<long long>(n_src), static_cast<long long>(n_tgt),
           static_cast<long long>(data.tgt_test.size()));

  fs::create_directories(out_dir);
  RunResult result;
  result.checkpoint_path = (fs::path(out_dir) / cfg.checkpoint_name).string();
  result.report_path = (fs::path(out_dir) / cfg.report_name).string();
  result.steps_path = (fs::path(out_dir) / cfg.steps_name).string();

  try {
    SegModel model = SegModel::build(cfg.model, model_seed(cfg.seed));
    SgdOptimizer opt(model.parameter_tensors(), cfg.momentum, cfg.weight_decay);
    const bool needs_target = cfg.lambda1 != 0.0 || cfg.lambda2 != 0.0;

    result.records.reserve(static_cast<size_t>(cfg.steps));
    int64_t step = 0;
    for (int64_t epoch = 0; step < cfg.steps; ++epoch) {
      const auto pairs = pair_indices(n_src, n_tgt, cfg.batch, epoch_seed(cfg.seed, epoch));
      for (const BatchPair& pair : pairs) {
        if (step >= cfg.steps) break;
        SegBatch src = make_batch(data.src_train, pair.src, true);
        SegBatch tgt;
        if (needs_target) tgt = make_batch(data.tgt_train, pair.tgt, false);
        result.records.push_back(joint_step(model, opt, src, tgt, cfg, step));
        const StepRecord& r = result.records.back();
        if (step % 200 == 0 || step + 1 == cfg.steps) {
          log_info("step %lld/%lld lr=%.5g l_seg=%.4f l_ent=%.4f l_dist=%.5f total=%.4f",
                   static_cast<long long>(step), static_cast<long long>(cfg.steps), r.lr, r.l_seg,
                   r.l_ent, r.l_dist, r.total);
        }
        ++step;
      }
    }

    write_steps_csv(result.steps_path, result.records);
    model.save(result.checkpoint_path);
    result.report = evaluate(model, data.tgt_test);
    write_report_csv(result.report_path, result.report);
    log_info("preset %s seed %llu: target mIoU %.4f, mean F1 %.4f, overall accuracy %.4f",
             preset_name(cfg.preset), static_cast<unsigned long long>(cfg.seed),
             result.report.mean_iou, result.report.mean_f1, result.report.overall_accuracy);
  } catch (...) {
    std::error_code ec;
    fs::remove(result.checkpoint_path, ec);
    fs::remove(result.report_path, ec);
    fs::remove(result.steps_path, ec);
    throw;
  }
  return result;
}

}  // namespace dbda
