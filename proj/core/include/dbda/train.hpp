#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbda/data.hpp"
#include "dbda/metrics.hpp"
#include "dbda/model.hpp"

namespace dbda {

// Ablation presets: no adaptation, entropy only, distribution only, both.
enum class Preset { source_only, minent, dbda_dagger, dbda };

const char* preset_name(Preset p);
Preset preset_from_name(const std::string& s);

struct TrainConfig {
  ModelConfig model;
  DataConfig data;
  Preset preset = Preset::dbda;
  double lambda1 = 0.001;
  double lambda2 = 0.1;
  bool pseudo_labels = false;
  double pseudo_threshold = 0.9;
  double lr0 = 0.001;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double poly_power = 0.9;
  int64_t steps = 1000;
  int64_t batch = 2;
  uint64_t seed = 1;
  std::string checkpoint_name = "model.ckpt";
  std::string report_name = "report.csv";
  std::string steps_name = "steps.csv";
};

// lr0 · (1 − step/total)^power; step must lie in [0, total].
double poly_lr(double lr0, int64_t step, int64_t total, double power);

// Seed streams derived from the experiment seed; exposed so a reference loop
// can reproduce the exact shuffles and initialization.
uint64_t model_seed(uint64_t seed);
uint64_t epoch_seed(uint64_t seed, int64_t epoch);

// Momentum SGD with classic additive L2 weight decay:
// v = μ·v + (g + wd·w), w -= lr·v. Velocity starts at zero.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Tensor> params, double momentum, double weight_decay);
  void zero_grad();
  void step(double lr);

 private:
  std::vector<Tensor> params_;
  std::vector<std::vector<double>> velocity_;
  double momentum_;
  double weight_decay_;
};

struct StepRecord {
  int64_t step = 0;
  double lr = 0.0;
  double l_seg = 0.0;
  double l_ent = 0.0;
  double l_dist = 0.0;
  double total = 0.0;
};

// One optimization step of the joint objective. The target batch is only
// touched when λ1 or λ2 is nonzero; with both zero this is exactly a
// supervised step on the source batch. Aborts with the failing term named
// when a loss goes non-finite.
StepRecord joint_step(const SegModel& model, SgdOptimizer& opt, const SegBatch& src,
                      const SegBatch& tgt, const TrainConfig& cfg, int64_t step);

// Argmax prediction map for one sample.
std::vector<int32_t> predict_labels(const SegModel& model, const SegSample& sample);

// Confusion-matrix metrics of the model over labeled samples.
MetricReport evaluate(const SegModel& model, const std::vector<SegSample>& samples);

struct RunResult {
  MetricReport report;
  std::vector<StepRecord> records;
  std::string checkpoint_path;
  std::string report_path;
  std::string steps_path;
};

// Full experiment: data, model, cfg.steps joint steps over shuffled epoch
// pairings, final evaluation on the target test split. Writes the step CSV,
// the metric report CSV, and the checkpoint under out_dir; partial artifacts
// are removed if the run aborts.
RunResult run(const TrainConfig& cfg, const std::string& out_dir);

}  // namespace dbda
