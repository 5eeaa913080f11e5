#include <benchmark/benchmark.h>

#include <cstdint>
#include <vector>

#include "dbda/data.hpp"
#include "dbda/model.hpp"
#include "dbda/rng.hpp"
#include "dbda/train.hpp"

using namespace dbda;

namespace {

TrainConfig bench_config(Preset preset) {
  TrainConfig cfg;
  cfg.model.classes = 4;
  cfg.model.width = 8;
  cfg.model.blocks = 2;
  cfg.model.rates = {1, 2};
  cfg.model.downsample = true;
  cfg.model.input = 16;
  cfg.preset = preset;
  cfg.lambda1 = (preset == Preset::minent || preset == Preset::dbda) ? 0.08 : 0.0;
  cfg.lambda2 = (preset == Preset::dbda_dagger || preset == Preset::dbda) ? 0.3 : 0.0;
  // lr 0 keeps the weights frozen so iterations stay identical.
  cfg.lr0 = 0.0;
  return cfg;
}

SegBatch random_batch(int64_t B, int64_t hw, int64_t classes, bool labeled, uint64_t seed) {
  Rng rng(seed);
  std::vector<double> pixels(static_cast<size_t>(B * 3 * hw * hw));
  for (double& p : pixels) p = rng.uniform();
  SegBatch batch;
  batch.images = Tensor::constant({B, 3, hw, hw}, std::move(pixels));
  batch.batch = B;
  if (labeled) {
    batch.labels.resize(static_cast<size_t>(B * hw * hw));
    for (int32_t& l : batch.labels) l = static_cast<int32_t>(rng.below(classes));
  }
  return batch;
}

void bm_joint_step(benchmark::State& state, Preset preset) {
  TrainConfig cfg = bench_config(preset);
  SegModel model = SegModel::build(cfg.model, model_seed(7));
  SgdOptimizer opt(model.parameter_tensors(), cfg.momentum, cfg.weight_decay);
  SegBatch src = random_batch(cfg.batch, cfg.model.input, cfg.model.classes, true, 11);
  SegBatch tgt = random_batch(cfg.batch, cfg.model.input, cfg.model.classes, false, 12);
  for (auto _ : state) {
    StepRecord rec = joint_step(model, opt, src, tgt, cfg, 0);
    benchmark::DoNotOptimize(rec.total);
  }
}

void bm_evaluate(benchmark::State& state) {
  TrainConfig cfg = bench_config(Preset::source_only);
  cfg.data.tile = 16;
  cfg.data.train_count = 2;
  cfg.data.test_count = 4;
  cfg.data.synth.canvas = 32;
  cfg.data.synth.classes = 4;
  SegModel model = SegModel::build(cfg.model, model_seed(7));
  LoadedData data = load_datasets(cfg.data, cfg.model.classes);
  for (auto _ : state) {
    MetricReport r = evaluate(model, data.tgt_test);
    benchmark::DoNotOptimize(r.mean_iou);
  }
}

}  // namespace

BENCHMARK_CAPTURE(bm_joint_step, source_only, Preset::source_only)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_joint_step, minent, Preset::minent)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_joint_step, dbda_dagger, Preset::dbda_dagger)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(bm_joint_step, dbda, Preset::dbda)->Unit(benchmark::kMillisecond);
BENCHMARK(bm_evaluate)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
