#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "dbda/config.hpp"
#include "dbda/data.hpp"
#include "dbda/error.hpp"
#include "dbda/model.hpp"
#include "dbda/rng.hpp"
#include "dbda/train.hpp"

using namespace dbda;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "dbda_train_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Small end-to-end config: 16px canvas, 8px tiles, minimal model.
TrainConfig tiny_run_config() {
  TrainConfig cfg;
  cfg.model.classes = 3;
  cfg.model.width = 4;
  cfg.model.blocks = 1;
  cfg.model.rates = {1};
  cfg.model.downsample = true;
  cfg.model.input = 8;
  cfg.data.tile = 8;
  cfg.data.train_count = 3;
  cfg.data.test_count = 1;
  cfg.data.synth.canvas = 16;
  cfg.data.synth.density = 40.0;
  cfg.data.synth.seed = 4;
  cfg.data.synth.target.gain = {1.0, 1.0, 0.6};
  cfg.preset = Preset::dbda;
  cfg.lambda1 = 0.05;
  cfg.lambda2 = 0.2;
  cfg.lr0 = 0.01;
  cfg.steps = 4;
  cfg.batch = 2;
  cfg.seed = 3;
  finalize_config(cfg);
  return cfg;
}

std::vector<char> read_bytes(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  return std::vector<char>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

}  // namespace

TEST_CASE("poly_lr matches its closed form") {
  CHECK(poly_lr(0.01, 0, 1000, 0.9) == 0.01);
  CHECK(poly_lr(0.01, 1000, 1000, 0.9) == 0.0);
  CHECK(poly_lr(0.01, 500, 1000, 0.9) ==
        doctest::Approx(0.01 * std::pow(0.5, 0.9)).epsilon(1e-12));
  CHECK(poly_lr(2.5, 500, 1000, 0.9) == doctest::Approx(2.5 * 0.535887).epsilon(1e-6));
  CHECK(poly_lr(1.0, 250, 1000, 1.0) == doctest::Approx(0.75).epsilon(1e-12));

  CHECK_THROWS_AS(poly_lr(0.01, 0, 0, 0.9), ConfigError);
  CHECK_THROWS_AS(poly_lr(0.01, -1, 10, 0.9), ConfigError);
  CHECK_THROWS_AS(poly_lr(0.01, 11, 10, 0.9), ConfigError);
}

TEST_CASE("seed streams are deterministic and distinct") {
  CHECK(model_seed(7) == model_seed(7));
  CHECK(model_seed(7) != model_seed(8));
  CHECK(epoch_seed(7, 0) == epoch_seed(7, 0));
  CHECK(epoch_seed(7, 0) != epoch_seed(7, 1));
  CHECK(epoch_seed(7, 0) != epoch_seed(8, 0));
  CHECK(model_seed(7) != epoch_seed(7, 0));
}

TEST_CASE("sgd applies momentum and coupled weight decay") {
  Tensor w = Tensor::parameter({2}, {1.0, -2.0});
  SgdOptimizer opt({w}, 0.5, 0.1);

  // Gradient 1: [0.2, 0.4].
  sum(mul(w, Tensor::constant({2}, {0.2, 0.4}))).backward();
  opt.step(0.1);
  // g' = g + wd*w; v = g'; w -= lr*v.
  // w0: g'=0.2+0.1*1.0=0.3, w=1.0-0.03=0.97
  // w1: g'=0.4+0.1*(-2.0)=0.2, w=-2.0-0.02=-2.02
  CHECK(w.values()[0] == doctest::Approx(0.97).epsilon(1e-12));
  CHECK(w.values()[1] == doctest::Approx(-2.02).epsilon(1e-12));

  opt.zero_grad();
  sum(mul(w, Tensor::constant({2}, {0.2, 0.4}))).backward();
  opt.step(0.1);
  // w0: g'=0.2+0.097=0.297, v=0.5*0.3+0.297=0.447, w=0.97-0.0447=0.9253
  // w1: g'=0.4-0.202=0.198, v=0.5*0.2+0.198=0.298, w=-2.02-0.0298=-2.0498
  CHECK(w.values()[0] == doctest::Approx(0.9253).epsilon(1e-12));
  CHECK(w.values()[1] == doctest::Approx(-2.0498).epsilon(1e-12));
}

TEST_CASE("sgd step without a backward pass applies pure decay") {
  Tensor w = Tensor::parameter({1}, {10.0});
  SgdOptimizer opt({w}, 0.0, 0.01);
  opt.step(1.0);
  CHECK(w.values()[0] == doctest::Approx(10.0 - 0.1).epsilon(1e-12));
}

TEST_CASE("a source-only step ignores the target batch entirely") {
  TrainConfig cfg = tiny_run_config();
  cfg.preset = Preset::source_only;
  finalize_config(cfg);

  LoadedData data = load_datasets(cfg.data, cfg.model.classes);
  SegBatch src = make_batch(data.src_train, {0, 1}, true);

  SegModel m1 = SegModel::build(cfg.model, model_seed(cfg.seed));
  SgdOptimizer o1(m1.parameter_tensors(), cfg.momentum, cfg.weight_decay);
  StepRecord r = joint_step(m1, o1, src, SegBatch{}, cfg, 0);
  CHECK(r.l_ent == 0.0);
  CHECK(r.l_dist == 0.0);
  CHECK(r.total == r.l_seg);

  // The same step with a populated target batch produces identical weights.
  SegModel m2 = SegModel::build(cfg.model, model_seed(cfg.seed));
  SgdOptimizer o2(m2.parameter_tensors(), cfg.momentum, cfg.weight_decay);
  SegBatch tgt = make_batch(data.tgt_train, {0, 1}, false);
  StepRecord r2 = joint_step(m2, o2, src, tgt, cfg, 0);
  CHECK(r2.total == r.total);
  for (size_t i = 0; i < m1.parameters().size(); ++i) {
    CHECK(m1.parameters()[i].second.values() == m2.parameters()[i].second.values());
  }
}

TEST_CASE("adaptation presets require a target batch") {
  TrainConfig cfg = tiny_run_config();
  LoadedData data = load_datasets(cfg.data, cfg.model.classes);
  SegBatch src = make_batch(data.src_train, {0, 1}, true);
  SegModel m = SegModel::build(cfg.model, model_seed(cfg.seed));
  SgdOptimizer opt(m.parameter_tensors(), cfg.momentum, cfg.weight_decay);
  CHECK_THROWS_AS(joint_step(m, opt, src, SegBatch{}, cfg, 0), Error);
}

TEST_CASE("the logged total is the weighted sum of the logged terms") {
  TrainConfig cfg = tiny_run_config();
  LoadedData data = load_datasets(cfg.data, cfg.model.classes);
  SegBatch src = make_batch(data.src_train, {0, 1}, true);
  SegBatch tgt = make_batch(data.tgt_train, {2, 3}, false);

  SegModel m = SegModel::build(cfg.model, model_seed(cfg.seed));
  SgdOptimizer opt(m.parameter_tensors(), cfg.momentum, cfg.weight_decay);
  StepRecord r = joint_step(m, opt, src, tgt, cfg, 1);
  CHECK(r.lr == poly_lr(cfg.lr0, 1, cfg.steps, cfg.poly_power));
  CHECK(r.l_seg > 0.0);
  CHECK(r.l_ent > 0.0);
  CHECK(r.l_dist >= 0.0);
  CHECK(std::abs(r.total - (r.l_seg + cfg.lambda1 * r.l_ent + cfg.lambda2 * r.l_dist)) <= 1e-12);
}

TEST_CASE("predict_labels breaks ties toward the lowest class") {
  TrainConfig cfg = tiny_run_config();
  SegModel m = SegModel::build(cfg.model, model_seed(cfg.seed));
  // Zeroed head: every class logit is identical, so all ties resolve to 0.
  for (const auto& [name, p] : m.parameters()) {
    if (name.find("aspp") != std::string::npos) {
      Tensor handle = p;
      for (double& v : handle.values_mut()) v = 0.0;
    }
  }
  LoadedData data = load_datasets(cfg.data, cfg.model.classes);
  std::vector<int32_t> pred = predict_labels(m, data.tgt_test[0]);
  REQUIRE(pred.size() == static_cast<size_t>(8 * 8));
  for (int32_t p : pred) CHECK(p == 0);
}

TEST_CASE("evaluate matches per-sample prediction") {
  TrainConfig cfg = tiny_run_config();
  SegModel m = SegModel::build(cfg.model, model_seed(cfg.seed));
  LoadedData data = load_datasets(cfg.data, cfg.model.classes);

  ConfusionMatrix cm(cfg.model.classes);
  for (const SegSample& s : data.tgt_test) {
    cm.accumulate(predict_labels(m, s), s.label);
  }
  MetricReport by_hand = report(cm);
  MetricReport by_eval = evaluate(m, data.tgt_test);
  CHECK(by_eval.mean_iou == doctest::Approx(by_hand.mean_iou).epsilon(1e-12));
  CHECK(by_eval.overall_accuracy == doctest::Approx(by_hand.overall_accuracy).epsilon(1e-12));

  CHECK_THROWS_AS(evaluate(m, {}), ConfigError);
}

TEST_CASE("run writes its three artifacts and reports metrics") {
  const fs::path out = fresh_dir("artifacts");
  TrainConfig cfg = tiny_run_config();
  RunResult res = run(cfg, out.string());

  CHECK(fs::exists(res.checkpoint_path));
  CHECK(fs::exists(res.report_path));
  CHECK(fs::exists(res.steps_path));
  CHECK(res.records.size() == static_cast<size_t>(cfg.steps));
  CHECK(res.report.mean_iou >= 0.0);
  CHECK(res.report.mean_iou <= 1.0);

  std::ifstream steps(res.steps_path);
  std::string header;
  std::getline(steps, header);
  CHECK(header == "step,lr,l_seg,l_ent,l_dist,total");
  size_t rows = 0;
  for (std::string line; std::getline(steps, line);) rows += !line.empty();
  CHECK(rows == static_cast<size_t>(cfg.steps));

  SegModel back = SegModel::load(res.checkpoint_path);
  CHECK(back.config() == cfg.model);
}

TEST_CASE("identical runs produce identical records and checkpoint bytes") {
  TrainConfig cfg = tiny_run_config();
  const fs::path out1 = fresh_dir("det1");
  const fs::path out2 = fresh_dir("det2");
  RunResult a = run(cfg, out1.string());
  RunResult b = run(cfg, out2.string());

  REQUIRE(a.records.size() == b.records.size());
  for (size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].l_seg == b.records[i].l_seg);
    CHECK(a.records[i].l_ent == b.records[i].l_ent);
    CHECK(a.records[i].l_dist == b.records[i].l_dist);
    CHECK(a.records[i].total == b.records[i].total);
  }
  CHECK(read_bytes(a.checkpoint_path) == read_bytes(b.checkpoint_path));
  CHECK(read_bytes(a.steps_path) == read_bytes(b.steps_path));

  TrainConfig other = cfg;
  other.seed = cfg.seed + 1;
  const fs::path out3 = fresh_dir("det3");
  RunResult c = run(other, out3.string());
  CHECK(a.records[0].l_seg != c.records[0].l_seg);
}

TEST_CASE("run rejects configurations that produce empty splits") {
  TrainConfig cfg = tiny_run_config();
  cfg.steps = 0;
  CHECK_THROWS_AS(run(cfg, fresh_dir("bad1").string()), ConfigError);

  TrainConfig cfg2 = tiny_run_config();
  cfg2.batch = 1000;
  CHECK_THROWS_AS(run(cfg2, fresh_dir("bad2").string()), ConfigError);
}

TEST_CASE("an aborted run leaves no partial artifacts") {
  TrainConfig cfg = tiny_run_config();
  cfg.batch = 1000;  // valid per-config, but larger than the tiled dataset
  const fs::path out = fresh_dir("abort");
  CHECK_THROWS_AS(run(cfg, out.string()), ConfigError);
  CHECK_FALSE(fs::exists(out / cfg.checkpoint_name));
  CHECK_FALSE(fs::exists(out / cfg.report_name));
  CHECK_FALSE(fs::exists(out / cfg.steps_name));
}
