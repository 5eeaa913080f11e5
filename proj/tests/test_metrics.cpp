#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "dbda/error.hpp"
#include "dbda/metrics.hpp"
#include "dbda/rng.hpp"

using namespace dbda;

TEST_CASE("single-class counts reproduce hand-computed scores") {
  // Class 0: TP=3, FP=1, FN=2.
  ConfusionMatrix cm(2);
  cm.add(0, 0, 3);
  cm.add(1, 0, 1);
  cm.add(0, 1, 2);
  MetricReport r = report(cm);
  CHECK(r.precision[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(r.recall[0] == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(r.f1[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  CHECK(r.iou[0] == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("a diagonal confusion matrix scores 1 everywhere") {
  ConfusionMatrix cm(3);
  for (int64_t c = 0; c < 3; ++c) cm.add(c, c, 10 + static_cast<uint64_t>(c));
  MetricReport r = report(cm);
  for (int64_t c = 0; c < 3; ++c) {
    CHECK(r.precision[c] == 1.0);
    CHECK(r.recall[c] == 1.0);
    CHECK(r.f1[c] == 1.0);
    CHECK(r.iou[c] == 1.0);
    CHECK_FALSE(r.degenerate[c]);
  }
  CHECK(r.mean_iou == 1.0);
  CHECK(r.overall_accuracy == 1.0);
  CHECK(r.mean_class_accuracy == 1.0);
}

TEST_CASE("fixed matrices match independently computed reports") {
  struct Case {
    std::vector<uint64_t> counts;
    int64_t classes;
  };
  // Row-major true×predicted counts.
  const std::vector<Case> cases = {
      {{5, 0, 0, 5}, 2},
      {{8, 2, 3, 7}, 2},
      {{10, 0, 0, 0, 0, 0, 0, 0, 0}, 3},
      {{4, 1, 0, 2, 6, 1, 0, 3, 9}, 3},
      {{1, 2, 3, 4, 5, 6, 7, 8, 9}, 3},
      {{0, 10, 10, 0}, 2},
  };
  for (const Case& tc : cases) {
    ConfusionMatrix cm(tc.classes);
    for (int64_t t = 0; t < tc.classes; ++t) {
      for (int64_t p = 0; p < tc.classes; ++p) {
        const uint64_t n = tc.counts[static_cast<size_t>(t * tc.classes + p)];
        if (n) cm.add(t, p, n);
      }
    }
    MetricReport r = report(cm);

    uint64_t trace = 0, total = 0;
    double mp = 0, mr = 0, mf = 0, mi = 0;
    for (int64_t c = 0; c < tc.classes; ++c) {
      uint64_t tp = tc.counts[static_cast<size_t>(c * tc.classes + c)];
      uint64_t row = 0, col = 0;
      for (int64_t o = 0; o < tc.classes; ++o) {
        row += tc.counts[static_cast<size_t>(c * tc.classes + o)];
        col += tc.counts[static_cast<size_t>(o * tc.classes + c)];
        total += tc.counts[static_cast<size_t>(c * tc.classes + o)];
      }
      trace += tp;
      const uint64_t fp = col - tp, fn = row - tp;
      const double prec = col ? double(tp) / double(col) : 0.0;
      const double rec = row ? double(tp) / double(row) : 0.0;
      const double iou = (tp + fp + fn) ? double(tp) / double(tp + fp + fn) : 0.0;
      const double f1 = (tp + fp + fn) ? 2.0 * double(tp) / double(2 * tp + fp + fn) : 0.0;
      CHECK(r.precision[c] == doctest::Approx(prec).epsilon(1e-12));
      CHECK(r.recall[c] == doctest::Approx(rec).epsilon(1e-12));
      CHECK(r.iou[c] == doctest::Approx(iou).epsilon(1e-12));
      CHECK(r.f1[c] == doctest::Approx(f1).epsilon(1e-12));
      CHECK(r.degenerate[c] == (col == 0 || row == 0));
      mp += prec;
      mr += rec;
      mf += f1;
      mi += iou;
    }
    const double C = static_cast<double>(tc.classes);
    CHECK(r.mean_precision == doctest::Approx(mp / C).epsilon(1e-12));
    CHECK(r.mean_recall == doctest::Approx(mr / C).epsilon(1e-12));
    CHECK(r.mean_f1 == doctest::Approx(mf / C).epsilon(1e-12));
    CHECK(r.mean_iou == doctest::Approx(mi / C).epsilon(1e-12));
    CHECK(r.mean_class_accuracy == r.mean_recall);
    CHECK(r.overall_accuracy == doctest::Approx(double(trace) / double(total)).epsilon(1e-12));
  }
}

TEST_CASE("absent classes are flagged and contribute zero to the means") {
  ConfusionMatrix cm(3);
  cm.add(0, 0, 10);
  cm.add(1, 1, 10);
  MetricReport r = report(cm);
  CHECK(r.degenerate[2]);
  CHECK(r.iou[2] == 0.0);
  CHECK(r.f1[2] == 0.0);
  CHECK(r.mean_iou == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
}

TEST_CASE("f1 and iou satisfy their algebraic identity on random matrices") {
  Rng rng(909);
  for (int trial = 0; trial < 1000; ++trial) {
    const int64_t C = 2 + static_cast<int64_t>(rng.below(4));
    ConfusionMatrix cm(C);
    for (int64_t t = 0; t < C; ++t) {
      for (int64_t p = 0; p < C; ++p) {
        cm.add(t, p, rng.below(20));
      }
    }
    MetricReport r = report(cm);
    for (int64_t c = 0; c < C; ++c) {
      CHECK(std::abs(r.f1[c] - 2.0 * r.iou[c] / (1.0 + r.iou[c])) <= 1e-12);
      CHECK(r.f1[c] >= r.iou[c]);
    }
  }
}

TEST_CASE("accumulation order does not change the totals") {
  std::vector<int32_t> pred = {0, 1, 2, 0, 1, 2, 0, 0, 1};
  std::vector<int32_t> truth = {0, 1, 1, 2, 1, 2, 0, 1, 0};

  ConfusionMatrix forward(3);
  forward.accumulate(pred, truth, std::nullopt);

  ConfusionMatrix reversed(3);
  for (size_t i = pred.size(); i > 0; --i) {
    reversed.add(truth[i - 1], pred[i - 1]);
  }

  for (int64_t t = 0; t < 3; ++t) {
    for (int64_t p = 0; p < 3; ++p) {
      CHECK(forward.at(t, p) == reversed.at(t, p));
    }
  }
}

TEST_CASE("merge equals accumulating everything into one matrix") {
  Rng rng(911);
  std::vector<int32_t> pred(600), truth(600);
  for (size_t i = 0; i < 600; ++i) {
    pred[i] = static_cast<int32_t>(rng.below(4));
    truth[i] = static_cast<int32_t>(rng.below(4));
  }
  ConfusionMatrix whole(4);
  whole.accumulate(pred, truth, std::nullopt);

  ConfusionMatrix a(4), b(4);
  a.accumulate(std::vector<int32_t>(pred.begin(), pred.begin() + 250),
               std::vector<int32_t>(truth.begin(), truth.begin() + 250), std::nullopt);
  b.accumulate(std::vector<int32_t>(pred.begin() + 250, pred.end()),
               std::vector<int32_t>(truth.begin() + 250, truth.end()), std::nullopt);
  a.merge(b);

  for (int64_t t = 0; t < 4; ++t) {
    for (int64_t p = 0; p < 4; ++p) {
      CHECK(whole.at(t, p) == a.at(t, p));
    }
  }

  ConfusionMatrix wrong(3);
  CHECK_THROWS_AS(a.merge(wrong), ShapeError);
}

TEST_CASE("a random 16x16 prediction accumulates 256 pixels") {
  Rng rng(912);
  std::vector<int32_t> pred(256), truth(256);
  for (size_t i = 0; i < 256; ++i) {
    pred[i] = static_cast<int32_t>(rng.below(5));
    truth[i] = static_cast<int32_t>(rng.below(5));
  }
  ConfusionMatrix cm(5);
  cm.accumulate(pred, truth, std::nullopt);
  CHECK(cm.total() == 256);
}

TEST_CASE("accumulate honors the ignore index and validates classes") {
  ConfusionMatrix cm(2);
  cm.accumulate({0, 1, 0}, {0, -1, 1}, -1);
  CHECK(cm.total() == 2);
  CHECK(cm.at(0, 0) == 1);
  CHECK(cm.at(1, 0) == 1);

  CHECK_THROWS_AS(cm.accumulate({0}, {0, 1}, std::nullopt), ShapeError);
  CHECK_THROWS_AS(cm.accumulate({5}, {0}, std::nullopt), Error);
  CHECK_THROWS_AS(cm.accumulate({0}, {7}, std::nullopt), Error);
  CHECK_THROWS_AS(cm.add(0, -1), Error);
  CHECK_THROWS_AS(cm.at(2, 0), Error);
  CHECK_THROWS_AS(ConfusionMatrix(0), ConfigError);
}

TEST_CASE("report csv carries a header, one row per class, and a mean row") {
  ConfusionMatrix cm(2);
  cm.add(0, 0, 3);
  cm.add(1, 0, 1);
  cm.add(0, 1, 2);
  cm.add(1, 1, 4);
  std::string csv = report_csv(report(cm));

  CHECK(csv.rfind("class,precision,recall,f1,iou\n", 0) == 0);
  size_t lines = 0;
  for (char ch : csv) lines += ch == '\n';
  CHECK(lines == 4);
  CHECK(csv.find("\nmean,") != std::string::npos);
  CHECK(csv.find("0.750000") != std::string::npos);
  CHECK(csv.find("0.600000") != std::string::npos);
}

TEST_CASE("an empty matrix reports all zeros without dividing by zero") {
  MetricReport r = report(ConfusionMatrix(3));
  CHECK(r.overall_accuracy == 0.0);
  CHECK(r.mean_iou == 0.0);
  for (int64_t c = 0; c < 3; ++c) CHECK(r.degenerate[c]);
}
