#include "dbda/metrics.hpp"

#include <cstdio>
#include <fstream>

#include "dbda/error.hpp"

namespace dbda {

ConfusionMatrix::ConfusionMatrix(int64_t classes) : classes_(classes) {
  if (classes < 1) {
    throw ConfigError("confusion matrix: class count must be positive, got " +
                      std::to_string(classes));
  }
  counts_.assign(static_cast<size_t>(classes * classes), 0);
}

uint64_t ConfusionMatrix::at(int64_t truth, int64_t pred) const {
  if (truth < 0 || truth >= classes_ || pred < 0 || pred >= classes_) {
    throw Error("confusion matrix: cell (" + std::to_string(truth) + "," + std::to_string(pred) +
                ") outside " + std::to_string(classes_) + " classes");
  }
  return counts_[truth * classes_ + pred];
}

uint64_t ConfusionMatrix::total() const {
  uint64_t t = 0;
  for (uint64_t c : counts_) t += c;
  return t;
}

void ConfusionMatrix::add(int64_t truth, int64_t pred, uint64_t count) {
  if (truth < 0 || truth >= classes_) {
    throw Error("confusion matrix: true class " + std::to_string(truth) + " outside [0," +
                std::to_string(classes_) + ")");
  }
  if (pred < 0 || pred >= classes_) {
    throw Error("confusion matrix: predicted class " + std::to_string(pred) + " outside [0," +
                std::to_string(classes_) + ")");
  }
  counts_[truth * classes_ + pred] += count;
}

void ConfusionMatrix::accumulate(const std::vector<int32_t>& pred,
                                 const std::vector<int32_t>& truth,
                                 std::optional<int32_t> ignore_index) {
  if (pred.size() != truth.size()) {
    throw ShapeError("confusion matrix: " + std::to_string(pred.size()) + " predictions vs " +
                     std::to_string(truth.size()) + " truth pixels");
  }
  for (size_t i = 0; i < pred.size(); ++i) {
    if (ignore_index && truth[i] == *ignore_index) continue;
    add(truth[i], pred[i]);
  }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (other.classes_ != classes_) {
    throw ShapeError("confusion matrix: merging " + std::to_string(other.classes_) +
                     " classes into " + std::to_string(classes_));
  }
  for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

MetricReport report(const ConfusionMatrix& cm) {
  const int64_t C = cm.classes();
  MetricReport r;
  r.precision.resize(C);
  r.recall.resize(C);
  r.f1.resize(C);
  r.iou.resize(C);
  r.degenerate.resize(C);

  uint64_t trace = 0;
  for (int64_t c = 0; c < C; ++c) {
    const uint64_t tp = cm.at(c, c);
    uint64_t fp = 0, fn = 0;
    for (int64_t o = 0; o < C; ++o) {
      if (o == c) continue;
      fp += cm.at(o, c);
      fn += cm.at(c, o);
    }
    trace += tp;
    const uint64_t p_den = tp + fp, r_den = tp + fn, u_den = tp + fp + fn;
    r.degenerate[c] = p_den == 0 || r_den == 0;
    r.precision[c] = p_den ? static_cast<double>(tp) / static_cast<double>(p_den) : 0.0;
    r.recall[c] = r_den ? static_cast<double>(tp) / static_cast<double>(r_den) : 0.0;
    r.f1[c] = u_den ? 2.0 * static_cast<double>(tp) / static_cast<double>(u_den + tp) : 0.0;
    r.iou[c] = u_den ? static_cast<double>(tp) / static_cast<double>(u_den) : 0.0;
    r.mean_precision += r.precision[c];
    r.mean_recall += r.recall[c];
    r.mean_f1 += r.f1[c];
    r.mean_iou += r.iou[c];
  }
  r.mean_precision /= static_cast<double>(C);
  r.mean_recall /= static_cast<double>(C);
  r.mean_f1 /= static_cast<double>(C);
  r.mean_iou /= static_cast<double>(C);
  r.mean_class_accuracy = r.mean_recall;
  const uint64_t total = cm.total();
  r.overall_accuracy = total ? static_cast<double>(trace) / static_cast<double>(total) : 0.0;
  return r;
}

std::string report_csv(const MetricReport& r) {
  std::string out = "class,precision,recall,f1,iou\n";
  char line[160];
  for (size_t c = 0; c < r.precision.size(); ++c) {
    std::snprintf(line, sizeof(line), "%zu,%.6f,%.6f,%.6f,%.6f\n", c, r.precision[c], r.recall[c],
                  r.f1[c], r.iou[c]);
    out += line;
  }
  std::snprintf(line, sizeof(line), "mean,%.6f,%.6f,%.6f,%.6f\n", r.mean_precision, r.mean_recall,
                r.mean_f1, r.mean_iou);
  out += line;
  return out;
}

void write_report_csv(const std::string& path, const MetricReport& r) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open report '" + path + "' for writing");
  const std::string csv = report_csv(r);
  out.write(csv.data(), static_cast<std::streamsize>(csv.size()));
  out.flush();
  if (!out) throw IoError("write failed for report '" + path + "'");
}

}  // namespace dbda
