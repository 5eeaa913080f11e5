#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace dbda {

// counts[t][p] = pixels whose true class is t and predicted class is p.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int64_t classes);

  int64_t classes() const { return classes_; }
  uint64_t at(int64_t truth, int64_t pred) const;
  uint64_t total() const;

  void add(int64_t truth, int64_t pred, uint64_t count = 1);
  // pred and truth are equal-length flat index maps; pixels whose truth
  // equals ignore_index are skipped.
  void accumulate(const std::vector<int32_t>& pred, const std::vector<int32_t>& truth,
                  std::optional<int32_t> ignore_index = std::nullopt);
  void merge(const ConfusionMatrix& other);

 private:
  int64_t classes_;
  std::vector<uint64_t> counts_;
};

struct MetricReport {
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  std::vector<double> iou;
  // True where a zero denominator forced some metric of the class to 0.
  std::vector<bool> degenerate;
  double mean_precision = 0.0;
  double mean_recall = 0.0;
  double mean_f1 = 0.0;
  double mean_iou = 0.0;
  // Unweighted mean of per-class recall.
  double mean_class_accuracy = 0.0;
  // trace / total pixels.
  double overall_accuracy = 0.0;
};

MetricReport report(const ConfusionMatrix& cm);

// Header `class,precision,recall,f1,iou`, one row per class, then a `mean`
// row; every value printed with 6 decimals.
std::string report_csv(const MetricReport& r);
void write_report_csv(const std::string& path, const MetricReport& r);

}  // namespace dbda
