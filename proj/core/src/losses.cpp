#include "dbda/losses.hpp"

#include <cmath>
#include <string>

namespace dbda {

namespace {

void check_probs_shape(const char* op, const Tensor& probs) {
  if (probs.shape().size() != 4) {
    throw ShapeError(std::string(op) + ": expected B×C×H×W probabilities, got shape " +
                     shape_str(probs.shape()));
  }
}

LossValue finish(Tensor t) {
  LossValue lv;
  lv.detached = t.item();
  lv.value = std::move(t);
  return lv;
}

}  // namespace

LossValue cross_entropy(const Tensor& probs, const std::vector<int32_t>& labels,
                        std::optional<int32_t> ignore_index) {
  check_probs_shape("cross_entropy", probs);
  const int64_t B = probs.shape()[0], C = probs.shape()[1];
  const int64_t H = probs.shape()[2], W = probs.shape()[3];
  if (static_cast<int64_t>(labels.size()) != B * H * W) {
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) +
                     " labels for probabilities of shape " + shape_str(probs.shape()));
  }

  std::vector<int64_t> picks;
  picks.reserve(labels.size());
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t i = 0; i < H * W; ++i) {
      const int32_t lab = labels[b * H * W + i];
      if (ignore_index && lab == *ignore_index) continue;
      if (lab < 0 || lab >= C) {
        throw ConfigError("cross_entropy: label " + std::to_string(lab) + " at pixel " +
                          std::to_string(b * H * W + i) + " outside [0," + std::to_string(C) +
                          ")");
      }
      picks.push_back((b * C + lab) * H * W + i);
    }
  }
  if (picks.empty()) {
    throw NumericError("cross_entropy: every pixel carries the ignore index");
  }

  const double inv_n = 1.0 / static_cast<double>(picks.size());
  Tensor picked = gather(probs, std::move(picks));
  Tensor loss = scale(sum(log(clamp(picked, kLossEps, 1.0))), -inv_n);
  return finish(std::move(loss));
}

LossValue pseudo_label_ce(const Tensor& probs_t, double threshold) {
  check_probs_shape("pseudo_label_ce", probs_t);
  if (!(threshold > 0.0 && threshold <= 1.0)) {
    throw ConfigError("pseudo_label_ce: threshold " + std::to_string(threshold) +
                      " outside (0,1]");
  }
  const int64_t B = probs_t.shape()[0], C = probs_t.shape()[1];
  const int64_t HW = probs_t.shape()[2] * probs_t.shape()[3];
  const auto& p = probs_t.values();

  constexpr int32_t kIgnore = -1;
  std::vector<int32_t> pseudo(static_cast<size_t>(B * HW), kIgnore);
  int64_t qualified = 0;
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t i = 0; i < HW; ++i) {
      int32_t best = 0;
      double best_p = p[(b * C) * HW + i];
      for (int64_t c = 1; c < C; ++c) {
        const double v = p[(b * C + c) * HW + i];
        if (v > best_p) {
          best_p = v;
          best = static_cast<int32_t>(c);
        }
      }
      if (best_p >= threshold) {
        pseudo[b * HW + i] = best;
        ++qualified;
      }
    }
  }

  if (qualified == 0) {
    LossValue lv;
    lv.value = Tensor::scalar(0.0);
    lv.detached = 0.0;
    lv.active = false;
    return lv;
  }
  return cross_entropy(probs_t, pseudo, kIgnore);
}

LossValue entropy_min(const Tensor& probs_t) {
  check_probs_shape("entropy_min", probs_t);
  const int64_t C = probs_t.shape()[1];
  if (C < 2) {
    throw ConfigError("entropy_min: needs at least 2 classes, got " + std::to_string(C));
  }
  const int64_t N = probs_t.shape()[0] * probs_t.shape()[2] * probs_t.shape()[3];
  const double norm = -1.0 / (static_cast<double>(N) * std::log(static_cast<double>(C)));
  Tensor plogp = mul(probs_t, log(clamp(probs_t, kLossEps, 1.0)));
  return finish(scale(sum(plogp), norm));
}

Tensor soft_class_counts(const Tensor& probs) {
  check_probs_shape("soft_class_counts", probs);
  return channel_sum(probs);
}

ClassDistribution soft_class_distribution(const Tensor& probs) {
  Tensor counts = soft_class_counts(probs);
  Tensor total = sum(counts);
  return ClassDistribution{div(counts, total)};
}

ClassDistribution distribution_from_values(const std::vector<double>& values) {
  if (values.empty()) {
    throw ShapeError("distribution_from_values: empty vector");
  }
  double total = 0.0;
  for (double v : values) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw NumericError("distribution_from_values: entry " + std::to_string(v) +
                         " outside [0,1]");
    }
    total += v;
  }
  if (std::abs(total - 1.0) > 1e-9) {
    throw NumericError("distribution_from_values: entries sum to " + std::to_string(total));
  }
  return ClassDistribution{
      Tensor::constant({static_cast<int64_t>(values.size())}, values)};
}

LossValue kl_distribution(const ClassDistribution& p_s, const ClassDistribution& p_t) {
  if (!p_s.probs.defined() || !p_t.probs.defined()) {
    throw Error("kl_distribution: undefined distribution");
  }
  if (p_s.probs.shape() != p_t.probs.shape()) {
    throw ShapeError("kl_distribution: lengths " + shape_str(p_s.probs.shape()) + " and " +
                     shape_str(p_t.probs.shape()) + " differ");
  }
  const int64_t C = p_s.probs.size();
  Tensor log_ratio = sub(log(clamp(p_s.probs, kLossEps, 1.0)), log(clamp(p_t.probs, kLossEps, 1.0)));
  Tensor loss = scale(sum(mul(p_s.probs, log_ratio)), 1.0 / static_cast<double>(C));
  return finish(std::move(loss));
}

}  // namespace dbda
