#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dbda/tensor.hpp"

namespace dbda {

// Floor for probabilities entering a log.
inline constexpr double kLossEps = 1e-12;

// Scalar loss term: graph-connected tensor plus its plain value for logging.
// active is false only for the pseudo-label marker when no pixel qualifies;
// such a term contributes nothing and carries no gradient.
struct LossValue {
  Tensor value;
  double detached = 0.0;
  bool active = true;
};

// Normalized soft class mass; probs is a C-vector tensor summing to 1.
struct ClassDistribution {
  Tensor probs;
};

// Mean negative log-probability of the true class over non-ignored pixels.
// probs: B×C×H×W softmax output; labels: B·H·W class indices, row-major.
// Labels equal to ignore_index are skipped. Errors: label outside [0,C),
// every pixel ignored.
LossValue cross_entropy(const Tensor& probs, const std::vector<int32_t>& labels,
                        std::optional<int32_t> ignore_index = std::nullopt);

// Self-training loss: pixels whose top probability reaches the threshold are
// scored against their argmax class (ties take the lowest class index);
// everything else is ignored. Returns an inactive zero marker when no pixel
// qualifies. threshold must lie in (0,1].
LossValue pseudo_label_ce(const Tensor& probs_t, double threshold);

// Mean per-pixel Shannon entropy normalized by log C, so the result lies in
// [0,1]: 1 at uniform, 0 at one-hot. Requires C >= 2.
LossValue entropy_min(const Tensor& probs_t);

// Per-channel probability mass summed over batch and space (C-vector);
// entries total B·H·W for softmax input.
Tensor soft_class_counts(const Tensor& probs);

// Soft counts normalized to sum 1; the normalization stays in the graph.
ClassDistribution soft_class_distribution(const Tensor& probs);

// Wraps a plain vector as a distribution, validating entries in [0,1] and
// sum 1 within 1e-9.
ClassDistribution distribution_from_values(const std::vector<double>& values);

// (1/C) Σ_c p_s[c]·log(p_s[c]/p_t[c]), both log arguments floored at eps.
// Nonnegative; exactly 0 for identical inputs.
LossValue kl_distribution(const ClassDistribution& p_s, const ClassDistribution& p_t);

}  // namespace dbda
