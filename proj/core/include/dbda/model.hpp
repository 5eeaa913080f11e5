#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dbda/tensor.hpp"

namespace dbda {

struct ModelConfig {
  int64_t classes = 4;
  int64_t width = 16;
  int64_t blocks = 3;
  std::vector<int64_t> rates = {1, 2, 4};
  bool downsample = true;
  // Expected square input size; dilation rates are validated against the
  // feature-map size this implies.
  int64_t input = 32;
};

bool operator==(const ModelConfig& a, const ModelConfig& b);
std::string describe(const ModelConfig& cfg);

// Stem of conv3x3+relu blocks (2x pooled after the first when downsample is
// set) feeding a head of parallel dilated 3x3 convolutions summed into C
// logit channels, then upsampled back to input resolution.
class SegModel {
 public:
  // Seeded fan-in uniform init; every parameter is then probed for a live
  // gradient path before the model is returned.
  static SegModel build(const ModelConfig& cfg, uint64_t seed);

  static SegModel load(const std::string& path);
  void save(const std::string& path) const;

  // x: B×3×H×W with H, W divisible by the downsampling factor -> B×C×H×W logits.
  Tensor forward(const Tensor& x) const;

  const ModelConfig& config() const { return cfg_; }
  int64_t downsample_factor() const { return cfg_.downsample ? 2 : 1; }

  const std::vector<std::pair<std::string, Tensor>>& parameters() const { return params_; }
  Tensor parameter(const std::string& name) const;
  std::vector<Tensor> parameter_tensors() const;

 private:
  SegModel() = default;
  static SegModel assemble(const ModelConfig& cfg);
  void init_parameters(uint64_t seed);
  void probe_gradients(uint64_t seed) const;

  ModelConfig cfg_;
  std::vector<std::pair<std::string, Tensor>> params_;
};

}  // namespace dbda
