#include "dbda/model.hpp"

#include <algorithm>
#include <cmath>

#include "dbda/checkpoint.hpp"
#include "dbda/rng.hpp"

namespace dbda {

namespace {

constexpr double kArchFormat = 1.0;
constexpr const char* kArchEntry = "__arch__";

void validate(const ModelConfig& cfg) {
  if (cfg.classes < 2) {
    throw ConfigError("model: needs at least 2 classes, got " + std::to_string(cfg.classes));
  }
  if (cfg.width < 1 || cfg.blocks < 1) {
    throw ConfigError("model: width and blocks must be positive (width=" +
                      std::to_string(cfg.width) + ", blocks=" + std::to_string(cfg.blocks) + ")");
  }
  if (cfg.rates.empty()) {
    throw ConfigError("model: rate list is empty");
  }
  if (cfg.input < 2) {
    throw ConfigError("model: input size must be at least 2, got " + std::to_string(cfg.input));
  }
  const int64_t factor = cfg.downsample ? 2 : 1;
  if (cfg.input % factor != 0) {
    throw ConfigError("model: input size " + std::to_string(cfg.input) +
                      " not divisible by downsampling factor " + std::to_string(factor));
  }
  const int64_t feat = cfg.input / factor;
  for (int64_t r : cfg.rates) {
    if (r < 1) {
      throw ConfigError("model: dilation rate " + std::to_string(r) + " must be >= 1");
    }
    if (r > feat / 2) {
      throw ConfigError("model: dilation rate " + std::to_string(r) +
                        " exceeds half the feature-map width (" + std::to_string(feat) +
                        "/2) for input " + std::to_string(cfg.input));
    }
  }
}

}  // namespace

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.classes == b.classes && a.width == b.width && a.blocks == b.blocks &&
         a.rates == b.rates && a.downsample == b.downsample && a.input == b.input;
}

std::string describe(const ModelConfig& cfg) {
  std::string rates;
  for (size_t i = 0; i < cfg.rates.size(); ++i) {
    if (i) rates += ",";
    rates += std::to_string(cfg.rates[i]);
  }
  return "classes=" + std::to_string(cfg.classes) + " width=" + std::to_string(cfg.width) +
         " blocks=" + std::to_string(cfg.blocks) + " rates=" + rates +
         " downsample=" + (cfg.downsample ? "true" : "false") +
         " input=" + std::to_string(cfg.input);
}

SegModel SegModel::assemble(const ModelConfig& cfg) {
  validate(cfg);
  SegModel m;
  m.cfg_ = cfg;
  auto add_param = [&m](const std::string& name, Shape shape) {
    m.params_.emplace_back(name, Tensor::zeros(std::move(shape), true));
  };
  for (int64_t i = 0; i < cfg.blocks; ++i) {
    const int64_t cin = i == 0 ? 3 : cfg.width;
    const std::string base = "stem" + std::to_string(i + 1);
    add_param(base + ".weight", {cfg.width, cin, 3, 3});
    add_param(base + ".bias", {cfg.width});
  }
  for (size_t j = 0; j < cfg.rates.size(); ++j) {
    const std::string base = "aspp" + std::to_string(j + 1);
    add_param(base + ".weight", {cfg.classes, cfg.width, 3, 3});
    add_param(base + ".bias", {cfg.classes});
  }
  return m;
}

void SegModel::init_parameters(uint64_t seed) {
  Rng rng(seed);
  for (auto& [name, param] : params_) {
    auto& v = param.values_mut();
    const Shape& s = param.shape();
    if (s.size() == 4) {
      const double fan_in = static_cast<double>(s[1] * s[2] * s[3]);
      const double bound = 1.0 / std::sqrt(fan_in);
      for (double& x : v) x = rng.uniform(-bound, bound);
    } else {
      std::fill(v.begin(), v.end(), 0.0);
    }
  }
}

void SegModel::probe_gradients(uint64_t seed) const {
  // The probe input must be large enough that every dilated tap lands inside
  // the feature map at least once.
  int64_t max_rate = 1;
  for (int64_t r : cfg_.rates) max_rate = std::max(max_rate, r);
  const int64_t factor = downsample_factor();
  const int64_t side = factor * std::max<int64_t>(2 * max_rate, 4);

  Rng rng(Rng::mix(seed, 0x9B0BEULL));
  std::vector<double> xv(static_cast<size_t>(3 * side * side));
  for (double& v : xv) v = rng.uniform();
  Tensor x = Tensor::constant({1, 3, side, side}, std::move(xv));

  Tensor logits = forward(x);
  std::vector<double> wv(static_cast<size_t>(logits.size()));
  for (double& v : wv) v = rng.uniform(-1.0, 1.0);
  Tensor loss = sum(mul(logits, Tensor::constant(logits.shape(), std::move(wv))));

  for (const auto& [name, param] : params_) param.zero_grad();
  loss.backward();

  for (const auto& [name, param] : params_) {
    bool live = false;
    for (double g : param.grad()) {
      if (g != 0.0) {
        live = true;
        break;
      }
    }
    if (!live) {
      throw NumericError("model: parameter '" + name + "' received no gradient at init (" +
                         describe(cfg_) + ")");
    }
    param.zero_grad();
  }
}

SegModel SegModel::build(const ModelConfig& cfg, uint64_t seed) {
  SegModel m = assemble(cfg);
  m.init_parameters(seed);
  m.probe_gradients(seed);
  return m;
}

Tensor SegModel::forward(const Tensor& x) const {
  if (x.shape().size() != 4 || x.shape()[1] != 3) {
    throw ShapeError("model: expected B×3×H×W input, got shape " + shape_str(x.shape()));
  }
  const int64_t factor = downsample_factor();
  if (x.shape()[2] % factor != 0 || x.shape()[3] % factor != 0) {
    throw ShapeError("model: input shape " + shape_str(x.shape()) +
                     " not divisible by downsampling factor " + std::to_string(factor));
  }

  size_t p = 0;
  auto next_pair = [this, &p]() {
    const Tensor& w = params_[p].second;
    const Tensor& b = params_[p + 1].second;
    p += 2;
    return std::make_pair(w, b);
  };

  Tensor h = x;
  for (int64_t i = 0; i < cfg_.blocks; ++i) {
    auto [w, b] = next_pair();
    h = relu(conv2d(h, w, b, 1));
    if (i == 0 && cfg_.downsample) h = avg_pool2(h);
  }

  Tensor logits;
  for (size_t j = 0; j < cfg_.rates.size(); ++j) {
    auto [w, b] = next_pair();
    Tensor branch = conv2d(h, w, b, cfg_.rates[j]);
    logits = j == 0 ? branch : add(logits, branch);
  }
  if (cfg_.downsample) logits = upsample_nearest2(logits);
  return logits;
}

Tensor SegModel::parameter(const std::string& name) const {
  for (const auto& [n, t] : params_) {
    if (n == name) return t;
  }
  throw Error("model: no parameter named '" + name + "'");
}

std::vector<Tensor> SegModel::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto& [n, t] : params_) out.push_back(t);
  return out;
}

void SegModel::save(const std::string& path) const {
  std::vector<CheckpointEntry> entries;
  entries.reserve(params_.size() + 1);

  CheckpointEntry arch;
  arch.name = kArchEntry;
  arch.values = {kArchFormat,
                 static_cast<double>(cfg_.classes),
                 static_cast<double>(cfg_.width),
                 static_cast<double>(cfg_.blocks),
                 cfg_.downsample ? 1.0 : 0.0,
                 static_cast<double>(cfg_.input),
                 static_cast<double>(cfg_.rates.size())};
  for (int64_t r : cfg_.rates) arch.values.push_back(static_cast<double>(r));
  arch.shape = {static_cast<int64_t>(arch.values.size())};
  entries.push_back(std::move(arch));

  for (const auto& [name, t] : params_) {
    entries.push_back({name, t.shape(), t.values()});
  }
  write_checkpoint(path, entries);
}

SegModel SegModel::load(const std::string& path) {
  std::vector<CheckpointEntry> entries = read_checkpoint(path);
  if (entries.empty() || entries[0].name != kArchEntry) {
    throw IoError("checkpoint '" + path + "' is not a model checkpoint (missing architecture)");
  }
  const auto& a = entries[0].values;
  if (a.size() < 7 || a[0] != kArchFormat) {
    throw IoError("checkpoint '" + path + "' has an unrecognized architecture record");
  }
  ModelConfig cfg;
  cfg.classes = static_cast<int64_t>(a[1]);
  cfg.width = static_cast<int64_t>(a[2]);
  cfg.blocks = static_cast<int64_t>(a[3]);
  cfg.downsample = a[4] != 0.0;
  cfg.input = static_cast<int64_t>(a[5]);
  const auto n_rates = static_cast<size_t>(a[6]);
  if (a.size() != 7 + n_rates) {
    throw IoError("checkpoint '" + path + "' has a malformed architecture record");
  }
  cfg.rates.clear();
  for (size_t i = 0; i < n_rates; ++i) cfg.rates.push_back(static_cast<int64_t>(a[7 + i]));

  SegModel m = assemble(cfg);
  if (entries.size() - 1 != m.params_.size()) {
    throw IoError("checkpoint '" + path + "': " + std::to_string(entries.size() - 1) +
                  " parameters for architecture expecting " + std::to_string(m.params_.size()));
  }
  for (size_t i = 0; i < m.params_.size(); ++i) {
    const CheckpointEntry& e = entries[i + 1];
    auto& [name, t] = m.params_[i];
    if (e.name != name) {
      throw IoError("checkpoint '" + path + "': entry '" + e.name + "' where parameter '" + name +
                    "' was expected");
    }
    if (e.shape != t.shape()) {
      throw IoError("checkpoint '" + path + "': parameter '" + name + "' has shape " +
                    shape_str(e.shape) + ", architecture expects " + shape_str(t.shape()));
    }
    t.values_mut() = e.values;
  }
  return m;
}

}  // namespace dbda
