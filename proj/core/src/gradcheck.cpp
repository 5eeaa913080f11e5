#include "dbda/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <utility>

#include "dbda/log.hpp"
#include "dbda/losses.hpp"
#include "dbda/model.hpp"

namespace dbda {

GradCheckResult check_gradients(const std::string& name, const GraphFn& fn,
                                const std::vector<Tensor>& inputs, int64_t min_coords, Rng& rng,
                                double rel_tol, double step) {
  const auto t0 = std::chrono::steady_clock::now();

  Tensor out = fn(inputs);
  if (out.size() != 1) {
    throw ShapeError("gradient check '" + name + "': graph output must be a single element");
  }
  for (const Tensor& t : inputs) t.zero_grad();
  out.backward();

  std::vector<std::vector<double>> analytic;
  analytic.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    analytic.push_back(t.grad().empty() ? std::vector<double>(static_cast<size_t>(t.size()), 0.0)
                                        : t.grad());
  }

  std::vector<std::pair<size_t, size_t>> coords;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (int64_t j = 0; j < inputs[i].size(); ++j) {
      coords.emplace_back(i, static_cast<size_t>(j));
    }
  }
  rng.shuffle(coords);
  const size_t n = std::min(coords.size(), static_cast<size_t>(std::max<int64_t>(min_coords, 0)));

  GradCheckResult r;
  r.name = name;
  r.coords = static_cast<int64_t>(n);
  for (size_t k = 0; k < n; ++k) {
    const auto [i, j] = coords[k];
    Tensor leaf = inputs[i];
    auto& vals = leaf.values_mut();
    const double orig = vals[j];
    vals[j] = orig + step;
    const double f_plus = fn(inputs).item();
    vals[j] = orig - step;
    const double f_minus = fn(inputs).item();
    vals[j] = orig;
    const double numeric = (f_plus - f_minus) / (2.0 * step);
    const double abs_err = std::fabs(analytic[i][j] - numeric);
    const double rel = abs_err / std::max(1.0, std::fabs(numeric));
    r.max_abs_err = std::max(r.max_abs_err, abs_err);
    r.max_rel_err = std::max(r.max_rel_err, rel);
  }
  r.pass = r.max_rel_err <= rel_tol;
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return r;
}

namespace {

std::vector<double> rand_values(int64_t n, Rng& rng, double lo, double hi) {
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

Tensor rand_param(Shape shape, Rng& rng, double lo, double hi) {
  const int64_t n = shape_size(shape);
  return Tensor::parameter(std::move(shape), rand_values(n, rng, lo, hi));
}

Tensor rand_const(Shape shape, Rng& rng, double lo, double hi) {
  const int64_t n = shape_size(shape);
  return Tensor::constant(std::move(shape), rand_values(n, rng, lo, hi));
}

// Weighted sum reduces any output to a scalar with a dense, nonuniform
// gradient path.
Tensor wsum(const Tensor& t, const Tensor& w) { return sum(mul(t, w)); }

struct Setup {
  GraphFn fn;
  std::vector<Tensor> inputs;
  double rel_tol = 1e-4;
  double step = 1e-5;
};

using Builder = std::function<Setup(Rng&)>;

struct CheckSpec {
  std::string name;
  std::string scope;
  int attempts;
  Builder build;
};

// Keeps sampled values away from a point where the op's derivative jumps, so
// no central difference straddles it.
double away_from(Rng& rng, double lo, double hi, std::initializer_list<double> kinks,
                 double margin) {
  while (true) {
    const double v = rng.uniform(lo, hi);
    bool ok = true;
    for (double k : kinks) {
      if (std::fabs(v - k) < margin) ok = false;
    }
    if (ok) return v;
  }
}

Tensor guarded_param(Shape shape, Rng& rng, double lo, double hi,
                     std::initializer_list<double> kinks, double margin) {
  const int64_t n = shape_size(shape);
  std::vector<double> v(static_cast<size_t>(n));
  for (double& x : v) x = away_from(rng, lo, hi, kinks, margin);
  return Tensor::parameter(std::move(shape), v);
}

Setup elementwise_pair(Rng& rng, Tensor (*op)(const Tensor&, const Tensor&)) {
  const Shape s = {2, 3, 20};
  Tensor a = rand_param(s, rng, -1.0, 1.0);
  Tensor b = rand_param(s, rng, -1.0, 1.0);
  Tensor w = rand_const(s, rng, -1.0, 1.0);
  return {[op, w](const std::vector<Tensor>& in) { return wsum(op(in[0], in[1]), w); }, {a, b}};
}

std::vector<CheckSpec> check_specs() {
  std::vector<CheckSpec> specs;
  auto add = [&specs](const char* name, const char* scope, int attempts, Builder b) {
    specs.push_back({name, scope, attempts, std::move(b)});
  };

  add("add", "ops", 1, [](Rng& rng) { return elementwise_pair(rng, &dbda::add); });
  add("sub", "ops", 1, [](Rng& rng) { return elementwise_pair(rng, &dbda::sub); });
  add("mul", "ops", 1, [](Rng& rng) { return elementwise_pair(rng, &dbda::mul); });
  add("scale", "ops", 1, [](Rng& rng) -> Setup {
    const Shape s = {2, 3, 20};
    Tensor a = rand_param(s, rng, -1.0, 1.0);
    Tensor w = rand_const(s, rng, -1.0, 1.0);
    return {[w](const std::vector<Tensor>& in) { return wsum(scale(in[0], -1.7), w); }, {a}};
  });
  add("div", "ops", 1, [](Rng& rng) -> Setup {
    const Shape s = {2, 3, 20};
    Tensor a = rand_param(s, rng, -1.0, 1.0);
    Tensor b = rand_param(s, rng, 0.5, 2.0);
    Tensor w = rand_const(s, rng, -1.0, 1.0);
    return {[w](const std::vector<Tensor>& in) { return wsum(div(in[0], in[1]), w); }, {a, b}};
  });
  add("div_scalar", "ops", 1, [](Rng& rng) -> Setup {
    const Shape s = {127};
    Tensor a = rand_param(s, rng, -1.0, 1.0);
    Tensor b = rand_param({1}, rng, 0.5, 2.0);
    Tensor w = rand_const(s, rng, -1.0, 1.0);
    return {[w](const std::vector<Tensor>& in) { return wsum(div(in[0], in[1]), w); }, {a, b}};
  });
  add("clamp", "ops", 1, [](Rng& rng) -> Setup {
    const Shape s = {150};
    Tensor a = guarded_param(s, rng, -1.0, 1.0, {-0.5, 0.5}, 0.06);
    Tensor w = rand_const(s, rng, -1.0, 1.0);
    return {[w](const std::vector<Tensor>& in) { return wsum(clamp(in[0], -0.5, 0.5), w); }, {a}};
  });
  add("log", "ops", 1, [](Rng& rng) -> Setup {
    const Shape s = {120};
    Tensor a = rand_param(s, rng, 0.2, 3.0);
    Tensor w = rand_const(s, rng, -1.0, 1.0);
    return {[w](const std::vector<Tensor>& in) { return wsum(log(in[0]), w); }, {a}};
  });
  add("relu", "ops", 1, [](Rng& rng) -> Setup {
    const Shape s = {150};
    Tensor a = guarded_param(s, rng, -1.0, 1.0, {0.0}, 0.05);
    Tensor w = rand_const(s, rng, -1.0, 1.0);
    return {[w](const std::vector<Tensor>& in) { return wsum(relu(in[0]), w); }, {a}};
  });
  add("matmul", "ops", 1, [](Rng& rng) -> Setup {
    Tensor a = rand_param({8, 6}, rng, -1.0, 1.0);
    Tensor b = rand_param({6, 9}, rng, -1.0, 1.0);
    Tensor w = rand_const({8, 9}, rng, -1.0, 1.0);
    return {[w](const std::vector<Tensor>& in) { return wsum(matmul(in[0], in[1]), w); }, {a, b}};
  });
  add("conv2d", "ops", 1, [](Rng& rng) -> Setup {
    Tensor x = rand_param({1, 2, 5, 5}, rng, -1.0, 1.0);
    Tensor k = rand_param({3, 2, 3, 3}, rng, -1.0, 1.0);
    Tensor b = rand_param({3}, rng, -0.5, 0.5);
    Tensor w = rand_const({1, 3, 5, 5}, rng, -1.0, 1.0);
    return {[w](const std::vector<Tensor>& in) { return wsum(conv2d(in[0], in[1], in[2]), w); },
            {x, k, b}};
  });
  add("conv2d_dilated", "ops", 1, [](Rng& rng) -> Setup {
    Tensor x = rand_param({1, 2, 8, 8}, rng, -1.0, 1.0);
    Tensor k = rand_param({2, 2, 3, 3}, rng, -1.0, 1.0);
    Tensor w = rand_const({1, 2, 8, 8}, rng, -1.0, 1.0);
    return {[w](const std::vector<Tensor>& in) { return wsum(conv2d(in[0], in[1], 2), w); },
            {x, k}};
  });
  add("avg_pool2", "ops", 1, [](Rng& rng) -> Setup {
    Tensor x = rand_param({1, 2, 8, 8}, rng, -1.0, 1.0);
    Tensor w = rand_const({1, 2, 4, 4}, rng, -1.0, 1.0);
    return {[w](const std::vector<Tensor>& in) { return wsum(avg_pool2(in[0]), w); }, {x}};
  });
  add("upsample_nearest2", "ops", 1, [](Rng& rng) -> Setup {
    Tensor x = rand_param({1, 3, 6, 6}, rng, -1.0, 1.0);
    Tensor w = rand_const({1, 3, 12, 12}, rng, -1.0, 1.0);
    return {[w](const std::vector<Tensor>& in) { return wsum(upsample_nearest2(in[0]), w); }, {x}};
  });
  add("softmax_channel", "ops", 1, [](Rng& rng) -> Setup {
    Tensor x = rand_param({1, 3, 6, 6}, rng, -2.0, 2.0);
    Tensor w = rand_const({1, 3, 6, 6}, rng, -1.0, 1.0);
    return {[w](const std::vector<Tensor>& in) { return wsum(softmax_channel(in[0]), w); }, {x}};
  });
  add("sum", "ops", 1, [](Rng& rng) -> Setup {
    Tensor a = rand_param({120}, rng, -1.0, 1.0);
    return {[](const std::vector<Tensor>& in) { return sum(in[0]); }, {a}};
  });
  add("channel_sum", "ops", 1, [](Rng& rng) -> Setup {
    Tensor x = rand_param({2, 3, 5, 4}, rng, -1.0, 1.0);
    Tensor w = rand_const({3}, rng, -1.0, 1.0);
    return {[w](const std::vector<Tensor>& in) { return wsum(channel_sum(in[0]), w); }, {x}};
  });
  add("gather", "ops", 1, [](Rng& rng) -> Setup {
    Tensor t = rand_param({128}, rng, -1.0, 1.0);
    std::vector<int64_t> idx(100);
    for (int64_t& i : idx) i = static_cast<int64_t>(rng.below(128));
    Tensor w = rand_const({100}, rng, -1.0, 1.0);
    return {[w, idx](const std::vector<Tensor>& in) { return wsum(gather(in[0], idx), w); }, {t}};
  });

  add("cross_entropy", "losses", 1, [](Rng& rng) -> Setup {
    Tensor logits = rand_param({2, 4, 4, 4}, rng, -2.0, 2.0);
    std::vector<int32_t> labels(2 * 4 * 4);
    for (int32_t& l : labels) {
      l = rng.uniform() < 0.125 ? -1 : static_cast<int32_t>(rng.below(4));
    }
    labels[0] = 0;
    return {[labels](const std::vector<Tensor>& in) {
              return cross_entropy(softmax_channel(in[0]), labels, -1).value;
            },
            {logits}};
  });
  add("pseudo_label_ce", "losses", 1, [](Rng& rng) -> Setup {
    // Per pixel either one sharply dominant logit (safely above the 0.5
    // threshold) or three near-uniform logits (safely below), so no central
    // difference can flip a pixel in or out of the loss.
    const int64_t C = 3, HW = 36;
    std::vector<double> v(static_cast<size_t>(C * HW));
    for (int64_t p = 0; p < HW; ++p) {
      const bool confident = p == 0 || rng.uniform() < 0.6;
      const auto top = static_cast<int64_t>(rng.below(3));
      for (int64_t c = 0; c < C; ++c) {
        v[static_cast<size_t>(c * HW + p)] =
            confident ? (c == top ? 2.2 + rng.uniform(0.0, 0.3) : rng.uniform(-0.4, 0.4))
                      : rng.uniform(-0.25, 0.25);
      }
    }
    Tensor logits = Tensor::parameter({1, C, 6, 6}, v);
    return {[](const std::vector<Tensor>& in) {
              return pseudo_label_ce(softmax_channel(in[0]), 0.5).value;
            },
            {logits}};
  });
  add("entropy_min", "losses", 1, [](Rng& rng) -> Setup {
    Tensor logits = rand_param({2, 3, 4, 5}, rng, -2.0, 2.0);
    return {[](const std::vector<Tensor>& in) {
              return entropy_min(softmax_channel(in[0])).value;
            },
            {logits}};
  });
  add("distribution_kl", "losses", 1, [](Rng& rng) -> Setup {
    Tensor ls = rand_param({1, 4, 4, 4}, rng, -2.0, 2.0);
    Tensor lt = rand_param({1, 4, 4, 4}, rng, -2.0, 2.0);
    return {[](const std::vector<Tensor>& in) {
              return kl_distribution(soft_class_distribution(softmax_channel(in[0])),
                                     soft_class_distribution(softmax_channel(in[1])))
                  .value;
            },
            {ls, lt}};
  });

  add("model_forward", "model", 3, [](Rng& rng) -> Setup {
    ModelConfig mc;
    mc.classes = 3;
    mc.width = 4;
    mc.blocks = 2;
    mc.rates = {1, 2};
    mc.downsample = true;
    mc.input = 8;
    SegModel model = SegModel::build(mc, rng.next());
    Tensor x = rand_const({1, 3, 8, 8}, rng, 0.0, 1.0);
    Tensor w = rand_const({1, 3, 8, 8}, rng, -1.0, 1.0);
    return {[model, x, w](const std::vector<Tensor>&) { return wsum(model.forward(x), w); },
            model.parameter_tensors()};
  });
  add("joint_objective", "model", 3, [](Rng& rng) -> Setup {
    ModelConfig mc;
    mc.classes = 4;
    mc.width = 4;
    mc.blocks = 2;
    mc.rates = {1, 2};
    mc.downsample = true;
    mc.input = 16;
    SegModel model = SegModel::build(mc, rng.next());
    Tensor xs = rand_const({2, 3, 16, 16}, rng, 0.0, 1.0);
    Tensor xt = rand_const({2, 3, 16, 16}, rng, 0.0, 1.0);
    std::vector<int32_t> labels(2 * 16 * 16);
    for (int32_t& l : labels) l = static_cast<int32_t>(rng.below(4));
    Setup s;
    s.fn = [model, xs, xt, labels](const std::vector<Tensor>&) {
      Tensor ps = softmax_channel(model.forward(xs));
      Tensor pt = softmax_channel(model.forward(xt));
      Tensor total = cross_entropy(ps, labels).value;
      total = dbda::add(total, scale(entropy_min(pt).value, 0.5));
      total = dbda::add(
          total,
          scale(kl_distribution(soft_class_distribution(ps), soft_class_distribution(pt)).value,
                0.5));
      return total;
    };
    s.inputs = model.parameter_tensors();
    s.step = 1e-6;
    return s;
  });

  return specs;
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck(const std::string& scope, uint64_t seed) {
  if (scope != "ops" && scope != "losses" && scope != "model" && scope != "all") {
    throw ConfigError("unknown gradient check scope '" + scope +
                      "' (expected ops, losses, model, or all)");
  }
  std::vector<GradCheckResult> results;
  uint64_t spec_index = 0;
  for (const CheckSpec& spec : check_specs()) {
    ++spec_index;
    if (scope != "all" && scope != spec.scope) continue;
    GradCheckResult result;
    for (int attempt = 0; attempt < spec.attempts; ++attempt) {
      const uint64_t s = Rng::mix(seed, spec_index * 16 + static_cast<uint64_t>(attempt));
      Rng build_rng(Rng::mix(s, 0xb01dULL));
      Setup setup = spec.build(build_rng);
      Rng pick_rng(Rng::mix(s, 0x91c3ULL));
      result = check_gradients(spec.name, setup.fn, setup.inputs, 100, pick_rng, setup.rel_tol,
                               setup.step);
      if (result.pass) break;
      log_debug("gradient check %s attempt %d: max rel err %.3g", spec.name.c_str(), attempt + 1,
                result.max_rel_err);
    }
    results.push_back(result);
  }
  return results;
}

bool all_passed(const std::vector<GradCheckResult>& results) {
  for (const GradCheckResult& r : results) {
    if (!r.pass) return false;
  }
  return true;
}

}  // namespace dbda
