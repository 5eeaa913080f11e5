#include <algorithm>
#include <cmath>
#include <utility>

#include "dbda/tensor.hpp"

namespace dbda {

namespace {

void check_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()) + " differ");
  }
}

void check_rank4(const char* op, const Tensor& t) {
  if (t.shape().size() != 4) {
    throw ShapeError(std::string(op) + ": expected a B×C×H×W tensor, got shape " +
                     shape_str(t.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape("add", a, b);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] + bv[i];
  return make_op("add", {a, b}, a.shape(), std::move(out), [](OpCtx& ctx) {
    const auto& g = ctx.out_grad();
    for (size_t p = 0; p < 2; ++p) {
      if (!ctx.parent_needs_grad(p)) continue;
      auto& d = ctx.parent_grad(p);
      for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape("sub", a, b);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] - bv[i];
  return make_op("sub", {a, b}, a.shape(), std::move(out), [](OpCtx& ctx) {
    const auto& g = ctx.out_grad();
    if (ctx.parent_needs_grad(0)) {
      auto& d = ctx.parent_grad(0);
      for (size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (ctx.parent_needs_grad(1)) {
      auto& d = ctx.parent_grad(1);
      for (size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape("mul", a, b);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * bv[i];
  return make_op("mul", {a, b}, a.shape(), std::move(out), [](OpCtx& ctx) {
    const auto& g = ctx.out_grad();
    const auto& av = ctx.parent_values(0);
    const auto& bv = ctx.parent_values(1);
    if (ctx.parent_needs_grad(0)) {
      auto& d = ctx.parent_grad(0);
      for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (ctx.parent_needs_grad(1)) {
      auto& d = ctx.parent_grad(1);
      for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Tensor div(const Tensor& a, const Tensor& b) {
  const bool scalar_b = b.size() == 1;
  if (!scalar_b) check_same_shape("div", a, b);
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] / bv[scalar_b ? 0 : i];
  return make_op("div", {a, b}, a.shape(), std::move(out), [scalar_b](OpCtx& ctx) {
    const auto& g = ctx.out_grad();
    const auto& av = ctx.parent_values(0);
    const auto& bv = ctx.parent_values(1);
    if (ctx.parent_needs_grad(0)) {
      auto& d = ctx.parent_grad(0);
      for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] / bv[scalar_b ? 0 : i];
    }
    if (ctx.parent_needs_grad(1)) {
      auto& d = ctx.parent_grad(1);
      for (size_t i = 0; i < g.size(); ++i) {
        const double bi = bv[scalar_b ? 0 : i];
        d[scalar_b ? 0 : i] -= g[i] * av[i] / (bi * bi);
      }
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] * s;
  return make_op("scale", {a}, a.shape(), std::move(out), [s](OpCtx& ctx) {
    if (!ctx.parent_needs_grad(0)) return;
    const auto& g = ctx.out_grad();
    auto& d = ctx.parent_grad(0);
    for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] * s;
  });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  if (!(lo <= hi)) {
    throw Error("clamp: lo " + std::to_string(lo) + " exceeds hi " + std::to_string(hi));
  }
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = std::min(std::max(av[i], lo), hi);
  return make_op("clamp", {a}, a.shape(), std::move(out), [lo, hi](OpCtx& ctx) {
    if (!ctx.parent_needs_grad(0)) return;
    const auto& g = ctx.out_grad();
    const auto& av = ctx.parent_values(0);
    auto& d = ctx.parent_grad(0);
    for (size_t i = 0; i < g.size(); ++i) {
      if (av[i] >= lo && av[i] <= hi) d[i] += g[i];
    }
  });
}

Tensor log(const Tensor& a) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) {
    if (!(av[i] > 0.0)) {
      throw NumericError("log: non-positive input " + std::to_string(av[i]) + " at index " +
                         std::to_string(i));
    }
    out[i] = std::log(av[i]);
  }
  return make_op("log", {a}, a.shape(), std::move(out), [](OpCtx& ctx) {
    if (!ctx.parent_needs_grad(0)) return;
    const auto& g = ctx.out_grad();
    const auto& av = ctx.parent_values(0);
    auto& d = ctx.parent_grad(0);
    for (size_t i = 0; i < g.size(); ++i) d[i] += g[i] / av[i];
  });
}

Tensor relu(const Tensor& a) {
  const auto& av = a.values();
  std::vector<double> out(av.size());
  for (size_t i = 0; i < av.size(); ++i) out[i] = av[i] > 0.0 ? av[i] : 0.0;
  return make_op("relu", {a}, a.shape(), std::move(out), [](OpCtx& ctx) {
    if (!ctx.parent_needs_grad(0)) return;
    const auto& g = ctx.out_grad();
    const auto& av = ctx.parent_values(0);
    auto& d = ctx.parent_grad(0);
    for (size_t i = 0; i < g.size(); ++i) {
      if (av[i] > 0.0) d[i] += g[i];
    }
  });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.shape().size() != 2 || b.shape().size() != 2 || a.shape()[1] != b.shape()[0]) {
    throw ShapeError("matmul: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                     " do not conform");
  }
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  const auto& av = a.values();
  const auto& bv = b.values();
  std::vector<double> out(static_cast<size_t>(m * n), 0.0);
  for (int64_t i = 0; i < m; ++i) {
    for (int64_t l = 0; l < k; ++l) {
      const double ail = av[i * k + l];
      for (int64_t j = 0; j < n; ++j) out[i * n + j] += ail * bv[l * n + j];
    }
  }
  return make_op("matmul", {a, b}, {m, n}, std::move(out), [m, k, n](OpCtx& ctx) {
    const auto& g = ctx.out_grad();
    const auto& av = ctx.parent_values(0);
    const auto& bv = ctx.parent_values(1);
    if (ctx.parent_needs_grad(0)) {
      auto& da = ctx.parent_grad(0);
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t j = 0; j < n; ++j) {
          const double gij = g[i * n + j];
          for (int64_t l = 0; l < k; ++l) da[i * k + l] += gij * bv[l * n + j];
        }
      }
    }
    if (ctx.parent_needs_grad(1)) {
      auto& db = ctx.parent_grad(1);
      for (int64_t i = 0; i < m; ++i) {
        for (int64_t l = 0; l < k; ++l) {
          const double ail = av[i * k + l];
          for (int64_t j = 0; j < n; ++j) db[l * n + j] += ail * g[i * n + j];
        }
      }
    }
  });
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, const Tensor& bias, int64_t dilation) {
  check_rank4("conv2d", input);
  if (kernel.shape().size() != 4 || kernel.shape()[2] != kernel.shape()[3]) {
    throw ShapeError("conv2d: kernel must be Cout×Cin×k×k, got shape " + shape_str(kernel.shape()));
  }
  if (input.shape()[1] != kernel.shape()[1]) {
    throw ShapeError("conv2d: input " + shape_str(input.shape()) + " incompatible with kernel " +
                     shape_str(kernel.shape()) + " (channel mismatch)");
  }
  const int64_t k = kernel.shape()[2];
  if (k % 2 == 0) {
    throw ShapeError("conv2d: kernel size must be odd for same padding, got " + std::to_string(k));
  }
  if (dilation < 1) {
    throw ShapeError("conv2d: dilation must be >= 1, got " + std::to_string(dilation));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{kernel.shape()[0]}) {
    throw ShapeError("conv2d: bias shape " + shape_str(bias.shape()) + " must be [" +
                     std::to_string(kernel.shape()[0]) + "] for kernel " +
                     shape_str(kernel.shape()));
  }

  const int64_t B = input.shape()[0], Ci = input.shape()[1];
  const int64_t H = input.shape()[2], W = input.shape()[3];
  const int64_t Co = kernel.shape()[0];
  const int64_t c = k / 2, d = dilation;

  const auto& in = input.values();
  const auto& wv = kernel.values();
  std::vector<double> out(static_cast<size_t>(B * Co * H * W), 0.0);

  for (int64_t b = 0; b < B; ++b) {
    for (int64_t co = 0; co < Co; ++co) {
      double* out_plane = out.data() + (b * Co + co) * H * W;
      if (has_bias) {
        const double bv = bias.values()[co];
        std::fill(out_plane, out_plane + H * W, bv);
      }
      for (int64_t ci = 0; ci < Ci; ++ci) {
        const double* in_plane = in.data() + (b * Ci + ci) * H * W;
        for (int64_t ky = 0; ky < k; ++ky) {
          const int64_t dy = d * (ky - c);
          const int64_t y0 = std::max<int64_t>(0, -dy), y1 = std::min(H, H - dy);
          for (int64_t kx = 0; kx < k; ++kx) {
            const double w = wv[((co * Ci + ci) * k + ky) * k + kx];
            if (w == 0.0) continue;
            const int64_t dx = d * (kx - c);
            const int64_t x0 = std::max<int64_t>(0, -dx), x1 = std::min(W, W - dx);
            for (int64_t y = y0; y < y1; ++y) {
              const double* in_row = in_plane + (y + dy) * W + dx;
              double* out_row = out_plane + y * W;
              for (int64_t x = x0; x < x1; ++x) out_row[x] += w * in_row[x];
            }
          }
        }
      }
    }
  }

  std::vector<Tensor> parents = {input, kernel};
  if (has_bias) parents.push_back(bias);
  auto backward = [B, Ci, Co, H, W, k, c, d, has_bias](OpCtx& ctx) {
    const auto& g = ctx.out_grad();
    const auto& in = ctx.parent_values(0);
    const auto& wv = ctx.parent_values(1);
    const bool need_in = ctx.parent_needs_grad(0);
    const bool need_w = ctx.parent_needs_grad(1);
    if (need_in || need_w) {
      double* din = need_in ? ctx.parent_grad(0).data() : nullptr;
      double* dw = need_w ? ctx.parent_grad(1).data() : nullptr;
      for (int64_t b = 0; b < B; ++b) {
        for (int64_t co = 0; co < Co; ++co) {
          const double* g_plane = g.data() + (b * Co + co) * H * W;
          for (int64_t ci = 0; ci < Ci; ++ci) {
            const double* in_plane = in.data() + (b * Ci + ci) * H * W;
            double* din_plane = need_in ? din + (b * Ci + ci) * H * W : nullptr;
            for (int64_t ky = 0; ky < k; ++ky) {
              const int64_t dy = d * (ky - c);
              const int64_t y0 = std::max<int64_t>(0, -dy), y1 = std::min(H, H - dy);
              for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t widx = ((co * Ci + ci) * k + ky) * k + kx;
                const double w = wv[widx];
                const int64_t dx = d * (kx - c);
                const int64_t x0 = std::max<int64_t>(0, -dx), x1 = std::min(W, W - dx);
                double wacc = 0.0;
                for (int64_t y = y0; y < y1; ++y) {
                  const double* g_row = g_plane + y * W;
                  const double* in_row = in_plane + (y + dy) * W + dx;
                  if (need_in && w != 0.0) {
                    double* din_row = din_plane + (y + dy) * W + dx;
                    for (int64_t x = x0; x < x1; ++x) din_row[x] += w * g_row[x];
                  }
                  if (need_w) {
                    for (int64_t x = x0; x < x1; ++x) wacc += g_row[x] * in_row[x];
                  }
                }
                if (need_w) dw[widx] += wacc;
              }
            }
          }
        }
      }
    }
    if (has_bias && ctx.parent_needs_grad(2)) {
      auto& db = ctx.parent_grad(2);
      for (int64_t b = 0; b < B; ++b) {
        for (int64_t co = 0; co < Co; ++co) {
          const double* g_plane = g.data() + (b * Co + co) * H * W;
          double acc = 0.0;
          for (int64_t i = 0; i < H * W; ++i) acc += g_plane[i];
          db[co] += acc;
        }
      }
    }
  };
  return make_op("conv2d", std::move(parents), {B, Co, H, W}, std::move(out), std::move(backward));
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, int64_t dilation) {
  return conv2d(input, kernel, Tensor(), dilation);
}

Tensor avg_pool2(const Tensor& input) {
  check_rank4("avg_pool2", input);
  const int64_t B = input.shape()[0], C = input.shape()[1];
  const int64_t H = input.shape()[2], W = input.shape()[3];
  if (H % 2 != 0 || W % 2 != 0) {
    throw ShapeError("avg_pool2: spatial size must be even, got shape " + shape_str(input.shape()));
  }
  const int64_t Ho = H / 2, Wo = W / 2;
  const auto& in = input.values();
  std::vector<double> out(static_cast<size_t>(B * C * Ho * Wo));
  for (int64_t p = 0; p < B * C; ++p) {
    const double* in_plane = in.data() + p * H * W;
    double* out_plane = out.data() + p * Ho * Wo;
    for (int64_t y = 0; y < Ho; ++y) {
      for (int64_t x = 0; x < Wo; ++x) {
        const double* r0 = in_plane + (2 * y) * W + 2 * x;
        const double* r1 = r0 + W;
        out_plane[y * Wo + x] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
    }
  }
  return make_op("avg_pool2", {input}, {B, C, Ho, Wo}, std::move(out),
                 [B, C, H, W, Ho, Wo](OpCtx& ctx) {
                   if (!ctx.parent_needs_grad(0)) return;
                   const auto& g = ctx.out_grad();
                   double* din = ctx.parent_grad(0).data();
                   for (int64_t p = 0; p < B * C; ++p) {
                     const double* g_plane = g.data() + p * Ho * Wo;
                     double* din_plane = din + p * H * W;
                     for (int64_t y = 0; y < Ho; ++y) {
                       for (int64_t x = 0; x < Wo; ++x) {
                         const double gv = 0.25 * g_plane[y * Wo + x];
                         double* r0 = din_plane + (2 * y) * W + 2 * x;
                         double* r1 = r0 + W;
                         r0[0] += gv;
                         r0[1] += gv;
                         r1[0] += gv;
                         r1[1] += gv;
                       }
                     }
                   }
                 });
}

Tensor upsample_nearest2(const Tensor& input) {
  check_rank4("upsample_nearest2", input);
  const int64_t B = input.shape()[0], C = input.shape()[1];
  const int64_t H = input.shape()[2], W = input.shape()[3];
  const int64_t Ho = 2 * H, Wo = 2 * W;
  const auto& in = input.values();
  std::vector<double> out(static_cast<size_t>(B * C * Ho * Wo));
  for (int64_t p = 0; p < B * C; ++p) {
    const double* in_plane = in.data() + p * H * W;
    double* out_plane = out.data() + p * Ho * Wo;
    for (int64_t y = 0; y < H; ++y) {
      for (int64_t x = 0; x < W; ++x) {
        const double v = in_plane[y * W + x];
        double* r0 = out_plane + (2 * y) * Wo + 2 * x;
        double* r1 = r0 + Wo;
        r0[0] = v;
        r0[1] = v;
        r1[0] = v;
        r1[1] = v;
      }
    }
  }
  return make_op("upsample_nearest2", {input}, {B, C, Ho, Wo}, std::move(out),
                 [B, C, H, W, Ho, Wo](OpCtx& ctx) {
                   if (!ctx.parent_needs_grad(0)) return;
                   const auto& g = ctx.out_grad();
                   double* din = ctx.parent_grad(0).data();
                   for (int64_t p = 0; p < B * C; ++p) {
                     const double* g_plane = g.data() + p * Ho * Wo;
                     double* din_plane = din + p * H * W;
                     for (int64_t y = 0; y < H; ++y) {
                       for (int64_t x = 0; x < W; ++x) {
                         const double* r0 = g_plane + (2 * y) * Wo + 2 * x;
                         const double* r1 = r0 + Wo;
                         din_plane[y * W + x] += r0[0] + r0[1] + r1[0] + r1[1];
                       }
                     }
                   }
                 });
}

Tensor softmax_channel(const Tensor& input) {
  check_rank4("softmax_channel", input);
  const int64_t B = input.shape()[0], C = input.shape()[1];
  const int64_t H = input.shape()[2], W = input.shape()[3];
  const int64_t HW = H * W;
  const auto& in = input.values();
  std::vector<double> out(in.size());
  for (int64_t b = 0; b < B; ++b) {
    const double* in_img = in.data() + b * C * HW;
    double* out_img = out.data() + b * C * HW;
    for (int64_t i = 0; i < HW; ++i) {
      double m = in_img[i];
      for (int64_t ch = 1; ch < C; ++ch) m = std::max(m, in_img[ch * HW + i]);
      double z = 0.0;
      for (int64_t ch = 0; ch < C; ++ch) {
        const double e = std::exp(in_img[ch * HW + i] - m);
        out_img[ch * HW + i] = e;
        z += e;
      }
      for (int64_t ch = 0; ch < C; ++ch) out_img[ch * HW + i] /= z;
    }
  }
  return make_op("softmax_channel", {input}, input.shape(), std::move(out),
                 [B, C, HW](OpCtx& ctx) {
                   if (!ctx.parent_needs_grad(0)) return;
                   const auto& g = ctx.out_grad();
                   const auto& p = ctx.out_values();
                   double* din = ctx.parent_grad(0).data();
                   for (int64_t b = 0; b < B; ++b) {
                     const double* g_img = g.data() + b * C * HW;
                     const double* p_img = p.data() + b * C * HW;
                     double* din_img = din + b * C * HW;
                     for (int64_t i = 0; i < HW; ++i) {
                       double dot = 0.0;
                       for (int64_t ch = 0; ch < C; ++ch) {
                         dot += g_img[ch * HW + i] * p_img[ch * HW + i];
                       }
                       for (int64_t ch = 0; ch < C; ++ch) {
                         const int64_t idx = ch * HW + i;
                         din_img[idx] += p_img[idx] * (g_img[idx] - dot);
                       }
                     }
                   }
                 });
}

Tensor sum(const Tensor& a) {
  const auto& av = a.values();
  double acc = 0.0;
  for (double v : av) acc += v;
  return make_op("sum", {a}, {1}, {acc}, [](OpCtx& ctx) {
    if (!ctx.parent_needs_grad(0)) return;
    const double g = ctx.out_grad()[0];
    auto& d = ctx.parent_grad(0);
    for (double& v : d) v += g;
  });
}

Tensor channel_sum(const Tensor& input) {
  check_rank4("channel_sum", input);
  const int64_t B = input.shape()[0], C = input.shape()[1];
  const int64_t HW = input.shape()[2] * input.shape()[3];
  const auto& in = input.values();
  std::vector<double> out(static_cast<size_t>(C), 0.0);
  for (int64_t b = 0; b < B; ++b) {
    for (int64_t ch = 0; ch < C; ++ch) {
      const double* plane = in.data() + (b * C + ch) * HW;
      double acc = 0.0;
      for (int64_t i = 0; i < HW; ++i) acc += plane[i];
      out[ch] += acc;
    }
  }
  return make_op("channel_sum", {input}, {C}, std::move(out), [B, C, HW](OpCtx& ctx) {
    if (!ctx.parent_needs_grad(0)) return;
    const auto& g = ctx.out_grad();
    double* din = ctx.parent_grad(0).data();
    for (int64_t b = 0; b < B; ++b) {
      for (int64_t ch = 0; ch < C; ++ch) {
        const double gv = g[ch];
        double* plane = din + (b * C + ch) * HW;
        for (int64_t i = 0; i < HW; ++i) plane[i] += gv;
      }
    }
  });
}

Tensor gather(const Tensor& t, std::vector<int64_t> flat_indices) {
  if (flat_indices.empty()) {
    throw ShapeError("gather: empty index list");
  }
  const auto& tv = t.values();
  const int64_t n = t.size();
  std::vector<double> out(flat_indices.size());
  for (size_t i = 0; i < flat_indices.size(); ++i) {
    const int64_t idx = flat_indices[i];
    if (idx < 0 || idx >= n) {
      throw ShapeError("gather: index " + std::to_string(idx) + " out of range for size " +
                       std::to_string(n));
    }
    out[i] = tv[idx];
  }
  const int64_t out_len = static_cast<int64_t>(flat_indices.size());
  return make_op("gather", {t}, {out_len}, std::move(out),
                 [idx = std::move(flat_indices)](OpCtx& ctx) {
                   if (!ctx.parent_needs_grad(0)) return;
                   const auto& g = ctx.out_grad();
                   auto& d = ctx.parent_grad(0);
                   for (size_t i = 0; i < idx.size(); ++i) d[idx[i]] += g[i];
                 });
}

}  // namespace dbda
