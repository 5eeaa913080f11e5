#include "dbda/synthetic.hpp"

#include <algorithm>
#include <cmath>

#include "dbda/error.hpp"
#include "dbda/rng.hpp"

namespace dbda {

namespace {

void validate(const SyntheticConfig& cfg) {
  if (cfg.canvas < 4) {
    throw ConfigError("synthetic: canvas must be at least 4, got " + std::to_string(cfg.canvas));
  }
  if (cfg.classes < 2) {
    throw ConfigError("synthetic: needs at least 2 classes, got " + std::to_string(cfg.classes));
  }
  if (!(cfg.density > 0.0)) {
    throw ConfigError("synthetic: density must be positive");
  }
  for (const AppearanceTransform* ap : {&cfg.source, &cfg.target}) {
    if (ap->noise_sigma < 0.0) throw ConfigError("synthetic: negative noise sigma");
    if (ap->smooth_radius < 0) throw ConfigError("synthetic: negative smoothing radius");
  }
}

void paint_rect(std::vector<int32_t>& lab, int64_t S, int64_t cy, int64_t cx, int64_t hh,
                int64_t hw, int32_t cls) {
  const int64_t y0 = std::max<int64_t>(0, cy - hh), y1 = std::min(S - 1, cy + hh);
  const int64_t x0 = std::max<int64_t>(0, cx - hw), x1 = std::min(S - 1, cx + hw);
  for (int64_t y = y0; y <= y1; ++y) {
    std::fill(lab.begin() + y * S + x0, lab.begin() + y * S + x1 + 1, cls);
  }
}

void paint_ellipse(std::vector<int32_t>& lab, int64_t S, int64_t cy, int64_t cx, int64_t ry,
                   int64_t rx, int32_t cls) {
  const int64_t y0 = std::max<int64_t>(0, cy - ry), y1 = std::min(S - 1, cy + ry);
  const int64_t x0 = std::max<int64_t>(0, cx - rx), x1 = std::min(S - 1, cx + rx);
  const double iry = 1.0 / static_cast<double>(ry * ry);
  const double irx = 1.0 / static_cast<double>(rx * rx);
  for (int64_t y = y0; y <= y1; ++y) {
    const double dy2 = static_cast<double>((y - cy) * (y - cy)) * iry;
    for (int64_t x = x0; x <= x1; ++x) {
      const double dx2 = static_cast<double>((x - cx) * (x - cx)) * irx;
      if (dy2 + dx2 <= 1.0) lab[y * S + x] = cls;
    }
  }
}

void box_smooth(std::vector<double>& plane, int64_t S, int64_t r) {
  std::vector<double> out(plane.size());
  for (int64_t y = 0; y < S; ++y) {
    const int64_t y0 = std::max<int64_t>(0, y - r), y1 = std::min(S - 1, y + r);
    for (int64_t x = 0; x < S; ++x) {
      const int64_t x0 = std::max<int64_t>(0, x - r), x1 = std::min(S - 1, x + r);
      double acc = 0.0;
      for (int64_t yy = y0; yy <= y1; ++yy) {
        for (int64_t xx = x0; xx <= x1; ++xx) acc += plane[yy * S + xx];
      }
      out[y * S + x] = acc / static_cast<double>((y1 - y0 + 1) * (x1 - x0 + 1));
    }
  }
  plane.swap(out);
}

}  // namespace

std::array<double, 3> class_base_color(int32_t cls, int64_t classes) {
  if (cls == 0) return {0.15, 0.15, 0.15};
  constexpr double kThird = 2.0943951023931953;  // 2π/3
  const double angle =
      2.0 * M_PI * static_cast<double>(cls - 1) / static_cast<double>(std::max<int64_t>(classes - 1, 1));
  return {0.55 + 0.40 * std::cos(angle), 0.55 + 0.40 * std::cos(angle - kThird),
          0.55 + 0.40 * std::cos(angle + kThird)};
}

std::vector<int32_t> synthesize_labels(const SyntheticConfig& cfg, int64_t index) {
  validate(cfg);
  const int64_t S = cfg.canvas;
  Rng geom(Rng::mix(cfg.seed, static_cast<uint64_t>(index) * 2 + 1));

  std::vector<int32_t> lab(static_cast<size_t>(S * S), 0);
  const int64_t count = std::max<int64_t>(
      1, std::llround(cfg.density * static_cast<double>(S * S) / 1024.0));
  const uint64_t ext = static_cast<uint64_t>(std::max<int64_t>(1, S / 8));
  const uint64_t thick = static_cast<uint64_t>(std::max<int64_t>(1, S / 16));

  for (int64_t s = 0; s < count; ++s) {
    const int32_t cls = 1 + static_cast<int32_t>(geom.below(static_cast<uint64_t>(cfg.classes - 1)));
    const uint64_t kind = geom.below(3);
    if (kind == 0) {
      const int64_t cy = static_cast<int64_t>(geom.below(S));
      const int64_t cx = static_cast<int64_t>(geom.below(S));
      const int64_t hh = 1 + static_cast<int64_t>(geom.below(ext));
      const int64_t hw = 1 + static_cast<int64_t>(geom.below(ext));
      paint_rect(lab, S, cy, cx, hh, hw, cls);
    } else if (kind == 1) {
      const int64_t cy = static_cast<int64_t>(geom.below(S));
      const int64_t cx = static_cast<int64_t>(geom.below(S));
      const int64_t ry = 2 + static_cast<int64_t>(geom.below(ext));
      const int64_t rx = 2 + static_cast<int64_t>(geom.below(ext));
      paint_ellipse(lab, S, cy, cx, ry, rx, cls);
    } else {
      const bool horizontal = geom.below(2) == 0;
      const int64_t pos = static_cast<int64_t>(geom.below(S));
      const int64_t th = 2 + static_cast<int64_t>(geom.below(thick));
      if (horizontal) {
        for (int64_t y = pos; y < std::min(S, pos + th); ++y) {
          std::fill(lab.begin() + y * S, lab.begin() + (y + 1) * S, cls);
        }
      } else {
        for (int64_t y = 0; y < S; ++y) {
          for (int64_t x = pos; x < std::min(S, pos + th); ++x) lab[y * S + x] = cls;
        }
      }
    }
  }
  return lab;
}

SegSample synthesize_sample(const SyntheticConfig& cfg, Domain domain, int64_t index) {
  std::vector<int32_t> lab = synthesize_labels(cfg, index);
  const int64_t S = cfg.canvas;
  const AppearanceTransform& ap = domain == Domain::source ? cfg.source : cfg.target;
  // Appearance noise comes from a stream keyed by (seed, index) only; the
  // domain decides how the identical draws are scaled and shifted.
  Rng app(Rng::mix(cfg.seed, static_cast<uint64_t>(index) * 2));

  std::vector<std::array<double, 3>> colors(static_cast<size_t>(cfg.classes));
  for (int64_t c = 0; c < cfg.classes; ++c) {
    colors[c] = class_base_color(static_cast<int32_t>(c), cfg.classes);
  }

  Image img{S, S, std::vector<double>(static_cast<size_t>(3 * S * S))};
  for (int64_t ch = 0; ch < 3; ++ch) {
    double* plane = img.pix.data() + ch * S * S;
    for (int64_t i = 0; i < S * S; ++i) {
      const double base = colors[lab[i]][ch];
      plane[i] = ap.gain[ch] * (base + ap.noise_sigma * app.normal()) + ap.bias[ch];
    }
  }
  if (ap.smooth_radius > 0) {
    for (int64_t ch = 0; ch < 3; ++ch) {
      std::vector<double> plane(img.pix.begin() + ch * S * S, img.pix.begin() + (ch + 1) * S * S);
      box_smooth(plane, S, ap.smooth_radius);
      std::copy(plane.begin(), plane.end(), img.pix.begin() + ch * S * S);
    }
  }
  for (double& v : img.pix) v = std::min(1.0, std::max(0.0, v));

  SegSample sample;
  sample.image = std::move(img);
  sample.label = std::move(lab);
  sample.domain = domain;
  sample.id = std::string(domain_name(domain)) + "_" + std::to_string(index);
  return sample;
}

std::vector<SegSample> generate_synthetic_domain(const SyntheticConfig& cfg, Domain domain,
                                                 int64_t n) {
  return generate_synthetic_domain(cfg, domain, 0, n);
}

std::vector<SegSample> generate_synthetic_domain(const SyntheticConfig& cfg, Domain domain,
                                                 int64_t first, int64_t n) {
  if (n < 0 || first < 0) {
    throw ConfigError("synthetic: invalid sample range [" + std::to_string(first) + "," +
                      std::to_string(first + n) + ")");
  }
  std::vector<SegSample> out;
  out.reserve(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    out.push_back(synthesize_sample(cfg, domain, first + i));
  }
  return out;
}

}  // namespace dbda
