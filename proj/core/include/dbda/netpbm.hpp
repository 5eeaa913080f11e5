#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace dbda {

// Planar 3×H×W image, values in [0,1].
struct Image {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<double> pix;
};

struct LabelMap {
  int64_t h = 0;
  int64_t w = 0;
  std::vector<int32_t> values;
};

// Binary 8-bit PPM (P6) and PGM (P5), max value 255.
Image read_ppm(const std::string& path);
void write_ppm(const std::string& path, const Image& img);
LabelMap read_pgm(const std::string& path);
void write_pgm(const std::string& path, const LabelMap& labels);

// Color <-> class mapping for colored label rasters. Classes must form a
// complete range 0..K-1 with one color each.
class Palette {
 public:
  explicit Palette(const std::vector<std::array<int32_t, 4>>& rows);  // {r,g,b,class}

  int64_t classes() const { return static_cast<int64_t>(class_to_rgb_.size()); }
  uint32_t color_of(int32_t cls) const;
  // -1 when the color is not in the palette.
  int32_t class_of(uint32_t rgb) const;

  static uint32_t pack(int32_t r, int32_t g, int32_t b);

 private:
  std::vector<uint32_t> class_to_rgb_;
  std::unordered_map<uint32_t, int32_t> rgb_to_class_;
};

// Lines of `R G B class_index`; # starts a comment.
Palette load_palette(const std::string& path);

// The six-class aerial labeling scheme: impervious surface, building, low
// vegetation, tree, car, clutter.
Palette isprs_palette();

// Colored label raster -> class indices via the palette; unknown colors are
// reported with their RGB triple. origin names the source in errors.
LabelMap decode_label_image(const Image& img, const Palette& palette, const std::string& origin);
// Class indices -> colored P6 raster.
void write_label_ppm(const std::string& path, const LabelMap& labels, const Palette& palette);

}  // namespace dbda
