#include "dbda/netpbm.hpp"

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include "dbda/error.hpp"

namespace dbda {

namespace {

int64_t read_header_int(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) {
    throw IoError("'" + path + "': malformed netpbm header");
  }
  int64_t v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > (int64_t{1} << 32)) throw IoError("'" + path + "': header value out of range");
    c = in.get();
  }
  // The digit run ends at the single whitespace separator, now consumed.
  return v;
}

std::ifstream open_binary(const std::string& path, const char* magic) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  char m[2] = {0, 0};
  in.read(m, 2);
  if (!in || m[0] != magic[0] || m[1] != magic[1]) {
    throw IoError("'" + path + "' is not a binary " + std::string(magic) + " netpbm file");
  }
  return in;
}

std::vector<uint8_t> read_raster(std::istream& in, const std::string& path, int64_t h, int64_t w,
                                 int64_t channels) {
  if (h <= 0 || w <= 0) {
    throw IoError("'" + path + "': invalid dimensions " + std::to_string(w) + "x" +
                  std::to_string(h));
  }
  std::vector<uint8_t> bytes(static_cast<size_t>(h * w * channels));
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (static_cast<size_t>(in.gcount()) != bytes.size()) {
    throw IoError("'" + path + "': truncated raster data");
  }
  return bytes;
}

void write_file(const std::string& path, const std::string& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

uint8_t to_byte(double v) {
  const double c = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
  return static_cast<uint8_t>(std::lround(c * 255.0));
}

}  // namespace

Image read_ppm(const std::string& path) {
  std::ifstream in = open_binary(path, "P6");
  const int64_t w = read_header_int(in, path);
  const int64_t h = read_header_int(in, path);
  const int64_t maxval = read_header_int(in, path);
  if (maxval != 255) {
    throw IoError("'" + path + "': only 8-bit rasters supported, max value is " +
                  std::to_string(maxval));
  }
  const std::vector<uint8_t> bytes = read_raster(in, path, h, w, 3);
  Image img{h, w, std::vector<double>(static_cast<size_t>(3 * h * w))};
  for (int64_t i = 0; i < h * w; ++i) {
    for (int64_t ch = 0; ch < 3; ++ch) {
      img.pix[ch * h * w + i] = static_cast<double>(bytes[i * 3 + ch]) / 255.0;
    }
  }
  return img;
}

void write_ppm(const std::string& path, const Image& img) {
  if (img.pix.size() != static_cast<size_t>(3 * img.h * img.w)) {
    throw Error("write_ppm: image buffer does not match " + std::to_string(img.w) + "x" +
                std::to_string(img.h));
  }
  std::ostringstream head;
  head << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::string data = head.str();
  data.reserve(data.size() + static_cast<size_t>(3 * img.h * img.w));
  for (int64_t i = 0; i < img.h * img.w; ++i) {
    for (int64_t ch = 0; ch < 3; ++ch) {
      data.push_back(static_cast<char>(to_byte(img.pix[ch * img.h * img.w + i])));
    }
  }
  write_file(path, data);
}

LabelMap read_pgm(const std::string& path) {
  std::ifstream in = open_binary(path, "P5");
  const int64_t w = read_header_int(in, path);
  const int64_t h = read_header_int(in, path);
  const int64_t maxval = read_header_int(in, path);
  if (maxval != 255) {
    throw IoError("'" + path + "': only 8-bit rasters supported, max value is " +
                  std::to_string(maxval));
  }
  const std::vector<uint8_t> bytes = read_raster(in, path, h, w, 1);
  LabelMap labels{h, w, std::vector<int32_t>(bytes.begin(), bytes.end())};
  return labels;
}

void write_pgm(const std::string& path, const LabelMap& labels) {
  if (labels.values.size() != static_cast<size_t>(labels.h * labels.w)) {
    throw Error("write_pgm: label buffer does not match " + std::to_string(labels.w) + "x" +
                std::to_string(labels.h));
  }
  std::ostringstream head;
  head << "P5\n" << labels.w << " " << labels.h << "\n255\n";
  std::string data = head.str();
  data.reserve(data.size() + labels.values.size());
  for (int32_t v : labels.values) {
    if (v < 0 || v > 255) {
      throw Error("write_pgm: class index " + std::to_string(v) + " does not fit in 8 bits");
    }
    data.push_back(static_cast<char>(v));
  }
  write_file(path, data);
}

uint32_t Palette::pack(int32_t r, int32_t g, int32_t b) {
  return (static_cast<uint32_t>(r) << 16) | (static_cast<uint32_t>(g) << 8) |
         static_cast<uint32_t>(b);
}

Palette::Palette(const std::vector<std::array<int32_t, 4>>& rows) {
  if (rows.empty()) throw ConfigError("palette: no entries");
  int32_t max_class = 0;
  for (const auto& row : rows) {
    for (int i = 0; i < 3; ++i) {
      if (row[i] < 0 || row[i] > 255) {
        throw ConfigError("palette: color component " + std::to_string(row[i]) +
                          " outside [0,255]");
      }
    }
    if (row[3] < 0) throw ConfigError("palette: negative class index " + std::to_string(row[3]));
    max_class = std::max(max_class, row[3]);
  }
  class_to_rgb_.assign(static_cast<size_t>(max_class) + 1, 0);
  std::vector<bool> seen(static_cast<size_t>(max_class) + 1, false);
  for (const auto& row : rows) {
    const uint32_t rgb = pack(row[0], row[1], row[2]);
    if (seen[row[3]]) {
      throw ConfigError("palette: class " + std::to_string(row[3]) + " listed twice");
    }
    if (rgb_to_class_.count(rgb)) {
      throw ConfigError("palette: color (" + std::to_string(row[0]) + "," +
                        std::to_string(row[1]) + "," + std::to_string(row[2]) +
                        ") maps to two classes");
    }
    seen[row[3]] = true;
    class_to_rgb_[row[3]] = rgb;
    rgb_to_class_[rgb] = row[3];
  }
  for (int32_t c = 0; c <= max_class; ++c) {
    if (!seen[c]) throw ConfigError("palette: class " + std::to_string(c) + " has no color");
  }
}

uint32_t Palette::color_of(int32_t cls) const {
  if (cls < 0 || cls >= classes()) {
    throw Error("palette: class " + std::to_string(cls) + " outside [0," +
                std::to_string(classes()) + ")");
  }
  return class_to_rgb_[cls];
}

int32_t Palette::class_of(uint32_t rgb) const {
  auto it = rgb_to_class_.find(rgb);
  return it == rgb_to_class_.end() ? -1 : it->second;
}

Palette load_palette(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open palette '" + path + "'");
  std::vector<std::array<int32_t, 4>> rows;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::array<int32_t, 4> row{};
    if (!(ls >> row[0])) continue;  // blank line
    if (!(ls >> row[1] >> row[2] >> row[3])) {
      throw ConfigError("palette '" + path + "' line " + std::to_string(line_no) +
                        ": expected `R G B class_index`");
    }
    std::string extra;
    if (ls >> extra) {
      throw ConfigError("palette '" + path + "' line " + std::to_string(line_no) +
                        ": trailing content '" + extra + "'");
    }
    rows.push_back(row);
  }
  try {
    return Palette(rows);
  } catch (const ConfigError& e) {
    throw ConfigError("palette '" + path + "': " + e.what());
  }
}

Palette isprs_palette() {
  return Palette({{255, 255, 255, 0},
                  {0, 0, 255, 1},
                  {0, 255, 255, 2},
                  {0, 255, 0, 3},
                  {255, 255, 0, 4},
                  {255, 0, 0, 5}});
}

LabelMap decode_label_image(const Image& img, const Palette& palette, const std::string& origin) {
  LabelMap labels{img.h, img.w, std::vector<int32_t>(static_cast<size_t>(img.h * img.w))};
  const int64_t hw = img.h * img.w;
  for (int64_t i = 0; i < hw; ++i) {
    const int32_t r = static_cast<int32_t>(std::lround(img.pix[i] * 255.0));
    const int32_t g = static_cast<int32_t>(std::lround(img.pix[hw + i] * 255.0));
    const int32_t b = static_cast<int32_t>(std::lround(img.pix[2 * hw + i] * 255.0));
    const int32_t cls = palette.class_of(Palette::pack(r, g, b));
    if (cls < 0) {
      throw IoError("'" + origin + "': unknown palette color (" + std::to_string(r) + "," +
                    std::to_string(g) + "," + std::to_string(b) + ") at pixel " +
                    std::to_string(i));
    }
    labels.values[i] = cls;
  }
  return labels;
}

void write_label_ppm(const std::string& path, const LabelMap& labels, const Palette& palette) {
  Image img{labels.h, labels.w, std::vector<double>(static_cast<size_t>(3 * labels.h * labels.w))};
  const int64_t hw = labels.h * labels.w;
  for (int64_t i = 0; i < hw; ++i) {
    const uint32_t rgb = palette.color_of(labels.values[i]);
    img.pix[i] = static_cast<double>((rgb >> 16) & 0xff) / 255.0;
    img.pix[hw + i] = static_cast<double>((rgb >> 8) & 0xff) / 255.0;
    img.pix[2 * hw + i] = static_cast<double>(rgb & 0xff) / 255.0;
  }
  write_ppm(path, img);
}

}  // namespace dbda
