#include "dbda/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <optional>
#include <sstream>

#include "dbda/rng.hpp"
#include "dbda/synthetic.hpp"

namespace fs = std::filesystem;

namespace dbda {

const char* domain_name(Domain d) { return d == Domain::source ? "source" : "target"; }
const char* split_name(Split s) { return s == Split::train ? "train" : "test"; }

Domain domain_from_name(const std::string& s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  throw ConfigError("unknown domain '" + s + "' (expected source|target)");
}

Split split_from_name(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "test") return Split::test;
  throw ConfigError("unknown split '" + s + "' (expected train|test)");
}

SegSample load_raster_pair(const std::string& image_path, const std::string& label_path,
                           const Palette* palette, int64_t classes, Domain domain,
                           std::string id) {
  SegSample sample;
  sample.image = read_ppm(image_path);
  sample.domain = domain;
  sample.id = std::move(id);

  // Sniff the label format: P5 carries class indices, P6 needs the palette.
  std::ifstream probe(label_path, std::ios::binary);
  if (!probe) throw IoError("cannot open '" + label_path + "'");
  char magic[2] = {0, 0};
  probe.read(magic, 2);
  probe.close();

  LabelMap labels;
  if (magic[0] == 'P' && magic[1] == '5') {
    labels = read_pgm(label_path);
  } else if (magic[0] == 'P' && magic[1] == '6') {
    if (!palette) {
      throw ConfigError("label '" + label_path + "' is a color raster but no palette was given");
    }
    labels = decode_label_image(read_ppm(label_path), *palette, label_path);
  } else {
    throw IoError("'" + label_path + "' is neither a P5 nor a P6 netpbm file");
  }

  if (labels.h != sample.image.h || labels.w != sample.image.w) {
    throw IoError("label '" + label_path + "' is " + std::to_string(labels.w) + "x" +
                  std::to_string(labels.h) + " but image '" + image_path + "' is " +
                  std::to_string(sample.image.w) + "x" + std::to_string(sample.image.h));
  }
  for (size_t i = 0; i < labels.values.size(); ++i) {
    if (labels.values[i] < 0 || labels.values[i] >= classes) {
      throw IoError("label '" + label_path + "': class " + std::to_string(labels.values[i]) +
                    " at pixel " + std::to_string(i) + " outside [0," + std::to_string(classes) +
                    ")");
    }
  }
  sample.label = std::move(labels.values);
  return sample;
}

std::vector<std::pair<int64_t, int64_t>> tile_grid(int64_t h, int64_t w, int64_t tile) {
  if (tile <= 0) {
    throw ConfigError("tile size must be positive, got " + std::to_string(tile));
  }
  if (tile > h || tile > w) {
    throw ConfigError("tile size " + std::to_string(tile) + " exceeds image " +
                      std::to_string(w) + "x" + std::to_string(h));
  }
  std::vector<std::pair<int64_t, int64_t>> corners;
  for (int64_t y = 0; y + tile <= h; y += tile) {
    for (int64_t x = 0; x + tile <= w; x += tile) corners.emplace_back(y, x);
  }
  return corners;
}

std::vector<SegSample> tile(const SegSample& sample, int64_t tile_size) {
  const int64_t H = sample.image.h, W = sample.image.w, T = tile_size;
  const auto corners = tile_grid(H, W, T);
  const bool labeled = !sample.label.empty();

  std::vector<SegSample> out;
  out.reserve(corners.size());
  int64_t k = 0;
  for (const auto& [y0, x0] : corners) {
    SegSample t;
    t.domain = sample.domain;
    t.id = sample.id + "_t" + std::to_string(k++);
    t.image.h = T;
    t.image.w = T;
    t.image.pix.resize(static_cast<size_t>(3 * T * T));
    for (int64_t ch = 0; ch < 3; ++ch) {
      for (int64_t y = 0; y < T; ++y) {
        const double* src_row = sample.image.pix.data() + (ch * H + y0 + y) * W + x0;
        std::copy(src_row, src_row + T, t.image.pix.data() + (ch * T + y) * T);
      }
    }
    if (labeled) {
      t.label.resize(static_cast<size_t>(T * T));
      for (int64_t y = 0; y < T; ++y) {
        const int32_t* src_row = sample.label.data() + (y0 + y) * W + x0;
        std::copy(src_row, src_row + T, t.label.data() + y * T);
      }
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<int64_t> shuffled_indices(int64_t n, uint64_t seed, Domain side) {
  const uint64_t salt = side == Domain::source ? 0x517eULL : 0x7a67ULL;
  Rng rng(Rng::mix(seed, salt));
  std::vector<int64_t> idx(static_cast<size_t>(n));
  std::iota(idx.begin(), idx.end(), int64_t{0});
  rng.shuffle(idx);
  return idx;
}

std::vector<BatchPair> pair_indices(int64_t n_src, int64_t n_tgt, int64_t batch, uint64_t seed) {
  if (n_src < 1 || n_tgt < 1) {
    throw ConfigError("batch pairing needs nonempty datasets (source " + std::to_string(n_src) +
                      ", target " + std::to_string(n_tgt) + ")");
  }
  const int64_t smaller = std::min(n_src, n_tgt);
  if (batch < 1 || batch > smaller) {
    throw ConfigError("batch size " + std::to_string(batch) +
                      " exceeds the smaller dataset (" + std::to_string(smaller) + " tiles)");
  }
  const auto src_order = shuffled_indices(n_src, seed, Domain::source);
  const auto tgt_order = shuffled_indices(n_tgt, seed, Domain::target);
  const int64_t pairs = smaller / batch;

  std::vector<BatchPair> out(static_cast<size_t>(pairs));
  for (int64_t p = 0; p < pairs; ++p) {
    out[p].src.assign(src_order.begin() + p * batch, src_order.begin() + (p + 1) * batch);
    out[p].tgt.assign(tgt_order.begin() + p * batch, tgt_order.begin() + (p + 1) * batch);
  }
  return out;
}

SegBatch make_batch(const std::vector<SegSample>& data, const std::vector<int64_t>& indices,
                    bool with_labels) {
  if (indices.empty()) throw Error("make_batch: empty index list");
  const int64_t B = static_cast<int64_t>(indices.size());
  const SegSample& first = data.at(static_cast<size_t>(indices[0]));
  const int64_t H = first.image.h, W = first.image.w;

  SegBatch batch;
  batch.batch = B;
  std::vector<double> values(static_cast<size_t>(B * 3 * H * W));
  if (with_labels) batch.labels.resize(static_cast<size_t>(B * H * W));

  for (int64_t b = 0; b < B; ++b) {
    const SegSample& s = data.at(static_cast<size_t>(indices[b]));
    if (s.image.h != H || s.image.w != W) {
      throw ShapeError("make_batch: sample '" + s.id + "' is " + std::to_string(s.image.w) + "x" +
                       std::to_string(s.image.h) + ", batch is " + std::to_string(W) + "x" +
                       std::to_string(H));
    }
    std::copy(s.image.pix.begin(), s.image.pix.end(), values.begin() + b * 3 * H * W);
    if (with_labels) {
      if (s.label.empty()) {
        throw Error("make_batch: sample '" + s.id + "' has no labels");
      }
      std::copy(s.label.begin(), s.label.end(), batch.labels.begin() + b * H * W);
    }
  }
  batch.images = Tensor::constant({B, 3, H, W}, std::move(values));
  return batch;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open manifest '" + path + "' for writing");
  for (const ManifestEntry& e : entries) {
    out << domain_name(e.domain) << " " << split_name(e.split) << " " << e.id << " "
        << e.image_path << " " << e.label_path << "\n";
  }
  out.flush();
  if (!out) throw IoError("write failed for manifest '" + path + "'");
}

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest '" + path + "'");
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string domain, split;
    if (!(ls >> domain)) continue;
    ManifestEntry e;
    if (!(ls >> split >> e.id >> e.image_path >> e.label_path)) {
      throw IoError("manifest '" + path + "' line " + std::to_string(line_no) +
                    ": expected `domain split id image_path label_path`");
    }
    try {
      e.domain = domain_from_name(domain);
      e.split = split_from_name(split);
    } catch (const ConfigError& err) {
      throw IoError("manifest '" + path + "' line " + std::to_string(line_no) + ": " + err.what());
    }
    entries.push_back(std::move(e));
  }
  return entries;
}

namespace {

std::vector<SegSample> tile_all(const std::vector<SegSample>& samples, int64_t tile_size) {
  std::vector<SegSample> out;
  for (const SegSample& s : samples) {
    auto tiles = tile(s, tile_size);
    out.insert(out.end(), std::make_move_iterator(tiles.begin()),
               std::make_move_iterator(tiles.end()));
  }
  return out;
}

}  // namespace

LoadedData load_datasets(const DataConfig& cfg, int64_t classes) {
  LoadedData data;
  if (cfg.manifest.empty()) {
    SyntheticConfig synth = cfg.synth;
    synth.classes = classes;
    const int64_t n = cfg.train_count, m = cfg.test_count;
    if (n < 1 || m < 1) {
      throw ConfigError("synthetic data needs positive train and test counts (train " +
                        std::to_string(n) + ", test " + std::to_string(m) + ")");
    }
    data.src_train = generate_synthetic_domain(synth, Domain::source, 0, n);
    data.tgt_train = generate_synthetic_domain(synth, Domain::target, n, n);
    data.tgt_test = generate_synthetic_domain(synth, Domain::target, 2 * n, m);
  } else {
    const fs::path base = fs::path(cfg.manifest).parent_path();
    std::optional<Palette> palette;
    if (!cfg.palette.empty()) palette = load_palette(cfg.palette);
    for (const ManifestEntry& e : read_manifest(cfg.manifest)) {
      SegSample s = load_raster_pair((base / e.image_path).string(), (base / e.label_path).string(),
                                     palette ? &*palette : nullptr, classes, e.domain, e.id);
      if (e.domain == Domain::source && e.split == Split::train) {
        data.src_train.push_back(std::move(s));
      } else if (e.domain == Domain::target && e.split == Split::train) {
        data.tgt_train.push_back(std::move(s));
      } else if (e.domain == Domain::target && e.split == Split::test) {
        data.tgt_test.push_back(std::move(s));
      }
      // Source test rows are legal in a manifest but unused here.
    }
  }
  data.src_train = tile_all(data.src_train, cfg.tile);
  data.tgt_train = tile_all(data.tgt_train, cfg.tile);
  data.tgt_test = tile_all(data.tgt_test, cfg.tile);
  return data;
}

}  // namespace dbda
