#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dbda/netpbm.hpp"
#include "dbda/tensor.hpp"

namespace dbda {

enum class Domain { source, target };
enum class Split { train, test };

const char* domain_name(Domain d);
const char* split_name(Split s);
Domain domain_from_name(const std::string& s);
Split split_from_name(const std::string& s);

struct SegSample {
  Image image;                  // 3×H×W in [0,1]
  std::vector<int32_t> label;   // H·W class indices; empty when unlabeled
  Domain domain = Domain::source;
  std::string id;
};

struct SegBatch {
  Tensor images;                // B×3×H×W
  std::vector<int32_t> labels;  // B·H·W; empty when unlabeled
  int64_t batch = 0;
};

// Per-domain appearance: v_ch = gain[ch]·(base + σ·noise) + bias[ch], then an
// optional box blur, then a clamp to [0,1].
struct AppearanceTransform {
  std::array<double, 3> gain{1.0, 1.0, 1.0};
  std::array<double, 3> bias{0.0, 0.0, 0.0};
  double noise_sigma = 0.05;
  int64_t smooth_radius = 0;
};

// Both domains draw labels and noise from streams keyed only by (seed,
// index), so a sample index has identical content everywhere and the domains
// differ in appearance alone.
struct SyntheticConfig {
  int64_t canvas = 64;
  int64_t classes = 4;
  // Shapes per 1024 square pixels of canvas.
  double density = 15.0;
  uint64_t seed = 1;
  AppearanceTransform source;
  AppearanceTransform target;
};

// Image + label rasters from disk. A P5 label holds class indices directly;
// a P6 label is decoded through the palette (required in that case). Every
// class must be below `classes`.
SegSample load_raster_pair(const std::string& image_path, const std::string& label_path,
                           const Palette* palette, int64_t classes, Domain domain,
                           std::string id);

// Top-left corners of the non-overlapping row-major tile grid; right/bottom
// remainders are dropped.
std::vector<std::pair<int64_t, int64_t>> tile_grid(int64_t h, int64_t w, int64_t tile);
std::vector<SegSample> tile(const SegSample& sample, int64_t tile_size);

// Deterministic per-epoch shuffle; the two domains draw from unrelated
// streams, so one side's order never depends on the other side's data.
std::vector<int64_t> shuffled_indices(int64_t n, uint64_t seed, Domain side);

struct BatchPair {
  std::vector<int64_t> src;
  std::vector<int64_t> tgt;
};

// ⌊min(n_src, n_tgt)/batch⌋ index pairs for one epoch, both sides
// independently shuffled; the longer dataset is truncated.
std::vector<BatchPair> pair_indices(int64_t n_src, int64_t n_tgt, int64_t batch, uint64_t seed);

SegBatch make_batch(const std::vector<SegSample>& data, const std::vector<int64_t>& indices,
                    bool with_labels);

struct ManifestEntry {
  Domain domain = Domain::source;
  Split split = Split::train;
  std::string id;
  std::string image_path;  // relative to the manifest file
  std::string label_path;
};

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);
std::vector<ManifestEntry> read_manifest(const std::string& path);

struct DataConfig {
  // Empty: synthesize in memory. Otherwise: manifest file written by the
  // generator (or hand-made for external rasters).
  std::string manifest;
  // Palette file for P6 color labels referenced by a manifest.
  std::string palette;
  int64_t tile = 32;
  int64_t train_count = 50;
  int64_t test_count = 12;
  SyntheticConfig synth;
};

struct LoadedData {
  std::vector<SegSample> src_train;
  std::vector<SegSample> tgt_train;
  std::vector<SegSample> tgt_test;
};

// Loads (or synthesizes) the three dataset splits used by training and
// evaluation, tiled to cfg.tile.
LoadedData load_datasets(const DataConfig& cfg, int64_t classes);

}  // namespace dbda
