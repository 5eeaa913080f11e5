#include "dbda/config.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

namespace dbda {
namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split_commas(const std::string& v) {
  std::vector<std::string> parts;
  size_t start = 0;
  while (true) {
    size_t comma = v.find(',', start);
    parts.push_back(trim(v.substr(start, comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return parts;
}

int64_t parse_int(const std::string& v) {
  if (v.empty()) throw ConfigError("expected an integer, got an empty value");
  errno = 0;
  char* end = nullptr;
  long long r = std::strtoll(v.c_str(), &end, 10);
  if (errno != 0 || end != v.c_str() + v.size()) {
    throw ConfigError("expected an integer, got '" + v + "'");
  }
  return static_cast<int64_t>(r);
}

uint64_t parse_uint(const std::string& v) {
  if (v.empty() || v[0] == '-') {
    throw ConfigError("expected a nonnegative integer, got '" + v + "'");
  }
  errno = 0;
  char* end = nullptr;
  unsigned long long r = std::strtoull(v.c_str(), &end, 10);
  if (errno != 0 || end != v.c_str() + v.size()) {
    throw ConfigError("expected a nonnegative integer, got '" + v + "'");
  }
  return static_cast<uint64_t>(r);
}

double parse_real(const std::string& v) {
  if (v.empty()) throw ConfigError("expected a number, got an empty value");
  errno = 0;
  char* end = nullptr;
  double r = std::strtod(v.c_str(), &end);
  if (errno != 0 || end != v.c_str() + v.size()) {
    throw ConfigError("expected a number, got '" + v + "'");
  }
  return r;
}

bool parse_bool(const std::string& v) {
  if (v == "true") return true;
  if (v == "false") return false;
  throw ConfigError("expected true or false, got '" + v + "'");
}

std::vector<int64_t> parse_int_list(const std::string& v) {
  std::vector<int64_t> out;
  for (const std::string& part : split_commas(v)) out.push_back(parse_int(part));
  return out;
}

std::array<double, 3> parse_triple(const std::string& v) {
  auto parts = split_commas(v);
  if (parts.size() != 3) {
    throw ConfigError("expected three comma-separated numbers, got '" + v + "'");
  }
  return {parse_real(parts[0]), parse_real(parts[1]), parse_real(parts[2])};
}

std::string format_real(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string format_bool(bool b) { return b ? "true" : "false"; }

std::string format_int_list(const std::vector<int64_t>& v) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

std::string format_triple(const std::array<double, 3>& v) {
  return format_real(v[0]) + "," + format_real(v[1]) + "," + format_real(v[2]);
}

using Setter = std::function<void(TrainConfig&, const std::string&)>;
using Getter = std::function<std::string(const TrainConfig&)>;

struct KeyDef {
  std::string name;
  std::string type;
  std::string doc;
  Setter set;
  Getter get;
};

std::vector<KeyDef> build_key_defs() {
  std::vector<KeyDef> k;
  auto add = [&k](const char* name, const char* type, const char* doc, Setter set, Getter get) {
    k.push_back({name, type, doc, std::move(set), std::move(get)});
  };

  add("model.classes", "int", "number of segmentation classes",
      [](TrainConfig& c, const std::string& v) { c.model.classes = parse_int(v); },
      [](const TrainConfig& c) { return std::to_string(c.model.classes); });
  add("model.width", "int", "stem channel width",
      [](TrainConfig& c, const std::string& v) { c.model.width = parse_int(v); },
      [](const TrainConfig& c) { return std::to_string(c.model.width); });
  add("model.blocks", "int", "number of stem conv blocks",
      [](TrainConfig& c, const std::string& v) { c.model.blocks = parse_int(v); },
      [](const TrainConfig& c) { return std::to_string(c.model.blocks); });
  add("model.rates", "int-list", "dilation rates of the parallel head branches",
      [](TrainConfig& c, const std::string& v) { c.model.rates = parse_int_list(v); },
      [](const TrainConfig& c) { return format_int_list(c.model.rates); });
  add("model.downsample", "bool", "2x pool after the first block, 2x upsample at the end",
      [](TrainConfig& c, const std::string& v) { c.model.downsample = parse_bool(v); },
      [](const TrainConfig& c) { return format_bool(c.model.downsample); });
  add("model.input", "int", "expected square input size; must equal data.tile",
      [](TrainConfig& c, const std::string& v) { c.model.input = parse_int(v); },
      [](const TrainConfig& c) { return std::to_string(c.model.input); });

  add("data.manifest", "string", "dataset manifest path; empty synthesizes data in memory",
      [](TrainConfig& c, const std::string& v) { c.data.manifest = v; },
      [](const TrainConfig& c) { return c.data.manifest; });
  add("data.palette", "string", "palette file for color (P6) label rasters",
      [](TrainConfig& c, const std::string& v) { c.data.palette = v; },
      [](const TrainConfig& c) { return c.data.palette; });
  add("data.tile", "int", "square tile size cut from each raster",
      [](TrainConfig& c, const std::string& v) { c.data.tile = parse_int(v); },
      [](const TrainConfig& c) { return std::to_string(c.data.tile); });
  add("data.train_count", "int", "training rasters per domain (synthetic mode)",
      [](TrainConfig& c, const std::string& v) { c.data.train_count = parse_int(v); },
      [](const TrainConfig& c) { return std::to_string(c.data.train_count); });
  add("data.test_count", "int", "held-out rasters per domain (synthetic mode)",
      [](TrainConfig& c, const std::string& v) { c.data.test_count = parse_int(v); },
      [](const TrainConfig& c) { return std::to_string(c.data.test_count); });
  add("data.canvas", "int", "synthetic raster size",
      [](TrainConfig& c, const std::string& v) { c.data.synth.canvas = parse_int(v); },
      [](const TrainConfig& c) { return std::to_string(c.data.synth.canvas); });
  add("data.density", "real", "synthetic shapes per 1024 square pixels",
      [](TrainConfig& c, const std::string& v) { c.data.synth.density = parse_real(v); },
      [](const TrainConfig& c) { return format_real(c.data.synth.density); });
  add("data.seed", "uint", "synthetic generator seed",
      [](TrainConfig& c, const std::string& v) { c.data.synth.seed = parse_uint(v); },
      [](const TrainConfig& c) { return std::to_string(c.data.synth.seed); });
  add("data.source_gain", "triple", "per-channel gain of the source appearance",
      [](TrainConfig& c, const std::string& v) { c.data.synth.source.gain = parse_triple(v); },
      [](const TrainConfig& c) { return format_triple(c.data.synth.source.gain); });
  add("data.source_bias", "triple", "per-channel bias of the source appearance",
      [](TrainConfig& c, const std::string& v) { c.data.synth.source.bias = parse_triple(v); },
      [](const TrainConfig& c) { return format_triple(c.data.synth.source.bias); });
  add("data.source_noise", "real", "pixel noise sigma of the source appearance",
      [](TrainConfig& c, const std::string& v) { c.data.synth.source.noise_sigma = parse_real(v); },
      [](const TrainConfig& c) { return format_real(c.data.synth.source.noise_sigma); });
  add("data.source_smooth", "int", "box-blur radius of the source appearance, 0 disables",
      [](TrainConfig& c, const std::string& v) {
        c.data.synth.source.smooth_radius = parse_int(v);
      },
      [](const TrainConfig& c) { return std::to_string(c.data.synth.source.smooth_radius); });
  add("data.target_gain", "triple", "per-channel gain of the target appearance",
      [](TrainConfig& c, const std::string& v) { c.data.synth.target.gain = parse_triple(v); },
      [](const TrainConfig& c) { return format_triple(c.data.synth.target.gain); });
  add("data.target_bias", "triple", "per-channel bias of the target appearance",
      [](TrainConfig& c, const std::string& v) { c.data.synth.target.bias = parse_triple(v); },
      [](const TrainConfig& c) { return format_triple(c.data.synth.target.bias); });
  add("data.target_noise", "real", "pixel noise sigma of the target appearance",
      [](TrainConfig& c, const std::string& v) { c.data.synth.target.noise_sigma = parse_real(v); },
      [](const TrainConfig& c) { return format_real(c.data.synth.target.noise_sigma); });
  add("data.target_smooth", "int", "box-blur radius of the target appearance, 0 disables",
      [](TrainConfig& c, const std::string& v) {
        c.data.synth.target.smooth_radius = parse_int(v);
      },
      [](const TrainConfig& c) { return std::to_string(c.data.synth.target.smooth_radius); });

  add("losses.pseudo_labels", "bool",
      "score confident target pixels against their argmax class instead of the entropy term",
      [](TrainConfig& c, const std::string& v) { c.pseudo_labels = parse_bool(v); },
      [](const TrainConfig& c) { return format_bool(c.pseudo_labels); });
  add("losses.pseudo_threshold", "real",
      "minimum top probability for a pixel to enter the pseudo-label loss",
      [](TrainConfig& c, const std::string& v) { c.pseudo_threshold = parse_real(v); },
      [](const TrainConfig& c) { return format_real(c.pseudo_threshold); });

  add("train.preset", "preset", "ablation preset: source-only, minent, dbda-dagger, or dbda",
      [](TrainConfig& c, const std::string& v) { c.preset = preset_from_name(v); },
      [](const TrainConfig& c) { return preset_name(c.preset); });
  add("train.lambda1", "real", "weight of the target entropy (or pseudo-label) term",
      [](TrainConfig& c, const std::string& v) { c.lambda1 = parse_real(v); },
      [](const TrainConfig& c) { return format_real(c.lambda1); });
  add("train.lambda2", "real", "weight of the class-distribution alignment term",
      [](TrainConfig& c, const std::string& v) { c.lambda2 = parse_real(v); },
      [](const TrainConfig& c) { return format_real(c.lambda2); });
  add("train.lr0", "real", "initial learning rate of the polynomial schedule",
      [](TrainConfig& c, const std::string& v) { c.lr0 = parse_real(v); },
      [](const TrainConfig& c) { return format_real(c.lr0); });
  add("train.momentum", "real", "SGD momentum",
      [](TrainConfig& c, const std::string& v) { c.momentum = parse_real(v); },
      [](const TrainConfig& c) { return format_real(c.momentum); });
  add("train.weight_decay", "real", "L2 weight decay added to the gradient",
      [](TrainConfig& c, const std::string& v) { c.weight_decay = parse_real(v); },
      [](const TrainConfig& c) { return format_real(c.weight_decay); });
  add("train.poly_power", "real", "exponent of the polynomial learning-rate decay",
      [](TrainConfig& c, const std::string& v) { c.poly_power = parse_real(v); },
      [](const TrainConfig& c) { return format_real(c.poly_power); });
  add("train.steps", "int", "total optimization steps",
      [](TrainConfig& c, const std::string& v) { c.steps = parse_int(v); },
      [](const TrainConfig& c) { return std::to_string(c.steps); });
  add("train.batch", "int", "tiles per domain per step",
      [](TrainConfig& c, const std::string& v) { c.batch = parse_int(v); },
      [](const TrainConfig& c) { return std::to_string(c.batch); });
  add("train.seed", "uint", "experiment seed for initialization and shuffling",
      [](TrainConfig& c, const std::string& v) { c.seed = parse_uint(v); },
      [](const TrainConfig& c) { return std::to_string(c.seed); });
  add("train.checkpoint", "string", "checkpoint file name under the output directory",
      [](TrainConfig& c, const std::string& v) { c.checkpoint_name = v; },
      [](const TrainConfig& c) { return c.checkpoint_name; });
  add("train.report", "string", "metric report file name under the output directory",
      [](TrainConfig& c, const std::string& v) { c.report_name = v; },
      [](const TrainConfig& c) { return c.report_name; });
  add("train.steps_csv", "string", "per-step loss log file name under the output directory",
      [](TrainConfig& c, const std::string& v) { c.steps_name = v; },
      [](const TrainConfig& c) { return c.steps_name; });

  return k;
}

const std::vector<KeyDef>& key_defs() {
  static const std::vector<KeyDef> defs = build_key_defs();
  return defs;
}

const KeyDef* find_key(const std::string& name) {
  for (const KeyDef& k : key_defs()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

[[noreturn]] void fail_at(const std::string& origin, int line, const std::string& msg) {
  throw ConfigError(origin + ":" + std::to_string(line) + ": " + msg);
}

void require_positive(int64_t v, const char* key) {
  if (v < 1) {
    throw ConfigError(std::string(key) + " must be positive, got " + std::to_string(v));
  }
}

void require_nonnegative(double v, const char* key) {
  if (!(v >= 0.0)) {
    throw ConfigError(std::string(key) + " must be nonnegative, got " + format_real(v));
  }
}

void validate_transform(const AppearanceTransform& t, const char* side) {
  require_nonnegative(t.noise_sigma, (std::string("data.") + side + "_noise").c_str());
  if (t.smooth_radius < 0) {
    throw ConfigError(std::string("data.") + side + "_smooth must be nonnegative, got " +
                      std::to_string(t.smooth_radius));
  }
}

}  // namespace

const std::vector<ConfigKeyInfo>& config_keys() {
  static const std::vector<ConfigKeyInfo> infos = [] {
    const TrainConfig defaults;
    std::vector<ConfigKeyInfo> out;
    for (const KeyDef& k : key_defs()) {
      out.push_back({k.name, k.type, k.get(defaults), k.doc});
    }
    return out;
  }();
  return infos;
}

void parse_config_text(const std::string& text, const std::string& origin, TrainConfig& cfg) {
  static const std::set<std::string> kSections = {"model", "train", "data", "losses"};
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::set<std::string> seen;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') fail_at(origin, line_no, "unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!kSections.count(section)) {
        fail_at(origin, line_no,
                "unknown section '" + section + "' (expected model, train, data, or losses)");
      }
      continue;
    }

    size_t eq = line.find('=');
    if (eq == std::string::npos) fail_at(origin, line_no, "expected key = value");
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) fail_at(origin, line_no, "expected key = value");

    if (key.find('.') == std::string::npos) {
      if (section.empty()) {
        fail_at(origin, line_no,
                "key '" + key + "' appears before any [section] header (use a section or a dotted name)");
      }
      key = section + "." + key;
    }

    const KeyDef* def = find_key(key);
    if (!def) fail_at(origin, line_no, "unknown key '" + key + "'");
    if (!seen.insert(key).second) fail_at(origin, line_no, "duplicate key '" + key + "'");
    try {
      def->set(cfg, value);
    } catch (const ConfigError& e) {
      fail_at(origin, line_no, key + ": " + e.what());
    }
  }
}

void finalize_config(TrainConfig& cfg) {
  switch (cfg.preset) {
    case Preset::source_only:
      cfg.lambda1 = 0.0;
      cfg.lambda2 = 0.0;
      break;
    case Preset::minent:
      cfg.lambda2 = 0.0;
      break;
    case Preset::dbda_dagger:
      cfg.lambda1 = 0.0;
      break;
    case Preset::dbda:
      break;
  }
  cfg.data.synth.classes = cfg.model.classes;

  if (cfg.model.classes < 2) {
    throw ConfigError("model.classes must be at least 2, got " +
                      std::to_string(cfg.model.classes));
  }
  require_positive(cfg.model.width, "model.width");
  require_positive(cfg.model.blocks, "model.blocks");
  require_positive(cfg.model.input, "model.input");
  if (cfg.model.rates.empty()) throw ConfigError("model.rates must not be empty");
  for (int64_t r : cfg.model.rates) require_positive(r, "model.rates entries");

  require_nonnegative(cfg.lambda1, "train.lambda1");
  require_nonnegative(cfg.lambda2, "train.lambda2");
  if (!(cfg.lr0 > 0.0)) {
    throw ConfigError("train.lr0 must be positive, got " + format_real(cfg.lr0));
  }
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) {
    throw ConfigError("train.momentum must lie in [0,1), got " + format_real(cfg.momentum));
  }
  require_nonnegative(cfg.weight_decay, "train.weight_decay");
  if (!(cfg.poly_power > 0.0)) {
    throw ConfigError("train.poly_power must be positive, got " + format_real(cfg.poly_power));
  }
  require_positive(cfg.steps, "train.steps");
  require_positive(cfg.batch, "train.batch");
  if (!(cfg.pseudo_threshold > 0.0 && cfg.pseudo_threshold <= 1.0)) {
    throw ConfigError("losses.pseudo_threshold must lie in (0,1], got " +
                      format_real(cfg.pseudo_threshold));
  }

  require_positive(cfg.data.tile, "data.tile");
  require_positive(cfg.data.train_count, "data.train_count");
  require_positive(cfg.data.test_count, "data.test_count");
  if (cfg.data.manifest.empty()) {
    require_positive(cfg.data.synth.canvas, "data.canvas");
    if (cfg.data.synth.canvas < cfg.data.tile) {
      throw ConfigError("data.canvas " + std::to_string(cfg.data.synth.canvas) +
                        " is smaller than data.tile " + std::to_string(cfg.data.tile));
    }
    if (!(cfg.data.synth.density > 0.0)) {
      throw ConfigError("data.density must be positive, got " +
                        format_real(cfg.data.synth.density));
    }
    validate_transform(cfg.data.synth.source, "source");
    validate_transform(cfg.data.synth.target, "target");
  }
  if (cfg.model.input != cfg.data.tile) {
    throw ConfigError("model.input " + std::to_string(cfg.model.input) +
                      " must equal data.tile " + std::to_string(cfg.data.tile));
  }
}

TrainConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open config file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  TrainConfig cfg;
  parse_config_text(buf.str(), path, cfg);
  finalize_config(cfg);
  return cfg;
}

std::string config_to_text(const TrainConfig& cfg) {
  std::string out;
  std::string section;
  for (const KeyDef& k : key_defs()) {
    const std::string sec = k.name.substr(0, k.name.find('.'));
    if (sec != section) {
      if (!out.empty()) out += '\n';
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += k.name.substr(sec.size() + 1) + " = " + k.get(cfg) + "\n";
  }
  return out;
}

void write_config_file(const std::string& path, const TrainConfig& cfg) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open config file '" + path + "' for writing");
  out << config_to_text(cfg);
  out.flush();
  if (!out) throw IoError("write failed for config file '" + path + "'");
}

}  // namespace dbda
