#include "dbda/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include "dbda/error.hpp"

namespace dbda {

namespace {

constexpr char kMagic[4] = {'D', 'B', 'D', 'A'};

void put_u32(std::string& buf, uint32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& buf, uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& buf, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(buf, bits);
}

class Reader {
 public:
  Reader(const std::string& path, std::string data) : path_(path), data_(std::move(data)) {}

  bool done() const { return pos_ == data_.size(); }

  uint32_t u32() {
    need(4, "u32");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<uint32_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  uint64_t u64() {
    need(8, "u64");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= static_cast<uint64_t>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    }
    pos_ += 8;
    return v;
  }

  double f64() {
    uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
  }

  std::string bytes(size_t n, const char* what) {
    need(n, what);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }

 private:
  void need(size_t n, const char* what) {
    if (data_.size() - pos_ < n) {
      throw IoError("checkpoint '" + path_ + "' truncated while reading " + what);
    }
  }

  std::string path_;
  std::string data_;
  size_t pos_ = 0;
};

}  // namespace

void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries) {
  std::string buf;
  buf.append(kMagic, sizeof(kMagic));
  put_u32(buf, kCheckpointVersion);
  for (const CheckpointEntry& e : entries) {
    if (shape_size(e.shape) != static_cast<int64_t>(e.values.size())) {
      throw Error("checkpoint entry '" + e.name + "': shape " + shape_str(e.shape) +
                  " does not match " + std::to_string(e.values.size()) + " values");
    }
    put_u32(buf, static_cast<uint32_t>(e.name.size()));
    buf.append(e.name);
    put_u32(buf, static_cast<uint32_t>(e.shape.size()));
    for (int64_t d : e.shape) put_u64(buf, static_cast<uint64_t>(d));
    for (double v : e.values) put_f64(buf, v);
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open checkpoint '" + path + "' for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  out.flush();
  if (!out) throw IoError("write failed for checkpoint '" + path + "'");
}

std::vector<CheckpointEntry> read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

  Reader r(path, std::move(data));
  if (r.bytes(4, "magic") != std::string(kMagic, sizeof(kMagic))) {
    throw IoError("'" + path + "' is not a checkpoint (bad magic)");
  }
  const uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw IoError("checkpoint '" + path + "' has unsupported format version " +
                  std::to_string(version));
  }

  std::vector<CheckpointEntry> entries;
  while (!r.done()) {
    CheckpointEntry e;
    const uint32_t name_len = r.u32();
    e.name = r.bytes(name_len, "entry name");
    const uint32_t rank = r.u32();
    int64_t count = 1;
    for (uint32_t i = 0; i < rank; ++i) {
      const uint64_t dim = r.u64();
      if (dim == 0 || dim > (1ull << 32)) {
        throw IoError("checkpoint '" + path + "' entry '" + e.name + "' has invalid dimension " +
                      std::to_string(dim));
      }
      e.shape.push_back(static_cast<int64_t>(dim));
      count *= static_cast<int64_t>(dim);
    }
    e.values.reserve(static_cast<size_t>(count));
    for (int64_t i = 0; i < count; ++i) e.values.push_back(r.f64());
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace dbda
