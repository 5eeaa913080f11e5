#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dbda/tensor.hpp"

namespace dbda {

inline constexpr uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

// Little-endian binary: magic "DBDA", u32 format version, then per entry:
// u32 name length, UTF-8 name, u32 rank, u64 per dimension, raw f64 values.
void write_checkpoint(const std::string& path, const std::vector<CheckpointEntry>& entries);

// Throws IoError on missing file, bad magic, unknown version, or truncation.
std::vector<CheckpointEntry> read_checkpoint(const std::string& path);

}  // namespace dbda
