#pragma once

#include <string>
#include <vector>

#include "dbda/train.hpp"

namespace dbda {

struct ConfigKeyInfo {
  std::string key;
  std::string type;
  std::string def;
  std::string doc;
};

// Every recognized key with its type, default, and one-line description.
const std::vector<ConfigKeyInfo>& config_keys();

// Applies key=value text with [model|train|data|losses] sections on top of
// cfg. Dotted keys work anywhere; bare keys need a section header. Rejects
// unknown keys, duplicates, and bad values with origin:line messages. No
// preset pinning or range validation happens here.
void parse_config_text(const std::string& text, const std::string& origin, TrainConfig& cfg);

// Pins the λ pair the preset ablates, copies the class count into the
// synthetic generator, and validates every range. Every config used for a
// run must pass through here once after parsing.
void finalize_config(TrainConfig& cfg);

// Read + parse + finalize.
TrainConfig load_config_file(const std::string& path);

// Renders cfg as config text that parses back to the same state.
std::string config_to_text(const TrainConfig& cfg);
void write_config_file(const std::string& path, const TrainConfig& cfg);

}  // namespace dbda
