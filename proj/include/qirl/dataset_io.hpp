#pragma once

#include <string>

#include "qirl/world.hpp"

namespace qirl {

inline constexpr int kDatasetFormatVersion = 1;

// JSON lines: a header object (format, version, config hash, role, prior),
// then one QIPair per line with regions as nested row arrays.
std::string serialize_split(const DatasetSplit& split, const std::string& config_hash);
DatasetSplit parse_split(const std::string& text, std::string* config_hash = nullptr);

void save_split(const std::string& path, const DatasetSplit& split, const std::string& config_hash);
DatasetSplit load_split(const std::string& path, std::string* config_hash = nullptr);

}  // namespace qirl
