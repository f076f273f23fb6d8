#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "pairdis/tensor.hpp"

namespace pairdis {

struct CheckpointMeta {
  std::string config_hash;
  std::vector<std::uint64_t> seeds;
  std::int64_t step = 0;
  nlohmann::json extra = nlohmann::json::object();
};

// Writes `path` (concatenated little-endian float32 tensors in name order) and
// `path`.json (names, shapes, config hash, seeds, step count, sha256).
void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors, const CheckpointMeta& meta);

struct Checkpoint {
  NamedTensors tensors;
  CheckpointMeta meta;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

std::filesystem::path manifest_path(const std::filesystem::path& checkpoint);

}  // namespace pairdis
