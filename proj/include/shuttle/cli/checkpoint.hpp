#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "shuttle/training/model.hpp"

namespace shuttle::cli {

// Little-endian layout:
//   "SHCK" | version u8 = 1 | config length u32 | config JSON (UTF-8) | tensor count u32 |
//   per tensor: name length u32 | name | rank u8 | extents u32 x rank | float64 payload
inline constexpr std::uint8_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  nlohmann::json config;
  std::vector<NamedTensor> tensors;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Trainable parameters followed by projector running statistics.
Checkpoint snapshot(const training::Model& model, const nlohmann::json& config);

/// Rebuilds a model from a checkpoint; every expected tensor must be present with the right shape.
training::Model restore(const training::ModelConfig& cfg, const Checkpoint& ck);

}  // namespace shuttle::cli
