#pragma once

// Versioned binary checkpoint:
//   magic "FSDNCKPT" | u32 version | u64 config digest
//   u32 len + model config JSON | u32 len + metadata JSON
//   u32 tensor count, then per tensor:
//     u32 len + name | u32 ndim | u32 dims[ndim] | f32 values, row-major
// All integers and floats little-endian.

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

#include "fsdnet/netcore.hpp"

namespace fsdnet::net {

inline constexpr char kCheckpointMagic[8] = {'F', 'S', 'D', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelParams<float> params;
  nlohmann::json metadata = nlohmann::json::object();
};

void save_checkpoint(const std::filesystem::path& path, const ParamSet<float>& params,
                     const nlohmann::json& metadata = nlohmann::json::object());

// Throws IngestionError on a malformed file or a digest mismatch.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace fsdnet::net
