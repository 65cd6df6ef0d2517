#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "stbn/blindspot.hpp"

namespace stbn {

/// Named-tensor archive, little-endian:
///   "STBNCKPT" | u32 version (1) | string config JSON | u64 iteration | u32 count |
///   count x { string name | u32 rank (4) | 4 x i32 dims | f32 values }
/// Strings are u32 length + bytes.
struct Checkpoint {
  nlohmann::json config;
  std::uint64_t iteration = 0;
  std::vector<std::pair<std::string, Tensor>> tensors;
};

Checkpoint make_checkpoint(const ParameterList& params, nlohmann::json config, std::uint64_t iteration);
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);
/// Copies tensors into parameters by name; every parameter must be present with the same shape.
void apply_checkpoint(const Checkpoint& ckpt, ParameterList& params);

}  // namespace stbn
