// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "json.hpp"

#include "ecgjepa/tensor.hpp"
#include "ecgjepa/training.hpp"

namespace ecgjepa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Generic container behind the checkpoint format: JSON metadata plus named
/// f32 and f64 tensors. Names are unique across both sets.
struct TensorFile {
  nlohmann::json metadata = nlohmann::json::object();
  ParameterSet<float> f32;
  ParameterSet<double> f64;
};

/// Layout: "EJPA", u32 version, u64 metadata length, metadata JSON, u32
/// tensor count, then per tensor u16 name length, name, u8 rank, rank x u32
/// dims, u8 dtype (0 = f32, 1 = f64), u64 payload bytes, payload.
std::vector<std::uint8_t> encode_tensor_file(const TensorFile& file);
/// Throws FormatError: BadMagic, UnsupportedVersion, Truncated or Malformed.
TensorFile decode_tensor_file(const std::vector<std::uint8_t>& bytes, const std::string& context = "checkpoint");

/// A pretraining snapshot plus free-form provenance (config hash, corpus).
struct Checkpoint {
  TrainingState state;
  nlohmann::json info = nlohmann::json::object();
};

TensorFile checkpoint_to_file(const Checkpoint& checkpoint);
Checkpoint checkpoint_from_file(const TensorFile& file);

/// Atomic write (temporary file, then rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace ecgjepa
