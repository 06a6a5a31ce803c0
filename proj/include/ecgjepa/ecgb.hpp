// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ecgjepa/ecg.hpp"

namespace ecgjepa {

/// ECGB record files, little-endian:
///   "ECGB" | u16 version=1 | u16 lead_count | u32 sample_count | f32 sample_rate_hz
///   | lead_count x u16 lead code | lead_count*sample_count f32 samples, lead-major.
/// Samples are narrowed to f32 on write.
inline constexpr std::uint16_t kEcgbVersion = 1;

std::vector<std::uint8_t> encode_ecgb(const EcgRecord& record);
/// Throws FormatError (BadMagic / UnsupportedVersion / Truncated / Malformed).
EcgRecord decode_ecgb(const std::vector<std::uint8_t>& bytes);

void write_ecgb(const std::filesystem::path& path, const EcgRecord& record);
EcgRecord read_ecgb(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes via a temporary file in the same directory and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace ecgjepa
