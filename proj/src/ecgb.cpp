// SPDX-License-Identifier: Apache-2.0
#include "ecgjepa/ecgb.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "ecgjepa/byteio.hpp"

namespace ecgjepa {

std::vector<std::uint8_t> encode_ecgb(const EcgRecord& record) {
  detail::ByteWriter w;
  w.put_bytes("ECGB");
  w.put<std::uint16_t>(kEcgbVersion);
  w.put<std::uint16_t>(static_cast<std::uint16_t>(record.lead_count()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(record.sample_count()));
  w.put<float>(static_cast<float>(record.sample_rate_hz()));
  for (Lead lead : record.leads()) w.put<std::uint16_t>(static_cast<std::uint16_t>(lead));
  const auto& s = record.samples();
  for (Eigen::Index l = 0; l < s.rows(); ++l) {
    for (Eigen::Index k = 0; k < s.cols(); ++k) w.put<float>(static_cast<float>(s(l, k)));
  }
  return std::move(w.bytes());
}

EcgRecord decode_ecgb(const std::vector<std::uint8_t>& bytes) {
  detail::ByteReader r(bytes, "ECGB");
  if (r.remaining() < 4 || r.get_string(4) != "ECGB") {
    throw FormatError(FormatError::Kind::BadMagic, "ECGB: bad magic");
  }
  const auto version = r.get<std::uint16_t>();
  if (version != kEcgbVersion) {
    throw FormatError(FormatError::Kind::UnsupportedVersion,
                      "ECGB: unsupported version " + std::to_string(version));
  }
  const auto lead_count = r.get<std::uint16_t>();
  const auto sample_count = r.get<std::uint32_t>();
  const auto rate = r.get<float>();
  std::vector<Lead> leads;
  for (std::uint16_t i = 0; i < lead_count; ++i) {
    const auto code = r.get<std::uint16_t>();
    const auto lead = lead_from_code(code);
    if (!lead) throw FormatError(FormatError::Kind::Malformed, "ECGB: unknown lead code " + std::to_string(code));
    leads.push_back(*lead);
  }
  r.need(std::size_t{lead_count} * sample_count * sizeof(float));
  EcgRecord::Samples samples(lead_count, static_cast<Eigen::Index>(sample_count));
  for (Eigen::Index l = 0; l < samples.rows(); ++l) {
    for (Eigen::Index k = 0; k < samples.cols(); ++k) samples(l, k) = r.get<float>();
  }
  if (r.remaining() != 0) throw FormatError(FormatError::Kind::Malformed, "ECGB: trailing bytes");
  try {
    return EcgRecord(std::move(leads), rate, std::move(samples));
  } catch (const ValidationError& e) {
    throw FormatError(FormatError::Kind::Malformed, std::string("ECGB: ") + e.what());
  }
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed: " + path.string());
  return bytes;
}

void write_file_atomic(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void write_ecgb(const std::filesystem::path& path, const EcgRecord& record) {
  write_file_atomic(path, encode_ecgb(record));
}

EcgRecord read_ecgb(const std::filesystem::path& path) {
  try {
    return decode_ecgb(read_file_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(e.kind(), path.string() + ": " + e.what());
  }
}

}  // namespace ecgjepa
