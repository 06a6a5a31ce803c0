// SPDX-License-Identifier: Apache-2.0
#include "ecgjepa/corpus.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ecgjepa/ecgb.hpp"
#include "ecgjepa/error.hpp"
#include "ecgjepa/rng.hpp"

namespace ecgjepa {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\"");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\"");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) cells.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

void check_range(const std::pair<double, double>& r, const char* name) {
  if (!(r.first <= r.second)) throw ValidationError(std::string("synth range ") + name + ": min > max");
}

}  // namespace

nlohmann::json ground_truth_json(const EcgGroundTruth& truth) {
  return {{"heart_rate_bpm", truth.heart_rate_bpm},
          {"qrs_duration_ms", truth.qrs_duration_ms},
          {"class_label", truth.class_label},
          {"rr_interval_ms", truth.rr_interval_ms}};
}

std::vector<std::pair<std::string, nlohmann::json>> read_sidecar(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::vector<std::pair<std::string, nlohmann::json>> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    nlohmann::json obj;
    try {
      obj = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object() || !obj.contains("record") || !obj["record"].is_string()) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": expected an object with a string \"record\" field");
    }
    std::string name = obj["record"].get<std::string>();
    obj.erase("record");
    entries.emplace_back(std::move(name), std::move(obj));
  }
  return entries;
}

void write_sidecar(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, nlohmann::json>>& entries) {
  std::string text;
  for (const auto& [name, labels] : entries) {
    nlohmann::json line = labels;
    line["record"] = name;
    text += line.dump() + "\n";
  }
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

Corpus load_corpus(const std::filesystem::path& dir) {
  Corpus corpus;
  for (auto& [name, labels] : read_sidecar(dir / kLabelsFileName)) {
    corpus.push_back(CorpusItem{name, read_ecgb(dir / name), std::move(labels)});
  }
  if (corpus.empty()) throw ValidationError("corpus " + dir.string() + " is empty");
  return corpus;
}

void SynthRanges::validate() const {
  check_range(heart_rate_bpm, "heart_rate_bpm");
  check_range(qrs_duration_ms, "qrs_duration_ms");
  check_range(rr_jitter_frac, "rr_jitter_frac");
  check_range(noise_std_mv, "noise_std_mv");
  check_range(baseline_wander_amp_mv, "baseline_wander_amp_mv");
}

SyntheticEcgSpec draw_synthetic_spec(const SynthRanges& ranges, std::uint64_t seed, std::size_t index) {
  Rng rng(derive_seed(seed, index));
  SyntheticEcgSpec spec;
  spec.heart_rate_bpm = rng.uniform(ranges.heart_rate_bpm.first, ranges.heart_rate_bpm.second);
  spec.qrs_duration_ms = rng.uniform(ranges.qrs_duration_ms.first, ranges.qrs_duration_ms.second);
  spec.rr_jitter_frac = rng.uniform(ranges.rr_jitter_frac.first, ranges.rr_jitter_frac.second);
  spec.noise_std_mv = rng.uniform(ranges.noise_std_mv.first, ranges.noise_std_mv.second);
  spec.baseline_wander_amp_mv =
      rng.uniform(ranges.baseline_wander_amp_mv.first, ranges.baseline_wander_amp_mv.second);
  spec.duration_s = ranges.duration_s;
  spec.sample_rate_hz = ranges.sample_rate_hz;
  spec.lead_count = ranges.lead_count;
  return spec;
}

Corpus make_synthetic_corpus(std::size_t count, const SynthRanges& ranges, std::uint64_t seed) {
  ranges.validate();
  Corpus corpus;
  corpus.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const SyntheticEcgSpec spec = draw_synthetic_spec(ranges, seed, i);
    auto [record, truth] = generate_synthetic(spec, derive_seed(seed ^ 0x5ec0dULL, i));
    char name[32];
    std::snprintf(name, sizeof(name), "rec_%05zu.ecgb", i);
    corpus.push_back(CorpusItem{name, std::move(record), ground_truth_json(truth)});
  }
  return corpus;
}

void write_corpus(const std::filesystem::path& dir, const Corpus& corpus) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
  std::vector<std::pair<std::string, nlohmann::json>> entries;
  for (const auto& item : corpus) {
    write_ecgb(dir / item.name, item.record);
    entries.emplace_back(item.name, item.labels);
  }
  write_sidecar(dir / kLabelsFileName, entries);
}

EcgRecord parse_record_csv(const std::filesystem::path& path, double sample_rate_hz) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw ValidationError(path.string() + ":1: missing header row");
  std::vector<Lead> leads;
  for (const auto& cell : split_csv_line(line)) {
    const auto lead = parse_lead(cell);
    if (!lead) throw ValidationError(path.string() + ":1: unknown lead name '" + cell + "'");
    leads.push_back(*lead);
  }
  std::vector<std::vector<double>> columns(leads.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != leads.size()) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                            std::to_string(leads.size()) + " columns, found " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < cells.size(); ++c) {
      double v = 0.0;
      const auto* first = cells[c].data();
      const auto* last = first + cells[c].size();
      const auto res = std::from_chars(first, last, v);
      if (res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
        throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": bad number '" + cells[c] +
                              "' in column " + std::to_string(c + 1));
      }
      columns[c].push_back(v);
    }
  }
  if (columns.empty() || columns[0].empty()) throw ValidationError(path.string() + ": no samples");
  EcgRecord::Samples samples(static_cast<Eigen::Index>(leads.size()),
                             static_cast<Eigen::Index>(columns[0].size()));
  for (std::size_t l = 0; l < leads.size(); ++l) {
    for (std::size_t k = 0; k < columns[l].size(); ++k) {
      samples(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(k)) = columns[l][k];
    }
  }
  try {
    return EcgRecord(std::move(leads), sample_rate_hz, std::move(samples));
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

Corpus convert_corpus(const std::filesystem::path& manifest, bool keep12) {
  std::ifstream in(manifest);
  if (!in) throw IoError("cannot open " + manifest.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(manifest.string() + ": " + e.what());
  }
  if (!doc.contains("records") || !doc["records"].is_array()) {
    throw ValidationError(manifest.string() + ": missing \"records\" array");
  }
  const auto base = manifest.parent_path();
  Corpus corpus;
  std::size_t index = 0;
  for (const auto& entry : doc["records"]) {
    const std::string where = manifest.string() + ": records[" + std::to_string(index++) + "]";
    if (!entry.contains("file") || !entry["file"].is_string()) throw ValidationError(where + ": missing \"file\"");
    if (!entry.contains("sample_rate_hz") || !entry["sample_rate_hz"].is_number()) {
      throw ValidationError(where + ": missing numeric \"sample_rate_hz\"");
    }
    const std::filesystem::path csv = base / entry["file"].get<std::string>();
    EcgRecord record = parse_record_csv(csv, entry["sample_rate_hz"].get<double>());
    for (Lead lead : kEightLeads) {
      if (!record.has(lead)) {
        throw ValidationError(csv.string() + ": missing lead " + std::string(lead_name(lead)) +
                              "; cannot derive the standard lead set");
      }
    }
    record = resample(record, 250.0);
    record = reduce_to_8_leads(record);
    if (keep12) record = derive_full_leads(record);
    std::string name = std::filesystem::path(entry["file"].get<std::string>()).stem().string() + ".ecgb";
    corpus.push_back(CorpusItem{std::move(name), std::move(record),
                                entry.value("labels", nlohmann::json::object())});
  }
  return corpus;
}

}  // namespace ecgjepa
