// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ecgjepa/ecg.hpp"

namespace ecgjepa {

/// Sidecar file next to the ECGB records: one JSON object per line, each
/// carrying the record filename under "record" plus its labels.
inline constexpr const char* kLabelsFileName = "labels.jsonl";

struct CorpusItem {
  std::string name;  // record filename relative to the corpus directory
  EcgRecord record;
  nlohmann::json labels;
};

using Corpus = std::vector<CorpusItem>;

nlohmann::json ground_truth_json(const EcgGroundTruth& truth);

/// Sidecar lines in file order. Malformed lines are reported with their line number.
std::vector<std::pair<std::string, nlohmann::json>> read_sidecar(const std::filesystem::path& path);
void write_sidecar(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, nlohmann::json>>& entries);

/// Loads every record listed in <dir>/labels.jsonl, in sidecar order.
Corpus load_corpus(const std::filesystem::path& dir);

/// Per-record parameter ranges for synthetic corpora; each record draws every
/// parameter uniformly from its [min, max].
struct SynthRanges {
  std::pair<double, double> heart_rate_bpm{50.0, 100.0};
  std::pair<double, double> qrs_duration_ms{70.0, 120.0};
  std::pair<double, double> rr_jitter_frac{0.0, 0.05};
  std::pair<double, double> noise_std_mv{0.02, 0.05};
  std::pair<double, double> baseline_wander_amp_mv{0.0, 0.1};
  double duration_s = 10.0;
  double sample_rate_hz = 250.0;
  int lead_count = 8;

  void validate() const;
};

/// Parameters of the i-th record of a synthetic corpus; a pure function of (ranges, seed, i).
SyntheticEcgSpec draw_synthetic_spec(const SynthRanges& ranges, std::uint64_t seed, std::size_t index);

/// In-memory synthetic corpus named rec_00000.ecgb, rec_00001.ecgb, ...
Corpus make_synthetic_corpus(std::size_t count, const SynthRanges& ranges, std::uint64_t seed);

/// Writes each record as ECGB plus the labels sidecar.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus);

/// Converts the plain interchange form (manifest JSON listing one CSV per
/// record; CSV header = lead names, one column per lead) into an ECGB corpus
/// at 250 Hz with 8 leads, or 12 when keep12 is set.
///
/// Manifest: {"records": [{"file": "a.csv", "sample_rate_hz": 500, "labels": {...}}, ...]}
/// with CSV paths relative to the manifest.
Corpus convert_corpus(const std::filesystem::path& manifest, bool keep12);

/// Parses one interchange CSV; errors name the file and line.
EcgRecord parse_record_csv(const std::filesystem::path& path, double sample_rate_hz);

}  // namespace ecgjepa
