// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "ecgjepa/corpus.hpp"
#include "ecgjepa/downstream.hpp"
#include "ecgjepa/ecg.hpp"
#include "ecgjepa/model.hpp"
#include "ecgjepa/training.hpp"

namespace ecgjepa {

/// Where records come from. Pretraining reads corpus_dir and downstream
/// protocols read eval_corpus_dir; an empty directory means an in-memory
/// synthetic corpus drawn from `synth` with the matching count and seed.
struct DataConfig {
  std::string corpus_dir;
  std::size_t synth_count = 256;
  std::uint64_t synth_seed = 0;
  std::string eval_corpus_dir;
  std::size_t eval_synth_count = 512;
  std::uint64_t eval_synth_seed = 1;
  SynthRanges synth;
  std::vector<Lead> leads{kEightLeads.begin(), kEightLeads.end()};
  double test_fraction = 0.2;
  std::uint64_t split_seed = 0;
};

/// Downstream protocol selection for `eval`.
struct EvalConfig {
  std::string protocol = "probe";  // probe | finetune | lowshot | features
  std::string target = "class_label";
  double lowshot_fraction = 0.1;
  int repetitions = 3;
};

struct ExperimentConfig {
  ModelConfig model;
  TrainConfig train;
  ProbeConfig probe;
  FinetuneConfig finetune;
  DataConfig data;
  EvalConfig eval;
  std::string output_dir = "out";
};

nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const ProbeConfig& c);
nlohmann::json to_json(const FinetuneConfig& c);
nlohmann::json to_json(const SynthRanges& c);
nlohmann::json to_json(const DataConfig& c);
nlohmann::json to_json(const EvalConfig& c);
nlohmann::json to_json(const ExperimentConfig& c);

/// Each parser accepts a partial object (missing keys keep their defaults),
/// rejects unknown keys and wrong types, runs the type's validation, and
/// throws one ValidationError listing every offending field.
ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);
ProbeConfig probe_config_from_json(const nlohmann::json& j);
FinetuneConfig finetune_config_from_json(const nlohmann::json& j);
SynthRanges synth_ranges_from_json(const nlohmann::json& j);
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

/// Parses a JSON file; IoError when unreadable, ValidationError when invalid.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Sorted keys, no whitespace, shortest round-trip doubles.
std::string canonical_dump(const nlohmann::json& j);
/// 64-bit FNV-1a of the canonical form, as 16 lowercase hex digits.
std::string config_hash(const nlohmann::json& j);

}  // namespace ecgjepa
