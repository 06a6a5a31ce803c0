// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"

#include "ecgjepa/checkpoint.hpp"
#include "ecgjepa/config.hpp"

namespace ecgjepa {

/// Records plus their sidecar labels, in file-name order.
struct Dataset {
  std::vector<std::string> names;
  std::vector<EcgRecord> records;
  std::vector<nlohmann::json> labels;
};

/// Pretraining records: `corpus_dir`, or synth_count synthetic records.
Dataset load_dataset(const DataConfig& data);
/// Downstream records: `eval_corpus_dir`, or eval_synth_count synthetic
/// records drawn with eval_synth_seed.
Dataset load_eval_dataset(const DataConfig& data);
Dataset dataset_from_corpus(Corpus corpus);

/// Every record restricted to `leads` and patchified.
std::vector<PatchGrid> patch_dataset(const Dataset& data, std::span<const Lead> leads, int patch_len);

/// Numeric label column; ValidationError naming the record when missing.
Eigen::VectorXd label_column(const Dataset& data, const std::string& key);
std::vector<int> class_column(const Dataset& data, const std::string& key);

/// Hash of the canonical JSON form of the resolved configuration.
std::string experiment_hash(const ExperimentConfig& config);

struct PretrainRun {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
};

/// Pretrains on data.leads of `data` with model/train from `config`.
PretrainRun run_pretrain(const ExperimentConfig& config, const Dataset& data, const EpochCallback& on_epoch = {});

/// "epoch,mean_loss,steps" rows behind a "# config_hash=<hash>" line.
std::string loss_log_csv(const std::vector<EpochLog>& log, const std::string& hash);

/// The encoder a pretraining run starts from (same seed, no updates).
ParameterSet<float> untrained_encoder(const ModelConfig& model, const TrainConfig& train);

/// Linear probe repeated over `repetitions` paired (split, probe) seeds on
/// the classification target. Returns per-repetition and mean/std metrics.
nlohmann::json eval_probe(const ExperimentConfig& config, const ParameterSet<float>& encoder, const ModelConfig& model,
                          const Dataset& data);
/// Fine-tuning counterpart of eval_probe, with the probe run alongside.
nlohmann::json eval_finetune(const ExperimentConfig& config, const ParameterSet<float>& encoder,
                             const ModelConfig& model, const Dataset& data);
/// Probe trained on eval.repetitions independent subsets of the training
/// split of size eval.lowshot_fraction; one fixed test split.
nlohmann::json eval_lowshot(const ExperimentConfig& config, const ParameterSet<float>& encoder,
                            const ModelConfig& model, const Dataset& data);
/// Ridge regression of heart rate and QRS duration on pooled features.
nlohmann::json eval_features(const ExperimentConfig& config, const ParameterSet<float>& encoder,
                             const ModelConfig& model, const Dataset& data);

/// Dispatches on config.eval.protocol and stamps config hash and seeds.
nlohmann::json run_eval(const ExperimentConfig& config, const Checkpoint& checkpoint, const Dataset& data);

/// Paired runs of one ablation suite (cropa | maskratio | leads) over
/// `seeds` pretraining seeds, each followed by the probe protocol.
nlohmann::json run_ablation(const std::string& suite, const ExperimentConfig& config, const Dataset& pretrain_data,
                            const Dataset& eval_data, int seeds,
                            const std::function<void(const std::string&)>& progress = {});

/// Plain-text table for an eval or ablation report.
std::string render_report(const nlohmann::json& report);

/// Writes `text` atomically, creating parent directories.
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace ecgjepa
