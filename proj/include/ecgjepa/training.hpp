// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "ecgjepa/model.hpp"
#include "ecgjepa/optimizer.hpp"
#include "ecgjepa/patching.hpp"
#include "ecgjepa/rng.hpp"

namespace ecgjepa {

enum class MaskStrategy { Random, MultiBlock };

std::string_view mask_strategy_name(MaskStrategy s);
MaskStrategy parse_mask_strategy(std::string_view name);

struct TrainConfig {
  double learning_rate = 2.5e-5;
  double weight_decay = 0.05;
  int batch_size = 128;
  int epochs = 100;
  int warmup_epochs = 5;
  MaskStrategy mask_strategy = MaskStrategy::Random;
  double mask_ratio_lo = 0.6;
  double mask_ratio_hi = 0.7;
  int mask_freq = 1;
  double ema0 = 0.996;
  double ema1 = 1.0;
  std::uint64_t seed = 0;
  bool base_lr_scaling = false;

  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Draws one plan with the configured strategy.
MaskPlan sample_mask(const TrainConfig& config, int n, Rng& rng);

/// Everything a pretraining run mutates. Only the training loop writes it.
struct TrainingState {
  ModelConfig model;
  TrainConfig train;
  JepaParameters<float> params;
  AdamW<float> student_optimizer;
  AdamW<float> predictor_optimizer;
  Rng rng;
  std::int64_t step = 0;
  std::int64_t steps_per_epoch = 1;

  std::int64_t total_steps() const { return steps_per_epoch * train.epochs; }
  std::int64_t warmup_steps() const { return steps_per_epoch * train.warmup_epochs; }
  EmaSchedule ema_schedule() const { return {train.ema0, train.ema1, total_steps()}; }
};

/// Fresh state: parameters initialised from Rng(train.seed), teacher = student.
TrainingState make_training_state(const ModelConfig& model, const TrainConfig& train, std::int64_t steps_per_epoch);

struct StepOptions {
  bool apply_ema = true;
};

/// One optimisation step on a batch sharing (L, N, t): one mask plan for the
/// batch, mean objective over the batch, AdamW on student and predictor at
/// lr_at(step), then the teacher EMA with ema_beta(step). Returns the mean loss.
double pretrain_step(TrainingState& state, std::span<const PatchGrid* const> batch, StepOptions options = {});
double pretrain_step(TrainingState& state, std::span<const PatchGrid> batch, StepOptions options = {});

/// Sample order for one epoch; a pure function of (seed, epoch, n).
std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n);

std::int64_t steps_per_epoch(std::size_t dataset_size, int batch_size);

struct EpochLog {
  int epoch = 0;
  double mean_loss = 0.0;
  std::int64_t steps = 0;
};

using EpochCallback = std::function<void(const EpochLog&, const TrainingState&)>;

/// Runs the remaining epochs of `state` over `dataset` (a state's step counter
/// determines the starting epoch). Returns the per-epoch log.
std::vector<EpochLog> run_pretraining(TrainingState& state, const std::vector<PatchGrid>& dataset,
                                      const EpochCallback& on_epoch = {});

struct PretrainResult {
  TrainingState state;
  std::vector<EpochLog> log;
};

/// epochs x ceil(|dataset| / batch) steps from a fresh state.
PretrainResult pretrain(const TrainConfig& train, const ModelConfig& model, const std::vector<PatchGrid>& dataset,
                        const EpochCallback& on_epoch = {});

}  // namespace ecgjepa
