// SPDX-License-Identifier: Apache-2.0
#include "ecgjepa/training.hpp"

#include <cmath>
#include <sstream>

#include "ecgjepa/error.hpp"

namespace ecgjepa {

std::string_view mask_strategy_name(MaskStrategy s) {
  return s == MaskStrategy::Random ? "random" : "multiblock";
}

MaskStrategy parse_mask_strategy(std::string_view name) {
  if (name == "random") return MaskStrategy::Random;
  if (name == "multiblock") return MaskStrategy::MultiBlock;
  throw ValidationError("unknown mask strategy '" + std::string(name) + "' (expected random|multiblock)");
}

void TrainConfig::validate() const {
  std::vector<std::string> errors;
  if (!(learning_rate > 0.0)) errors.push_back("learning_rate must be > 0");
  if (!(weight_decay >= 0.0)) errors.push_back("weight_decay must be >= 0");
  if (batch_size < 1) errors.push_back("batch_size must be >= 1");
  if (epochs < 1) errors.push_back("epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) errors.push_back("warmup_epochs must be in [0, epochs)");
  if (!(mask_ratio_lo > 0.0 && mask_ratio_lo <= mask_ratio_hi && mask_ratio_hi < 1.0)) {
    errors.push_back("mask ratio must satisfy 0 < lo <= hi < 1");
  }
  if (mask_freq < 1) errors.push_back("mask_freq must be >= 1");
  if (!(0.0 <= ema0 && ema0 <= ema1 && ema1 <= 1.0)) errors.push_back("ema must satisfy 0 <= ema0 <= ema1 <= 1");
  if (!errors.empty()) {
    std::string msg = "invalid train config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }
}

MaskPlan sample_mask(const TrainConfig& config, int n, Rng& rng) {
  if (config.mask_strategy == MaskStrategy::Random) {
    return sample_random_mask(n, config.mask_ratio_lo, config.mask_ratio_hi, rng);
  }
  return sample_multiblock_mask(n, config.mask_ratio_lo, config.mask_ratio_hi, config.mask_freq, rng);
}

TrainingState make_training_state(const ModelConfig& model, const TrainConfig& train, std::int64_t steps_per_epoch) {
  model.validate();
  train.validate();
  if (steps_per_epoch < 1) throw ValidationError("steps_per_epoch must be >= 1");
  TrainingState state;
  state.model = model;
  state.train = train;
  state.rng = Rng(train.seed);
  state.params = init_jepa_parameters<float>(model, state.rng);
  state.student_optimizer = AdamW<float>(state.params.student);
  state.predictor_optimizer = AdamW<float>(state.params.predictor);
  state.steps_per_epoch = steps_per_epoch;
  return state;
}

double pretrain_step(TrainingState& state, std::span<const PatchGrid* const> batch, StepOptions options) {
  if (batch.empty()) throw ValidationError("pretrain_step: empty batch");
  const PatchGrid& first = *batch.front();
  for (const PatchGrid* g : batch) {
    if (g->lead_count != first.lead_count || g->patch_count != first.patch_count ||
        g->patch_len != first.patch_len || g->lead_positions != first.lead_positions) {
      throw ValidationError("pretrain_step: batch grids differ in (L, N, t) or lead order");
    }
  }
  if (state.step >= state.total_steps()) throw ValidationError("pretrain_step: schedule already complete");

  const MaskPlan plan = sample_mask(state.train, first.patch_count, state.rng);
  ParameterSet<float> student_grad = state.params.student.zeros_like();
  ParameterSet<float> predictor_grad = state.params.predictor.zeros_like();
  const float weight = 1.0f / static_cast<float>(batch.size());
  Rng* drop_rng = state.model.drop_path_rate > 0.0 ? &state.rng : nullptr;

  double loss = 0.0;
  for (const PatchGrid* grid : batch) {
    loss += jepa_objective(state.params, *grid, plan, state.model, drop_rng, &student_grad, &predictor_grad, weight);
  }
  loss /= static_cast<double>(batch.size());
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "pretrain_step: non-finite loss at step " << state.step;
    throw NumericError(msg.str());
  }

  const double lr = lr_at(state.step, state.total_steps(), state.warmup_steps(), state.train.learning_rate);
  state.student_optimizer.step(state.params.student, student_grad, lr, state.train.weight_decay);
  state.predictor_optimizer.step(state.params.predictor, predictor_grad, lr, state.train.weight_decay);
  if (options.apply_ema) {
    ema_update(state.params.teacher, state.params.student, ema_beta(state.step, state.ema_schedule()));
  }
  ++state.step;
  return loss;
}

double pretrain_step(TrainingState& state, std::span<const PatchGrid> batch, StepOptions options) {
  std::vector<const PatchGrid*> ptrs;
  for (const auto& g : batch) ptrs.push_back(&g);
  return pretrain_step(state, std::span<const PatchGrid* const>(ptrs), options);
}

std::vector<std::size_t> epoch_order(std::uint64_t seed, int epoch, std::size_t n) {
  Rng rng(derive_seed(seed ^ 0xe90c4ULL, static_cast<std::uint64_t>(epoch)));
  return permutation(n, rng);
}

std::int64_t steps_per_epoch(std::size_t dataset_size, int batch_size) {
  if (dataset_size == 0) throw ValidationError("dataset is empty");
  if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
  return static_cast<std::int64_t>((dataset_size + static_cast<std::size_t>(batch_size) - 1) /
                                   static_cast<std::size_t>(batch_size));
}

std::vector<EpochLog> run_pretraining(TrainingState& state, const std::vector<PatchGrid>& dataset,
                                      const EpochCallback& on_epoch) {
  if (steps_per_epoch(dataset.size(), state.train.batch_size) != state.steps_per_epoch) {
    throw ValidationError("run_pretraining: dataset size does not match the state's steps_per_epoch");
  }
  std::vector<EpochLog> log;
  const auto batch_size = static_cast<std::size_t>(state.train.batch_size);
  for (int epoch = static_cast<int>(state.step / state.steps_per_epoch); epoch < state.train.epochs; ++epoch) {
    const auto order = epoch_order(state.train.seed, epoch, dataset.size());
    EpochLog entry;
    entry.epoch = epoch;
    for (std::size_t start = 0; start < order.size(); start += batch_size) {
      std::vector<const PatchGrid*> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + batch_size); ++i) {
        batch.push_back(&dataset[order[i]]);
      }
      entry.mean_loss += pretrain_step(state, std::span<const PatchGrid* const>(batch));
      ++entry.steps;
    }
    entry.mean_loss /= static_cast<double>(entry.steps);
    log.push_back(entry);
    if (on_epoch) on_epoch(entry, state);
  }
  return log;
}

PretrainResult pretrain(const TrainConfig& train, const ModelConfig& model, const std::vector<PatchGrid>& dataset,
                        const EpochCallback& on_epoch) {
  PretrainResult result{make_training_state(model, train, steps_per_epoch(dataset.size(), train.batch_size)), {}};
  result.log = run_pretraining(result.state, dataset, on_epoch);
  return result;
}

}  // namespace ecgjepa
