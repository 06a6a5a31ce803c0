// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ecgjepa/layers.hpp"
#include "ecgjepa/patching.hpp"
#include "ecgjepa/rng.hpp"
#include "ecgjepa/tensor.hpp"

namespace ecgjepa {

struct ModelConfig {
  int encoder_layers = 12;
  int encoder_heads = 16;
  int encoder_dim = 768;
  int predictor_layers = 6;
  int predictor_heads = 12;
  int predictor_dim = 384;
  int patch_len = 50;
  double drop_path_rate = 0.1;
  bool use_cropa = true;

  /// Collects every violated constraint into one ValidationError.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

/// Linear momentum schedule for the teacher.
struct EmaSchedule {
  double ema0 = 0.996;
  double ema1 = 1.0;
  std::int64_t total_iterations = 1;

  void validate() const;

  friend bool operator==(const EmaSchedule&, const EmaSchedule&) = default;
};

/// Encoder or predictor output: one D-vector per token, tokens lead-major
/// (row l * time_count + k).
template <typename T>
struct RepresentationGrid {
  int lead_count = 0;
  int time_count = 0;
  Mat<T> values;

  Eigen::Index dim() const { return values.cols(); }
  auto token(int lead, int time) const { return values.row(lead * time_count + time); }
};

/// Row p: columns 2k, 2k+1 = sin, cos of p / 10000^(2k/dim). dim must be even.
Eigen::MatrixXd sinusoidal_table_1d(int count, int dim);

/// Row (lead * times + time): the first dim/2 columns are the 1-D table of the
/// time index, the last dim/2 the 1-D table of the lead index.
Eigen::MatrixXd sinusoidal_table_2d(int leads, int times, int dim);

using BoolMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Cross-pattern attention: token i may attend to token j iff they share a
/// lead or a time index.
BoolMatrix cropa_mask(std::span<const int> lead_index, std::span<const int> time_index);

/// Student, teacher and predictor weights. The teacher mirrors the student's
/// names and shapes and is only ever written by ema_update.
template <typename T>
struct JepaParameters {
  ParameterSet<T> student;
  ParameterSet<T> teacher;
  ParameterSet<T> predictor;
};

/// Truncated-normal(0.02) weights, zero biases, unit norm gains.
template <typename T>
ParameterSet<T> init_encoder_parameters(const ModelConfig& config, Rng& rng);
template <typename T>
ParameterSet<T> init_predictor_parameters(const ModelConfig& config, Rng& rng);
/// Student and predictor from `rng`; teacher starts as a copy of the student.
template <typename T>
JepaParameters<T> init_jepa_parameters(const ModelConfig& config, Rng& rng);

template <typename T>
struct EncoderCache {
  Mat<T> patches;
  Mat<T> bias;
  Eigen::Index segment_len = 0;
  bool has_bias = false;
  std::vector<nn::BlockCache<T>> blocks;
  nn::LayerNormCache<T> norm;
};

/// Patch embedding + 2-D sinusoidal positions (true lead/time positions),
/// pre-norm blocks with the cross-pattern mask when enabled, final norm.
/// A non-null drop_rng selects training mode: each residual branch is dropped
/// with probability drop_path_rate.
template <typename T>
RepresentationGrid<T> encode(const ParameterSet<T>& encoder, const TokenSet& tokens, const ModelConfig& config,
                             Rng* drop_rng = nullptr, EncoderCache<T>* cache = nullptr);

/// Accumulates encoder gradients for d(output values).
template <typename T>
void encode_backward(const ParameterSet<T>& encoder, const Mat<T>& d_out, const EncoderCache<T>& cache,
                     const ModelConfig& config, ParameterSet<T>& grads);

template <typename T>
struct PredictorCache {
  int lead_count = 0;
  Mat<T> reps_in;
  std::vector<nn::BlockCache<T>> blocks;
  nn::LayerNormCache<T> norm;
  Mat<T> normed;
};

/// Per lead: project the visible representations to the predictor width,
/// scatter them to their time slots, fill masked slots with the mask token,
/// add 1-D time positions, run full-attention blocks within the lead, and
/// project back. Output covers all N time slots of every lead.
template <typename T>
RepresentationGrid<T> predict(const ParameterSet<T>& predictor, const RepresentationGrid<T>& student_reps,
                              const MaskPlan& plan, const ModelConfig& config, PredictorCache<T>* cache = nullptr);

/// Accumulates predictor gradients; returns d(student_reps.values).
template <typename T>
Mat<T> predict_backward(const ParameterSet<T>& predictor, const Mat<T>& d_out, const PredictorCache<T>& cache,
                        const MaskPlan& plan, const ModelConfig& config, ParameterSet<T>& grads);

/// Smooth-L1 with transition point 1.
double smooth_l1(double d);

/// Prediction targets: per-token layer norm without affine parameters.
template <typename T>
RepresentationGrid<T> normalize_targets(const RepresentationGrid<T>& teacher_out);

/// Mean smooth-L1 over masked time slots of every lead and all features.
/// Visible slots contribute nothing. Writes d(loss)/d(predicted) when asked.
template <typename T>
double jepa_loss(const RepresentationGrid<T>& predicted, const RepresentationGrid<T>& target, const MaskPlan& plan,
                 Mat<T>* d_predicted = nullptr);

/// Full objective for one grid: teacher targets on all patches (no gradient),
/// student on visible patches, predictor, masked loss. Gradients for student
/// and predictor are accumulated with weight `grad_weight` when the grad sets
/// are given.
template <typename T>
double jepa_objective(const JepaParameters<T>& params, const PatchGrid& grid, const MaskPlan& plan,
                      const ModelConfig& config, Rng* drop_rng, ParameterSet<T>* student_grad,
                      ParameterSet<T>* predictor_grad, T grad_weight = T(1));

/// ema0 + i (ema1 - ema0) / total_iterations, for 0 <= i <= total_iterations.
double ema_beta(std::int64_t i, const EmaSchedule& schedule);

/// teacher <- beta teacher + (1 - beta) student, elementwise.
template <typename T>
void ema_update(ParameterSet<T>& teacher, const ParameterSet<T>& student, double beta);

}  // namespace ecgjepa
