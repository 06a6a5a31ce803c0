// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ecgjepa/ecg.hpp"
#include "ecgjepa/metrics.hpp"
#include "ecgjepa/model.hpp"
#include "ecgjepa/patching.hpp"

namespace ecgjepa {

/// Mean over all L x N tokens, per feature.
template <typename T>
Eigen::RowVectorXd pooled_representation(const RepresentationGrid<T>& reps);

/// Restricts each record to `leads` (in the given order, positions taken from
/// the canonical lead order), runs the encoder on every patch without masking
/// and pools. Returns n x D.
Eigen::MatrixXd extract_representations(const ParameterSet<float>& encoder, const ModelConfig& config,
                                        std::span<const EcgRecord> records, std::span<const Lead> leads);

/// n x C one-hot matrix.
Eigen::MatrixXd one_hot(std::span<const int> classes, int class_count);

struct ProbeConfig {
  double learning_rate = 5e-4;
  double weight_decay = 0.05;
  int batch_size = 32;
  int epochs = 10;
  int warmup_epochs = 3;
  std::uint64_t seed = 0;
  /// Feature-wise standardisation fitted on the training features. The head
  /// stays affine in the raw features.
  bool standardize = true;

  void validate() const;

  friend bool operator==(const ProbeConfig&, const ProbeConfig&) = default;
};

/// Affine classifier on (optionally standardised) features.
struct LinearHead {
  TaskKind task = TaskKind::MultiClass;
  Eigen::RowVectorXd center;
  Eigen::RowVectorXd inv_scale;
  Eigen::MatrixXd weight;  // D x C
  Eigen::RowVectorXd bias;

  Eigen::MatrixXd logits(const Eigen::MatrixXd& features) const;
  /// Sigmoid (multi-label) or softmax (multi-class) outputs.
  Eigen::MatrixXd scores(const Eigen::MatrixXd& features) const;
};

struct ProbeResult {
  LinearHead head;
  std::vector<double> epoch_loss;
};

/// Mean binary cross-entropy over labels (multi-label) or cross-entropy
/// (multi-class) of the head on (features, labels).
double classification_loss(const LinearHead& head, const Eigen::MatrixXd& features, const Eigen::MatrixXd& labels);

/// Trains a zero-initialised linear head with AdamW under warmup + cosine
/// decay, shuffling by epoch_order(seed, epoch). The encoder is not involved.
ProbeResult train_linear_probe(const Eigen::MatrixXd& features, const Eigen::MatrixXd& labels, TaskKind task,
                               const ProbeConfig& config);

struct FinetuneConfig {
  /// Head optimiser, batch size, epochs and shuffle seed.
  ProbeConfig head{5e-4, 0.05, 16, 10, 3, 0, true};
  double encoder_base_lr = 1e-4;
  /// Encoder lr = base * batch / 256 when set, else the base value itself.
  bool base_lr_scaling = true;

  double encoder_lr() const;
  void validate() const;

  friend bool operator==(const FinetuneConfig&, const FinetuneConfig&) = default;
};

struct FinetuneResult {
  ParameterSet<float> encoder;
  LinearHead head;
  std::vector<double> epoch_loss;
};

/// Trains the head and every encoder parameter end to end through pooling.
/// Standardisation statistics are fitted once on the initial encoder's
/// features. With encoder lr 0 the head trajectory equals
/// train_linear_probe on those features with the same head config.
FinetuneResult finetune(const ParameterSet<float>& encoder, const ModelConfig& config,
                        std::span<const PatchGrid> grids, const Eigen::MatrixXd& labels, TaskKind task,
                        const FinetuneConfig& ft);

/// Pooled encoder features of whole grids (no masking, evaluation mode).
Eigen::MatrixXd encode_pooled(const ParameterSet<float>& encoder, const ModelConfig& config,
                              std::span<const PatchGrid> grids);

struct RidgeModel {
  Eigen::VectorXd weight;
  double intercept = 0.0;

  Eigen::VectorXd predict(const Eigen::MatrixXd& features) const;
};

/// Closed-form ridge regression with an unpenalized intercept. Columns are
/// standardized on the fitting rows before `ridge` is added to the normal
/// matrix, so predictions are invariant to affine rescaling of any column.
RidgeModel fit_ridge(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, double ridge = 1e-6);

struct RegressionReport {
  double mae_mean = 0.0;
  double mae_std = 0.0;
  double baseline_mae_mean = 0.0;
  double baseline_mae_std = 0.0;
  int n_train = 0;
  int n_test = 0;
  std::vector<double> abs_errors;           // per test row
  std::vector<double> baseline_abs_errors;  // per test row
};

/// Fits on the training rows, reports absolute-error mean and std on the test
/// rows next to the constant training-mean predictor.
RegressionReport feature_regression(const Eigen::MatrixXd& train_x, const Eigen::VectorXd& train_y,
                                    const Eigen::MatrixXd& test_x, const Eigen::VectorXd& test_y,
                                    double ridge = 1e-6);

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Uniform held-out split: round(test_fraction * n) indices go to test. Both
/// lists are sorted and disjoint.
Split holdout_split(std::size_t n, double test_fraction, std::uint64_t seed);

/// n_seeds independent uniform subsets of [0, n) of size round(fraction * n),
/// each sorted. fraction 1 returns the full range for every seed.
std::vector<std::vector<std::size_t>> lowshot_splits(std::size_t n, double fraction, int n_seeds,
                                                     std::uint64_t seed);

/// Rows of `m` at `rows`, in order.
Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows);

}  // namespace ecgjepa
