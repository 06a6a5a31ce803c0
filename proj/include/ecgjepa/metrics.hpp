// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ecgjepa {

enum class TaskKind { MultiLabel, MultiClass };

std::string_view task_kind_name(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);

/// Classification metrics, plus the regression error summary when filled by
/// feature regression. Undefined entries are NaN.
struct MetricsReport {
  std::vector<double> per_class_auc;
  std::vector<double> per_class_f1;
  /// Classes with no positives or no negatives; their AUC is NaN and they do
  /// not enter macro_auc.
  std::vector<int> excluded_classes;
  double macro_auc = 0.0;
  double macro_f1 = 0.0;
  double mae_mean = 0.0;
  double mae_std = 0.0;
  int n_samples = 0;
};

/// Mann-Whitney AUC with midranks for ties: P(score+ > score-) + P(tie) / 2.
/// Throws ValidationError unless both label values are present.
double binary_auc(std::span<const double> scores, std::span<const int> labels);

/// F1 of hard predictions; 0 when the class is never predicted nor present.
double binary_f1(std::span<const int> predicted, std::span<const int> labels);

/// scores: n x C. labels: n x C in {0, 1} (one-hot rows for MultiClass).
/// AUC is one-vs-rest per class. F1 uses score >= 0.5 for MultiLabel and
/// the row argmax for MultiClass.
MetricsReport evaluate(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& labels, TaskKind task);

/// Mean and sample standard deviation (n - 1 denominator; 0 for n = 1).
std::pair<double, double> mean_std(std::span<const double> values);

}  // namespace ecgjepa
