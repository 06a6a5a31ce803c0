// SPDX-License-Identifier: Apache-2.0
#include "ecgjepa/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ecgjepa/error.hpp"

namespace ecgjepa {

std::string_view task_kind_name(TaskKind kind) {
  return kind == TaskKind::MultiLabel ? "multilabel" : "multiclass";
}

TaskKind parse_task_kind(std::string_view name) {
  if (name == "multilabel") return TaskKind::MultiLabel;
  if (name == "multiclass") return TaskKind::MultiClass;
  throw ValidationError("unknown task '" + std::string(name) + "' (expected multilabel|multiclass)");
}

double binary_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw ValidationError("binary_auc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0) {
        positive_rank_sum += midrank;
        ++positives;
      }
    }
    i = j;
  }
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) throw ValidationError("binary_auc: need at least one positive and one negative");
  const double p = static_cast<double>(positives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(negatives));
}

double binary_f1(std::span<const int> predicted, std::span<const int> labels) {
  if (predicted.size() != labels.size()) throw ValidationError("binary_f1: length mismatch");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool p = predicted[i] != 0, y = labels[i] != 0;
    tp += p && y;
    fp += p && !y;
    fn += !p && y;
  }
  const double denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : 2 * tp / denom;
}

MetricsReport evaluate(const Eigen::MatrixXd& scores, const Eigen::MatrixXd& labels, TaskKind task) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols()) {
    throw ValidationError("evaluate: scores and labels differ in shape");
  }
  if (scores.rows() < 2) throw ValidationError("evaluate: need at least 2 samples");
  if (scores.cols() < 1) throw ValidationError("evaluate: need at least 1 class");
  if (!scores.allFinite()) throw ValidationError("evaluate: non-finite scores");
  const auto n = scores.rows();
  const auto c = scores.cols();

  Eigen::MatrixXi hard = Eigen::MatrixXi::Zero(n, c);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (task == TaskKind::MultiLabel) {
      for (Eigen::Index k = 0; k < c; ++k) hard(i, k) = scores(i, k) >= 0.5;
    } else {
      Eigen::Index best = 0;
      scores.row(i).maxCoeff(&best);
      hard(i, best) = 1;
    }
  }

  MetricsReport report;
  report.n_samples = static_cast<int>(n);
  report.mae_mean = report.mae_std = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> col_scores(static_cast<std::size_t>(n));
  std::vector<int> col_labels(static_cast<std::size_t>(n)), col_hard(static_cast<std::size_t>(n));
  double auc_sum = 0.0;
  int auc_count = 0;
  for (Eigen::Index k = 0; k < c; ++k) {
    int positives = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double y = labels(i, k);
      if (y != 0.0 && y != 1.0) throw ValidationError("evaluate: labels must be 0 or 1");
      col_scores[i] = scores(i, k);
      col_labels[i] = static_cast<int>(y);
      col_hard[i] = hard(i, k);
      positives += col_labels[i];
    }
    report.per_class_f1.push_back(binary_f1(col_hard, col_labels));
    if (positives == 0 || positives == n) {
      report.per_class_auc.push_back(std::numeric_limits<double>::quiet_NaN());
      report.excluded_classes.push_back(static_cast<int>(k));
      continue;
    }
    report.per_class_auc.push_back(binary_auc(col_scores, col_labels));
    auc_sum += report.per_class_auc.back();
    ++auc_count;
  }
  if (auc_count == 0) throw ValidationError("evaluate: every class lacks positives or negatives");
  report.macro_auc = auc_sum / auc_count;
  report.macro_f1 = std::accumulate(report.per_class_f1.begin(), report.per_class_f1.end(), 0.0) /
                    static_cast<double>(c);
  return report;
}

std::pair<double, double> mean_std(std::span<const double> values) {
  if (values.empty()) throw ValidationError("mean_std: empty input");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() == 1) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

}  // namespace ecgjepa
