// SPDX-License-Identifier: Apache-2.0
#include "ecgjepa/downstream.hpp"

#include <algorithm>
#include <cmath>

#include "ecgjepa/error.hpp"
#include "ecgjepa/optimizer.hpp"
#include "ecgjepa/rng.hpp"
#include "ecgjepa/training.hpp"

namespace ecgjepa {

template <typename T>
Eigen::RowVectorXd pooled_representation(const RepresentationGrid<T>& reps) {
  if (reps.values.rows() == 0) throw ValidationError("pooled_representation: empty grid");
  return reps.values.template cast<double>().colwise().mean();
}

template Eigen::RowVectorXd pooled_representation<float>(const RepresentationGrid<float>&);
template Eigen::RowVectorXd pooled_representation<double>(const RepresentationGrid<double>&);

Eigen::MatrixXd encode_pooled(const ParameterSet<float>& encoder, const ModelConfig& config,
                              std::span<const PatchGrid> grids) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(grids.size()), config.encoder_dim);
  for (std::size_t i = 0; i < grids.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = pooled_representation(encode(encoder, all_tokens(grids[i]), config));
  }
  return out;
}

Eigen::MatrixXd extract_representations(const ParameterSet<float>& encoder, const ModelConfig& config,
                                        std::span<const EcgRecord> records, std::span<const Lead> leads) {
  if (leads.empty()) throw ValidationError("extract_representations: empty lead subset");
  std::vector<PatchGrid> grids;
  grids.reserve(records.size());
  for (const auto& r : records) grids.push_back(patchify(r.select(leads), config.patch_len));
  return encode_pooled(encoder, config, grids);
}

Eigen::MatrixXd one_hot(std::span<const int> classes, int class_count) {
  if (class_count < 1) throw ValidationError("one_hot: class_count must be >= 1");
  Eigen::MatrixXd y = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(classes.size()), class_count);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] < 0 || classes[i] >= class_count) {
      throw ValidationError("one_hot: class " + std::to_string(classes[i]) + " outside [0, " +
                            std::to_string(class_count) + ")");
    }
    y(static_cast<Eigen::Index>(i), classes[i]) = 1.0;
  }
  return y;
}

void ProbeConfig::validate() const {
  std::vector<std::string> errors;
  if (!(learning_rate >= 0.0)) errors.push_back("learning_rate must be >= 0");
  if (!(weight_decay >= 0.0)) errors.push_back("weight_decay must be >= 0");
  if (batch_size < 1) errors.push_back("batch_size must be >= 1");
  if (epochs < 1) errors.push_back("epochs must be >= 1");
  if (warmup_epochs < 0 || warmup_epochs >= epochs) errors.push_back("warmup_epochs must be in [0, epochs)");
  if (!errors.empty()) {
    std::string msg = "invalid probe config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }
}

double FinetuneConfig::encoder_lr() const {
  return base_lr_scaling ? scaled_finetune_lr(encoder_base_lr, head.batch_size) : encoder_base_lr;
}

void FinetuneConfig::validate() const {
  head.validate();
  if (!(encoder_base_lr >= 0.0)) throw ValidationError("invalid finetune config:\n  encoder_base_lr must be >= 0");
}

namespace {

Eigen::MatrixXd standardized(const LinearHead& head, const Eigen::MatrixXd& x) {
  if (x.cols() != head.center.size()) {
    throw ValidationError("linear head expects " + std::to_string(head.center.size()) + " features, got " +
                          std::to_string(x.cols()));
  }
  return (x.rowwise() - head.center).array().rowwise() * head.inv_scale.array();
}

Eigen::MatrixXd activate(const Eigen::MatrixXd& z, TaskKind task) {
  if (task == TaskKind::MultiLabel) return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
  Eigen::MatrixXd p(z.rows(), z.cols());
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Eigen::RowVectorXd e = (z.row(i).array() - z.row(i).maxCoeff()).exp();
    p.row(i) = e / e.sum();
  }
  return p;
}

/// Numerically stable per-sample loss, summed.
double loss_sum(const Eigen::MatrixXd& z, const Eigen::MatrixXd& y, TaskKind task) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    if (task == TaskKind::MultiLabel) {
      for (Eigen::Index k = 0; k < z.cols(); ++k) {
        const double v = z(i, k);
        total += (std::max(v, 0.0) - v * y(i, k) + std::log1p(std::exp(-std::abs(v)))) / static_cast<double>(z.cols());
      }
    } else {
      const double m = z.row(i).maxCoeff();
      const double lse = m + std::log((z.row(i).array() - m).exp().sum());
      total += lse - z.row(i).dot(y.row(i));
    }
  }
  return total;
}

void validate_labels(const Eigen::MatrixXd& labels, TaskKind task) {
  if (labels.rows() < 2) throw ValidationError("classifier needs at least 2 samples");
  if (!((labels.array() == 0.0) || (labels.array() == 1.0)).all()) {
    throw ValidationError("labels must be 0 or 1");
  }
  if (task == TaskKind::MultiClass) {
    if (labels.cols() < 2) throw ValidationError("multi-class task needs at least 2 classes");
    if (!(labels.rowwise().sum().array() == 1.0).all()) throw ValidationError("multi-class labels must be one-hot");
    int present = 0;
    for (Eigen::Index k = 0; k < labels.cols(); ++k) present += labels.col(k).sum() > 0;
    if (present < 2) throw ValidationError("degenerate labels: only one class present in the training data");
  } else {
    bool varies = false;
    for (Eigen::Index k = 0; k < labels.cols(); ++k) {
      const double s = labels.col(k).sum();
      varies = varies || (s > 0 && s < static_cast<double>(labels.rows()));
    }
    if (!varies) throw ValidationError("degenerate labels: every label column is constant in the training data");
  }
}

LinearHead init_head(const Eigen::MatrixXd& features, Eigen::Index classes, TaskKind task, bool standardize) {
  LinearHead head;
  head.task = task;
  const Eigen::Index d = features.cols();
  head.center = Eigen::RowVectorXd::Zero(d);
  head.inv_scale = Eigen::RowVectorXd::Ones(d);
  if (standardize) {
    head.center = features.colwise().mean();
    for (Eigen::Index j = 0; j < d; ++j) {
      const double sd = std::sqrt((features.col(j).array() - head.center[j]).square().mean());
      head.inv_scale[j] = sd > 1e-9 ? 1.0 / sd : 0.0;
    }
  }
  head.weight = Eigen::MatrixXd::Zero(d, classes);
  head.bias = Eigen::RowVectorXd::Zero(classes);
  return head;
}

/// Head state shared by the probe and fine-tuning loops.
class HeadTrainer {
 public:
  HeadTrainer(LinearHead head, const ProbeConfig& config, std::int64_t total, std::int64_t warmup)
      : head_(std::move(head)), config_(config), total_(total), warmup_(warmup) {
    params_.insert("weight", Tensor<double>{{static_cast<std::uint32_t>(head_.weight.rows()),
                                             static_cast<std::uint32_t>(head_.weight.cols())},
                                            head_.weight});
    params_.insert("bias", Tensor<double>{{static_cast<std::uint32_t>(head_.bias.size())}, head_.bias});
    optimizer_ = AdamW<double>(params_);
  }

  /// One update on raw batch features; returns the mean batch loss and writes
  /// d(loss)/d(raw features) when asked.
  double step(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, std::int64_t step, Eigen::MatrixXd* dx) {
    const Eigen::MatrixXd xs = standardized(head_, x);
    const Eigen::MatrixXd z = (xs * head_.weight).rowwise() + head_.bias;
    const double b = static_cast<double>(x.rows());
    const double loss = loss_sum(z, y, head_.task) / b;
    Eigen::MatrixXd dz = activate(z, head_.task) - y;
    dz /= head_.task == TaskKind::MultiLabel ? b * static_cast<double>(y.cols()) : b;
    if (dx != nullptr) {
      *dx = (dz * head_.weight.transpose()).array().rowwise() * head_.inv_scale.array();
    }
    ParameterSet<double> grads = params_.zeros_like();
    grads["weight"] = xs.transpose() * dz;
    grads["bias"] = dz.colwise().sum();
    optimizer_.step(params_, grads, lr_at(step, total_, warmup_, config_.learning_rate), config_.weight_decay);
    head_.weight = params_["weight"];
    head_.bias = params_["bias"].row(0);
    return loss;
  }

  const LinearHead& head() const { return head_; }

 private:
  LinearHead head_;
  ProbeConfig config_;
  std::int64_t total_;
  std::int64_t warmup_;
  ParameterSet<double> params_;
  AdamW<double> optimizer_;
};

std::vector<std::vector<std::size_t>> batches_for_epoch(const ProbeConfig& config, int epoch, std::size_t n) {
  const auto order = epoch_order(config.seed, epoch, n);
  std::vector<std::vector<std::size_t>> out;
  const auto bs = static_cast<std::size_t>(config.batch_size);
  for (std::size_t s = 0; s < n; s += bs) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(s),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, s + bs)));
  }
  return out;
}

}  // namespace

Eigen::MatrixXd LinearHead::logits(const Eigen::MatrixXd& features) const {
  return (standardized(*this, features) * weight).rowwise() + bias;
}

Eigen::MatrixXd LinearHead::scores(const Eigen::MatrixXd& features) const { return activate(logits(features), task); }

double classification_loss(const LinearHead& head, const Eigen::MatrixXd& features, const Eigen::MatrixXd& labels) {
  if (features.rows() != labels.rows() || labels.cols() != head.weight.cols()) {
    throw ValidationError("classification_loss: shape mismatch");
  }
  return loss_sum(head.logits(features), labels, head.task) / static_cast<double>(features.rows());
}

ProbeResult train_linear_probe(const Eigen::MatrixXd& features, const Eigen::MatrixXd& labels, TaskKind task,
                               const ProbeConfig& config) {
  config.validate();
  if (features.rows() != labels.rows()) throw ValidationError("train_linear_probe: features and labels differ in rows");
  if (!features.allFinite()) throw ValidationError("train_linear_probe: non-finite features");
  validate_labels(labels, task);
  const auto n = static_cast<std::size_t>(features.rows());
  const std::int64_t spe = steps_per_epoch(n, config.batch_size);
  HeadTrainer trainer(init_head(features, labels.cols(), task, config.standardize), config, spe * config.epochs,
                      spe * config.warmup_epochs);
  ProbeResult result;
  std::int64_t step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double sum = 0.0;
    const auto batches = batches_for_epoch(config, epoch, n);
    for (const auto& batch : batches) {
      sum += trainer.step(take_rows(features, batch), take_rows(labels, batch), step++, nullptr);
    }
    result.epoch_loss.push_back(sum / static_cast<double>(batches.size()));
  }
  result.head = trainer.head();
  return result;
}

FinetuneResult finetune(const ParameterSet<float>& encoder, const ModelConfig& config,
                        std::span<const PatchGrid> grids, const Eigen::MatrixXd& labels, TaskKind task,
                        const FinetuneConfig& ft) {
  ft.validate();
  config.validate();
  if (static_cast<Eigen::Index>(grids.size()) != labels.rows()) {
    throw ValidationError("finetune: grids and labels differ in count");
  }
  validate_labels(labels, task);
  const ProbeConfig& hc = ft.head;
  const std::size_t n = grids.size();
  const std::int64_t spe = steps_per_epoch(n, hc.batch_size);
  const std::int64_t total = spe * hc.epochs;
  const std::int64_t warmup = spe * hc.warmup_epochs;
  const double encoder_peak = ft.encoder_lr();

  const Eigen::MatrixXd initial = encode_pooled(encoder, config, grids);
  HeadTrainer trainer(init_head(initial, labels.cols(), task, hc.standardize), hc, total, warmup);
  FinetuneResult result;
  result.encoder = encoder;
  AdamW<float> encoder_optimizer(result.encoder);

  std::int64_t step = 0;
  for (int epoch = 0; epoch < hc.epochs; ++epoch) {
    double sum = 0.0;
    const auto batches = batches_for_epoch(hc, epoch, n);
    for (const auto& batch : batches) {
      const Eigen::MatrixXd y = take_rows(labels, batch);
      if (encoder_peak == 0.0) {
        sum += trainer.step(take_rows(initial, batch), y, step++, nullptr);
        continue;
      }
      std::vector<EncoderCache<float>> caches(batch.size());
      Eigen::MatrixXd x(static_cast<Eigen::Index>(batch.size()), config.encoder_dim);
      std::vector<Eigen::Index> token_counts(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto reps = encode(result.encoder, all_tokens(grids[batch[i]]), config, nullptr, &caches[i]);
        x.row(static_cast<Eigen::Index>(i)) = pooled_representation(reps);
        token_counts[i] = reps.values.rows();
      }
      Eigen::MatrixXd dx;
      const double lr = lr_at(step, total, warmup, encoder_peak);
      sum += trainer.step(x, y, step++, &dx);
      ParameterSet<float> grads = result.encoder.zeros_like();
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const Eigen::RowVectorXf row =
            (dx.row(static_cast<Eigen::Index>(i)) / static_cast<double>(token_counts[i])).cast<float>();
        const Mat<float> d_out = row.replicate(token_counts[i], 1);
        encode_backward(result.encoder, d_out, caches[i], config, grads);
      }
      encoder_optimizer.step(result.encoder, grads, lr, hc.weight_decay);
      if (!result.encoder.all_finite()) throw NumericError("finetune: non-finite encoder parameters");
    }
    result.epoch_loss.push_back(sum / static_cast<double>(batches.size()));
  }
  result.head = trainer.head();
  return result;
}

Eigen::VectorXd RidgeModel::predict(const Eigen::MatrixXd& features) const {
  if (features.cols() != weight.size()) throw ValidationError("ridge model: feature width mismatch");
  return (features * weight).array() + intercept;
}

RidgeModel fit_ridge(const Eigen::MatrixXd& features, const Eigen::VectorXd& targets, double ridge) {
  if (features.rows() != targets.size()) throw ValidationError("fit_ridge: features and targets differ in rows");
  if (features.rows() < 1) throw ValidationError("fit_ridge: no samples");
  if (!targets.allFinite()) throw ValidationError("fit_ridge: NaN or infinite targets");
  if (!features.allFinite()) throw ValidationError("fit_ridge: non-finite features");
  if (!(ridge >= 0.0)) throw ValidationError("fit_ridge: ridge must be >= 0");
  // Solved on standardized columns so `ridge` is scale-free; the intercept is
  // the unpenalized centering term. Constant columns get weight 0.
  const Eigen::RowVectorXd mean = features.colwise().mean();
  Eigen::MatrixXd z = features.rowwise() - mean;
  const Eigen::RowVectorXd sd = (z.array().square().colwise().sum() / static_cast<double>(z.rows())).sqrt();
  Eigen::RowVectorXd inv_sd = Eigen::RowVectorXd::Zero(sd.size());
  for (Eigen::Index j = 0; j < sd.size(); ++j) {
    if (sd[j] > 1e-12 * std::max(1.0, std::abs(mean[j]))) inv_sd[j] = 1.0 / sd[j];
  }
  z = z.array().rowwise() * inv_sd.array();
  const double y_mean = targets.mean();
  Eigen::MatrixXd normal = z.transpose() * z;
  normal.diagonal().array() += ridge;
  const Eigen::VectorXd w = normal.ldlt().solve(z.transpose() * (targets.array() - y_mean).matrix());
  const Eigen::VectorXd weight = w.cwiseProduct(inv_sd.transpose());
  return RidgeModel{weight, y_mean - mean.dot(weight)};
}

RegressionReport feature_regression(const Eigen::MatrixXd& train_x, const Eigen::VectorXd& train_y,
                                    const Eigen::MatrixXd& test_x, const Eigen::VectorXd& test_y, double ridge) {
  if (test_x.rows() != test_y.size() || test_x.rows() < 1) throw ValidationError("feature_regression: bad test set");
  if (!test_y.allFinite()) throw ValidationError("feature_regression: NaN or infinite targets");
  const RidgeModel model = fit_ridge(train_x, train_y, ridge);
  const Eigen::VectorXd err = (model.predict(test_x) - test_y).cwiseAbs();
  const Eigen::VectorXd base = (test_y.array() - train_y.mean()).abs();
  RegressionReport r;
  std::tie(r.mae_mean, r.mae_std) = mean_std(std::span<const double>(err.data(), static_cast<std::size_t>(err.size())));
  std::tie(r.baseline_mae_mean, r.baseline_mae_std) =
      mean_std(std::span<const double>(base.data(), static_cast<std::size_t>(base.size())));
  r.n_train = static_cast<int>(train_x.rows());
  r.n_test = static_cast<int>(test_x.rows());
  r.abs_errors.assign(err.data(), err.data() + err.size());
  r.baseline_abs_errors.assign(base.data(), base.data() + base.size());
  return r;
}

Split holdout_split(std::size_t n, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ValidationError("test_fraction must be in (0, 1)");
  const auto k = static_cast<std::size_t>(std::round(test_fraction * static_cast<double>(n)));
  if (k == 0 || k >= n) throw ValidationError("holdout_split: split leaves an empty side");
  Rng rng(derive_seed(seed, 0x5b117ULL));
  const auto perm = permutation(n, rng);
  Split s{{perm.begin() + static_cast<std::ptrdiff_t>(k), perm.end()},
          {perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k)}};
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::vector<std::vector<std::size_t>> lowshot_splits(std::size_t n, double fraction, int n_seeds,
                                                     std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ValidationError("lowshot fraction must be in (0, 1]");
  if (n_seeds < 1) throw ValidationError("lowshot n_seeds must be >= 1");
  const auto k = static_cast<std::size_t>(std::round(fraction * static_cast<double>(n)));
  if (k == 0) throw ValidationError("lowshot subset would be empty");
  std::vector<std::vector<std::size_t>> out;
  for (int s = 0; s < n_seeds; ++s) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(s) + 1));
    auto perm = permutation(n, rng);
    perm.resize(k);
    std::sort(perm.begin(), perm.end());
    out.push_back(std::move(perm));
  }
  return out;
}

Eigen::MatrixXd take_rows(const Eigen::MatrixXd& m, std::span<const std::size_t> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= static_cast<std::size_t>(m.rows())) throw ValidationError("take_rows: index out of range");
    out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(rows[i]));
  }
  return out;
}

}  // namespace ecgjepa
