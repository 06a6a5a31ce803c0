// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "ecgjepa/downstream.hpp"
#include "ecgjepa/error.hpp"
#include "ecgjepa/metrics.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ecgjepa;

namespace {

Eigen::MatrixXd gaussian(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
  return Eigen::MatrixXd::NullaryExpr(rows, cols, [&] { return rng.normal(); });
}

/// Two classes separated along the first feature.
std::pair<Eigen::MatrixXd, std::vector<int>> separable(int n, Rng& rng) {
  Eigen::MatrixXd x = gaussian(n, 5, rng);
  std::vector<int> y(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    y[static_cast<std::size_t>(i)] = i % 2;
    x(i, 0) += i % 2 ? 4.0 : -4.0;
  }
  return {x, y};
}

}  // namespace

TEST_CASE("pooling: constant tokens, two-token mean, permutation symmetry") {
  RepresentationGrid<double> g{2, 3, Mat<double>(6, 4)};
  g.values.rowwise() = Eigen::RowVector4d(1.0, -2.0, 0.5, 3.0);
  CHECK(pooled_representation(g) == Eigen::RowVectorXd(Eigen::RowVector4d(1.0, -2.0, 0.5, 3.0)));
  RepresentationGrid<double> two{1, 2, Mat<double>::Zero(2, 3)};
  two.values(1, 0) = 2.0;
  CHECK(pooled_representation(two) == Eigen::RowVectorXd(Eigen::RowVector3d(1.0, 0.0, 0.0)));
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    RepresentationGrid<double> r{3, 4, Mat<double>::NullaryExpr(12, 5, [&] { return rng.normal(); })};
    const auto perm = permutation(12, rng);
    RepresentationGrid<double> p = r;
    for (std::size_t k = 0; k < 12; ++k) p.values.row(static_cast<Eigen::Index>(k)) = r.values.row(static_cast<Eigen::Index>(perm[k]));
    CHECK((pooled_representation(p) - pooled_representation(r)).cwiseAbs().maxCoeff() <= 1e-15);
  }
}

TEST_CASE("AUC: worked example and tie handling") {
  const std::vector<double> s{0.1, 0.4, 0.35, 0.8};
  const std::vector<int> y{0, 0, 1, 1};
  CHECK(binary_auc(s, y) == 0.75);
  CHECK(binary_auc(std::vector<double>{0.5, 0.5, 0.5}, std::vector<int>{0, 1, 1}) == 0.5);
  CHECK_THROWS_AS(binary_auc(s, std::vector<int>{1, 1, 1, 1}), ValidationError);
}

TEST_CASE("AUC matches pair counting on every configuration of up to five samples") {
  const auto r = testing::sweep_auc_configurations(5);
  CHECK(r.configurations > 0);
  CHECK(r.max_abs_error <= 1e-12);
}

TEST_CASE("AUC is invariant to strictly increasing score transforms") {
  Rng rng(2);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> s(40), t(40);
    std::vector<int> y(40);
    for (std::size_t i = 0; i < 40; ++i) {
      s[i] = std::round(4.0 * rng.normal()) / 4.0;  // coarse grid forces ties
      t[i] = std::exp(3.0 * s[i]) + 7.0;
      y[i] = static_cast<int>(i % 3 == 0);
    }
    CHECK(binary_auc(s, y) == binary_auc(t, y));
  }
}

TEST_CASE("evaluate: macro values are the means of the per-class values") {
  Rng rng(3);
  for (auto task : {TaskKind::MultiLabel, TaskKind::MultiClass}) {
    const int n = 60, c = 4;
    Eigen::MatrixXd scores = gaussian(n, c, rng).array().abs();
    Eigen::MatrixXd labels = Eigen::MatrixXd::Zero(n, c);
    for (int i = 0; i < n; ++i) {
      if (task == TaskKind::MultiClass) {
        labels(i, i % c) = 1.0;
      } else {
        for (int k = 0; k < c; ++k) labels(i, k) = rng.bernoulli(0.4) ? 1.0 : 0.0;
      }
    }
    labels.col(0).head(2) << 0.0, 1.0;
    const auto m = evaluate(scores, labels, task);
    REQUIRE(m.per_class_auc.size() == c);
    double auc = 0.0, f1 = 0.0;
    for (int k = 0; k < c; ++k) {
      auc += m.per_class_auc[static_cast<std::size_t>(k)];
      f1 += m.per_class_f1[static_cast<std::size_t>(k)];
      CHECK((m.per_class_auc[static_cast<std::size_t>(k)] >= 0.0 && m.per_class_auc[static_cast<std::size_t>(k)] <= 1.0));
    }
    CHECK(std::abs(m.macro_auc - auc / c) <= 1e-12);
    CHECK(std::abs(m.macro_f1 - f1 / c) <= 1e-12);
    CHECK(m.n_samples == n);
  }
}

TEST_CASE("evaluate: thresholds, argmax and excluded classes") {
  Eigen::MatrixXd scores(4, 2), labels(4, 2);
  scores << 0.9, 0.1, 0.6, 0.4, 0.2, 0.8, 0.45, 0.55;
  labels << 1, 0, 1, 0, 0, 1, 1, 0;
  const auto mc = evaluate(scores, labels, TaskKind::MultiClass);
  // Argmax predictions: 0, 0, 1, 1. Class 0: tp 2, fp 0, fn 1 -> F1 0.8.
  CHECK(mc.per_class_f1[0] == doctest::Approx(0.8));
  CHECK(mc.per_class_f1[1] == doctest::Approx(2.0 / 3.0));
  Eigen::MatrixXd one_sided = labels;
  one_sided.col(1).setZero();
  const auto ml = evaluate(scores, one_sided, TaskKind::MultiLabel);
  CHECK(std::isnan(ml.per_class_auc[1]));
  CHECK(ml.excluded_classes == std::vector<int>{1});
  CHECK(ml.macro_auc == ml.per_class_auc[0]);
  CHECK(ml.per_class_f1[1] == 0.0);
  CHECK(binary_f1(std::vector<int>{0, 0}, std::vector<int>{0, 0}) == 0.0);
}

TEST_CASE("mean and sample standard deviation") {
  const auto [m, s] = mean_std(std::vector<double>{2.0, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0});
  CHECK(m == 5.0);
  CHECK(s == doctest::Approx(std::sqrt(32.0 / 7.0)));
  CHECK(mean_std(std::vector<double>{3.0}).second == 0.0);
}

TEST_CASE("linear probe separates separable data in both task kinds") {
  Rng rng(4);
  auto [x, y] = separable(200, rng);
  const auto labels = one_hot(y, 2);
  ProbeConfig cfg;
  cfg.learning_rate = 1e-2;
  for (auto task : {TaskKind::MultiClass, TaskKind::MultiLabel}) {
    const auto r = train_linear_probe(x, labels, task, cfg);
    CHECK(r.epoch_loss.size() == 10);
    CHECK(r.epoch_loss.back() < r.epoch_loss.front());
    auto [xt, yt] = separable(100, rng);
    CHECK(evaluate(r.head.scores(xt), one_hot(yt, 2), task).macro_auc >= 0.95);
  }
}

TEST_CASE("linear probe on identical features cannot rank") {
  Rng rng(5);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(40, 3);
  std::vector<int> y(40);
  for (std::size_t i = 0; i < 40; ++i) y[i] = static_cast<int>(i % 2);
  const auto r = train_linear_probe(x, one_hot(y, 2), TaskKind::MultiClass, ProbeConfig{});
  CHECK(evaluate(r.head.scores(x), one_hot(y, 2), TaskKind::MultiClass).macro_auc == 0.5);
}

TEST_CASE("linear probe is deterministic and rejects degenerate input") {
  Rng rng(6);
  auto [x, y] = separable(64, rng);
  const auto a = train_linear_probe(x, one_hot(y, 2), TaskKind::MultiClass, ProbeConfig{});
  const auto b = train_linear_probe(x, one_hot(y, 2), TaskKind::MultiClass, ProbeConfig{});
  CHECK(a.head.weight == b.head.weight);
  CHECK(a.epoch_loss == b.epoch_loss);
  Eigen::MatrixXd bad = one_hot(y, 2);
  bad(0, 0) = 0.5;
  CHECK_THROWS_AS(train_linear_probe(x, bad, TaskKind::MultiLabel, ProbeConfig{}), ValidationError);
  Eigen::MatrixXd nan_x = x;
  nan_x(3, 1) = std::nan("");
  CHECK_THROWS_AS(train_linear_probe(nan_x, one_hot(y, 2), TaskKind::MultiClass, ProbeConfig{}), ValidationError);
}

TEST_CASE("ridge regression: exact recovery, null features, affine rescaling") {
  Rng rng(7);
  const Eigen::MatrixXd x = gaussian(100, 4, rng);
  const Eigen::Vector4d w(1.5, -2.0, 0.0, 0.25);
  const Eigen::VectorXd y = (x * w).array() + 3.0;
  const auto exact = fit_ridge(x, y, 0.0);
  CHECK((exact.weight - w).cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(std::abs(exact.intercept - 3.0) <= 1e-10);

  const Eigen::VectorXd noise = gaussian(100, 1, rng);
  const auto null = feature_regression(Eigen::MatrixXd::Zero(80, 3), noise.head(80), Eigen::MatrixXd::Zero(20, 3),
                                       noise.tail(20));
  CHECK(null.mae_mean == doctest::Approx(null.baseline_mae_mean).epsilon(1e-12));

  const Eigen::VectorXd target = x * w + 0.3 * noise;
  const auto base = fit_ridge(x, target, 1e-6);
  for (int col = 0; col < 4; ++col) {
    Eigen::MatrixXd scaled = x;
    scaled.col(col) = scaled.col(col) * -37.5 + Eigen::VectorXd::Constant(100, 12.0);
    const auto moved = fit_ridge(scaled, target, 1e-6);
    CHECK((moved.predict(scaled) - base.predict(x)).cwiseAbs().maxCoeff() <= 1e-6);
  }
  CHECK_THROWS_AS(fit_ridge(x, y.head(5), 0.0), ValidationError);
  CHECK_THROWS_AS(fit_ridge(x, y, -1.0), ValidationError);
}

TEST_CASE("held-out split is disjoint, complete and seeded") {
  for (std::uint64_t seed : {0u, 1u, 2u}) {
    const auto s = holdout_split(100, 0.2, seed);
    CHECK(s.test.size() == 20);
    CHECK(s.train.size() == 80);
    std::set<std::size_t> all(s.train.begin(), s.train.end());
    for (auto i : s.test) CHECK(all.insert(i).second);
    CHECK(all.size() == 100);
  }
  CHECK(holdout_split(100, 0.2, 0).test == holdout_split(100, 0.2, 0).test);
  CHECK(holdout_split(100, 0.2, 0).test != holdout_split(100, 0.2, 1).test);
  CHECK_THROWS_AS(holdout_split(3, 0.01, 0), ValidationError);
}

TEST_CASE("low-shot subsets: size, full fraction, seed dependence") {
  const auto one = lowshot_splits(1000, 0.01, 3, 0);
  REQUIRE(one.size() == 3);
  for (const auto& s : one) {
    CHECK(s.size() == 10);
    CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == 10);
  }
  CHECK(one[0] != one[1]);
  CHECK(lowshot_splits(1000, 0.01, 3, 0) == one);
  const auto full = lowshot_splits(50, 1.0, 2, 0);
  for (const auto& s : full) CHECK(s.size() == 50);
  CHECK(lowshot_splits(200, 0.1, 1, 0)[0] != lowshot_splits(200, 0.1, 1, 1)[0]);
}

TEST_CASE("reduced-lead extraction: full set equals the standard pipeline, subsets keep positions") {
  Rng rng(8);
  auto cfg = testing::tiny_model(10);
  const auto enc = init_encoder_parameters<float>(cfg, rng);
  std::vector<EcgRecord> records;
  for (int i = 0; i < 3; ++i) records.push_back(testing::random_record8(60, rng));
  const auto full = extract_representations(enc, cfg, records, kEightLeads);
  std::vector<PatchGrid> grids;
  for (const auto& r : records) grids.push_back(patchify(r, 10));
  CHECK(full == encode_pooled(enc, cfg, grids));
  const std::array<Lead, 1> ii{Lead::II};
  const auto one = extract_representations(enc, cfg, records, ii);
  CHECK(one.rows() == 3);
  const PatchGrid g = patchify(records[0].select(ii), 10);
  REQUIRE(g.lead_positions == std::vector<int>{1});
  const auto direct = pooled_representation(encode(enc, all_tokens(g), cfg));
  CHECK(one.row(0) == direct);
  const std::array<Lead, 1> avr{Lead::aVR};
  CHECK_THROWS_AS(extract_representations(enc, cfg, records, avr), ValidationError);
}

TEST_CASE("fine-tuning: frozen encoder reproduces the probe, trained encoder fits at least as well") {
  Rng rng(9);
  auto cfg = testing::tiny_model(10);
  const auto enc = init_encoder_parameters<float>(cfg, rng);
  std::vector<PatchGrid> grids;
  std::vector<int> y;
  for (int i = 0; i < 32; ++i) {
    auto r = testing::random_record8(60, rng);
    EcgRecord::Samples s = r.samples();
    const int cls = i % 2;
    s.array() += cls ? 0.5 : -0.5;
    grids.push_back(patchify(EcgRecord(r.leads(), 250.0, s), 10));
    y.push_back(cls);
  }
  const auto labels = one_hot(y, 2);
  FinetuneConfig ft;
  ft.head.learning_rate = 1e-2;
  ft.head.epochs = 4;
  ft.head.warmup_epochs = 1;
  ft.head.batch_size = 8;

  FinetuneConfig frozen = ft;
  frozen.encoder_base_lr = 0.0;
  frozen.base_lr_scaling = false;
  const auto f = finetune(enc, cfg, grids, labels, TaskKind::MultiClass, frozen);
  const auto probe = train_linear_probe(encode_pooled(enc, cfg, grids), labels, TaskKind::MultiClass, ft.head);
  CHECK(f.encoder == enc);
  CHECK(f.head.weight == probe.head.weight);
  CHECK(f.epoch_loss == probe.epoch_loss);

  ft.encoder_base_lr = 1e-1;
  const auto tuned = finetune(enc, cfg, grids, labels, TaskKind::MultiClass, ft);
  CHECK_FALSE(tuned.encoder == enc);
  CHECK(tuned.encoder.all_finite());
  const double tuned_loss = classification_loss(tuned.head, encode_pooled(tuned.encoder, cfg, grids), labels);
  const double probe_loss = classification_loss(probe.head, encode_pooled(enc, cfg, grids), labels);
  CHECK(tuned_loss <= probe_loss);
  CHECK(ft.encoder_lr() == doctest::Approx(1e-1 * 8 / 256.0));
}
