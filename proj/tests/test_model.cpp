// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "ecgjepa/error.hpp"
#include "ecgjepa/model.hpp"
#include "ecgjepa/patching.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace ecgjepa;
using testing::tiny_model;

namespace {

PatchGrid random_grid(int leads, int n, int patch_len, Rng& rng) {
  const std::span<const Lead> subset(kTwelveLeads.data(), static_cast<std::size_t>(leads));
  return patchify(testing::random_record(subset, n * patch_len, 250.0, rng), patch_len);
}

RepresentationGrid<double> grid_of(int leads, int times, Mat<double> values) {
  return {leads, times, std::move(values)};
}

}  // namespace

TEST_CASE("1-D sinusoidal table: direct values") {
  const auto t = sinusoidal_table_1d(3, 2);
  CHECK(t(0, 0) == 0.0);
  CHECK(t(0, 1) == 1.0);
  CHECK(t(1, 0) == doctest::Approx(0.84147).epsilon(1e-5));
  CHECK(t(1, 1) == doctest::Approx(0.54030).epsilon(1e-5));
  const auto wide = sinusoidal_table_1d(5, 8);
  for (int k = 0; k < 4; ++k) {
    CHECK(wide(0, 2 * k) == 0.0);
    CHECK(wide(0, 2 * k + 1) == 1.0);
    const double freq = std::pow(10000.0, -2.0 * k / 8.0);
    CHECK(std::abs(wide(3, 2 * k) - std::sin(3.0 * freq)) <= 1e-15);
    CHECK(std::abs(wide(3, 2 * k + 1) - std::cos(3.0 * freq)) <= 1e-15);
  }
  CHECK_THROWS_AS(sinusoidal_table_1d(3, 3), ValidationError);
}

TEST_CASE("1-D sinusoidal table rows are pairwise distinct up to 10000 positions") {
  for (int dim : {2, 8, 64}) {
    const auto t = sinusoidal_table_1d(10000, dim);
    std::vector<std::vector<double>> rows;
    rows.reserve(10000);
    for (Eigen::Index r = 0; r < t.rows(); ++r) rows.emplace_back(t.row(r).data(), t.row(r).data() + dim);
    std::sort(rows.begin(), rows.end());
    CHECK(std::adjacent_find(rows.begin(), rows.end()) == rows.end());
  }
}

TEST_CASE("2-D sinusoidal table: time half first, lead half last") {
  const int leads = 3, times = 5, dim = 8;
  const auto t = sinusoidal_table_2d(leads, times, dim);
  const auto one = sinusoidal_table_1d(std::max(leads, times), dim / 2);
  REQUIRE(t.rows() == leads * times);
  for (int l = 0; l < leads; ++l) {
    for (int p = 0; p < times; ++p) {
      CHECK(t.row(l * times + p).head(dim / 2) == one.row(p));
      CHECK(t.row(l * times + p).tail(dim / 2) == one.row(l));
    }
  }
  CHECK(t.row(0).head(4) == t.row(2 * times).head(4));
  CHECK(t.row(times).tail(4) == t.row(times + 3).tail(4));
  CHECK_THROWS_AS(sinusoidal_table_2d(2, 2, 6), ValidationError);
  CHECK_THROWS_AS(sinusoidal_table_2d(2, 2, 7), ValidationError);
}

TEST_CASE("cross-pattern mask matches brute force for every small grid") {
  for (int leads = 1; leads <= 6; ++leads) {
    for (int n = 1; n <= 6; ++n) {
      if (leads * n > 36) continue;
      std::vector<int> li, ti;
      for (int l = 0; l < leads; ++l) {
        for (int i = 0; i < n; ++i) li.push_back(l), ti.push_back(i);
      }
      CHECK(cropa_mask(li, ti) == testing::brute_force_cropa(li, ti));
    }
  }
}

TEST_CASE("cross-pattern mask: seven keys per token on three leads by five times") {
  std::vector<int> li, ti;
  for (int l = 0; l < 3; ++l) {
    for (int i = 0; i < 5; ++i) li.push_back(l), ti.push_back(i);
  }
  const auto m = cropa_mask(li, ti);
  for (Eigen::Index r = 0; r < m.rows(); ++r) CHECK(m.row(r).count() == 7);
  CHECK(m.diagonal().all());
  const std::vector<int> one_lead(6, 0), times{0, 1, 2, 3, 4, 5};
  CHECK(cropa_mask(one_lead, times).all());
  CHECK_THROWS_AS(cropa_mask(one_lead, std::vector<int>{0, 1}), ValidationError);
}

TEST_CASE("cross-pattern mask on scattered visible tokens uses positions, not ranks") {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> li, ti;
    for (int k = 0; k < 20; ++k) li.push_back(static_cast<int>(rng.uniform_index(12))), ti.push_back(static_cast<int>(rng.uniform_index(50)));
    CHECK(cropa_mask(li, ti) == testing::brute_force_cropa(li, ti));
  }
}

TEST_CASE("parameter initialisation: teacher mirrors student, finite, layouts") {
  Rng rng(2);
  const auto cfg = tiny_model();
  const auto p = init_jepa_parameters<double>(cfg, rng);
  CHECK(p.teacher == p.student);
  CHECK(p.student.all_finite());
  CHECK(p.predictor.all_finite());
  CHECK(p.predictor.contains("mask_token"));
  CHECK(p.student["patch_embed.weight"].rows() == cfg.patch_len);
  CHECK(p.student["patch_embed.weight"].cols() == cfg.encoder_dim);
  ModelConfig bad = cfg;
  bad.encoder_heads = 3;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
  bad = cfg;
  bad.drop_path_rate = 1.0;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("encode: output shape and evaluation-mode determinism") {
  Rng rng(3);
  const auto cfg = tiny_model();
  const auto enc = init_encoder_parameters<double>(cfg, rng);
  const auto g = random_grid(3, 5, cfg.patch_len, rng);
  const auto a = encode(enc, all_tokens(g), cfg);
  const auto b = encode(enc, all_tokens(g), cfg);
  CHECK(a.lead_count == 3);
  CHECK(a.time_count == 5);
  CHECK(a.values.rows() == 15);
  CHECK(a.values.cols() == cfg.encoder_dim);
  CHECK(a.values == b.values);
  const auto v = encode(enc, split_visible(g, MaskPlan(5, {0, 4})), cfg);
  CHECK(v.time_count == 3);
  TokenSet wrong = all_tokens(g);
  wrong.patches = wrong.patches.leftCols(4).eval();
  CHECK_THROWS_AS(encode(enc, wrong, cfg), ValidationError);
}

TEST_CASE("encode: drop path only acts in training mode") {
  Rng rng(4);
  auto cfg = tiny_model();
  cfg.encoder_layers = 4;
  cfg.drop_path_rate = 0.5;
  const auto enc = init_encoder_parameters<double>(cfg, rng);
  const auto g = random_grid(2, 4, cfg.patch_len, rng);
  const auto eval_a = encode(enc, all_tokens(g), cfg);
  const auto eval_b = encode(enc, all_tokens(g), cfg);
  CHECK(eval_a.values == eval_b.values);
  bool any_differs = false;
  for (std::uint64_t s = 0; s < 10; ++s) {
    Rng drop(s);
    any_differs |= encode(enc, all_tokens(g), cfg, &drop).values != eval_a.values;
  }
  CHECK(any_differs);
}

TEST_CASE("encode: a single lead gives the same output with or without the cross mask") {
  Rng rng(5);
  auto cfg = tiny_model();
  const auto enc = init_encoder_parameters<double>(cfg, rng);
  const auto g = random_grid(1, 6, cfg.patch_len, rng);
  const auto with = encode(enc, all_tokens(g), cfg);
  cfg.use_cropa = false;
  const auto without = encode(enc, all_tokens(g), cfg);
  CHECK((with.values - without.values).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("encode: the cross mask changes multi-lead outputs") {
  Rng rng(6);
  auto cfg = tiny_model();
  const auto enc = init_encoder_parameters<double>(cfg, rng);
  const auto g = random_grid(3, 4, cfg.patch_len, rng);
  const auto with = encode(enc, all_tokens(g), cfg);
  cfg.use_cropa = false;
  CHECK((with.values - encode(enc, all_tokens(g), cfg).values).cwiseAbs().maxCoeff() > 1e-9);
}

TEST_CASE("encode is equivariant to a joint permutation of tokens and positions") {
  Rng rng(7);
  for (bool cropa : {true, false}) {
    auto cfg = tiny_model();
    cfg.encoder_layers = 2;
    cfg.use_cropa = cropa;
    auto enc = init_encoder_parameters<double>(cfg, rng);
    for (auto& [name, t] : enc) t.value.array() += 0.2 * Mat<double>::NullaryExpr(t.value.rows(), t.value.cols(), [&] { return rng.normal(); }).array();
    const auto g = random_grid(3, 4, cfg.patch_len, rng);
    const auto tokens = all_tokens(g);
    const auto perm = permutation(tokens.size(), rng);
    TokenSet shuffled = tokens;
    for (std::size_t k = 0; k < perm.size(); ++k) {
      shuffled.patches.row(static_cast<Eigen::Index>(k)) = tokens.patches.row(static_cast<Eigen::Index>(perm[k]));
      shuffled.lead_index[k] = tokens.lead_index[perm[k]];
      shuffled.time_index[k] = tokens.time_index[perm[k]];
    }
    const auto base = encode(enc, tokens, cfg);
    const auto moved = encode(enc, shuffled, cfg);
    for (std::size_t k = 0; k < perm.size(); ++k) {
      CHECK((moved.values.row(static_cast<Eigen::Index>(k)) - base.values.row(static_cast<Eigen::Index>(perm[k])))
                .cwiseAbs()
                .maxCoeff() <= 1e-12);
    }
  }
}

TEST_CASE("predict: shape and per-lead symmetry") {
  Rng rng(8);
  const auto cfg = tiny_model();
  auto pred = init_predictor_parameters<double>(cfg, rng);
  const MaskPlan plan(6, {1, 4});
  Mat<double> one_lead = Mat<double>::NullaryExpr(4, cfg.encoder_dim, [&] { return rng.normal(); });
  Mat<double> two(8, cfg.encoder_dim);
  two << one_lead, one_lead;
  const auto out = predict(pred, grid_of(2, 4, two), plan, cfg);
  CHECK(out.lead_count == 2);
  CHECK(out.time_count == 6);
  CHECK(out.values.rows() == 12);
  CHECK(out.values.cols() == cfg.encoder_dim);
  CHECK(out.values.topRows(6) == out.values.bottomRows(6));
  CHECK_THROWS_AS(predict(pred, grid_of(2, 3, two.topRows(6)), plan, cfg), ValidationError);
}

TEST_CASE("predict: the mask token reaches every slot through attention") {
  Rng rng(9);
  const auto cfg = tiny_model();
  auto pred = init_predictor_parameters<double>(cfg, rng);
  const MaskPlan plan(5, {2});
  const Mat<double> reps = Mat<double>::NullaryExpr(4, cfg.encoder_dim, [&] { return rng.normal(); });
  const auto base = predict(pred, grid_of(1, 4, reps), plan, cfg);
  // A finite perturbation of the token moves every output row (full attention
  // inside the lead) and the response shrinks linearly with the step.
  Mat<double> direction = Mat<double>::NullaryExpr(1, cfg.predictor_dim, [&] { return rng.normal(); });
  auto moved = [&](double eps) {
    auto p = pred;
    p["mask_token"] += eps * direction;
    return (predict(p, grid_of(1, 4, reps), plan, cfg).values - base.values).eval();
  };
  const auto big = moved(1e-3), small = moved(1e-4);
  for (Eigen::Index r = 0; r < 5; ++r) CHECK(big.row(r).norm() > 0.0);
  CHECK(big.row(2).norm() > 0.0);
  CHECK(std::abs(big.norm() / small.norm() - 10.0) <= 0.05);
}

TEST_CASE("smooth-L1 loss: worked values") {
  CHECK(smooth_l1(0.5) == 0.125);
  CHECK(smooth_l1(-0.5) == 0.125);
  CHECK(smooth_l1(2.0) == 1.5);
  CHECK(smooth_l1(1.0) == 0.5);
  const MaskPlan plan(2, {0});
  Mat<double> target = Mat<double>::Zero(2, 1), predicted = Mat<double>::Zero(2, 1);
  CHECK(jepa_loss(grid_of(1, 2, predicted), grid_of(1, 2, target), plan) == 0.0);
  predicted(0, 0) = 0.5;
  CHECK(jepa_loss(grid_of(1, 2, predicted), grid_of(1, 2, target), plan) == 0.125);
  predicted(0, 0) = 2.0;
  CHECK(jepa_loss(grid_of(1, 2, predicted), grid_of(1, 2, target), plan) == 1.5);
  CHECK_THROWS_AS(jepa_loss(grid_of(1, 2, predicted), grid_of(2, 1, target), plan), ValidationError);
}

TEST_CASE("loss ignores visible slots entirely") {
  Rng rng(10);
  for (int trial = 0; trial < 100; ++trial) {
    const int leads = 1 + static_cast<int>(rng.uniform_index(4)), n = 2 + static_cast<int>(rng.uniform_index(8));
    const auto plan = sample_random_mask(n, 0.2, 0.8, rng);
    auto rand_mat = [&] { return Mat<double>::NullaryExpr(leads * n, 6, [&] { return 2.0 * rng.normal(); }).eval(); };
    const Mat<double> target = rand_mat();
    Mat<double> predicted = rand_mat();
    Mat<double> grad;
    const double before = jepa_loss(grid_of(leads, n, predicted), grid_of(leads, n, target), plan, &grad);
    for (int l = 0; l < leads; ++l) {
      for (int v : plan.visible()) {
        predicted.row(l * n + v).setConstant(1e6 * rng.normal());
        CHECK(grad.row(l * n + v).isZero(0.0));
      }
    }
    CHECK(jepa_loss(grid_of(leads, n, predicted), grid_of(leads, n, target), plan) == before);
  }
}

TEST_CASE("targets are per-token standardized without affine terms") {
  Rng rng(11);
  const Mat<double> raw = Mat<double>::NullaryExpr(6, 16, [&] { return 3.0 + 5.0 * rng.normal(); });
  const auto t = normalize_targets(grid_of(2, 3, raw));
  for (Eigen::Index r = 0; r < t.values.rows(); ++r) {
    CHECK(std::abs(t.values.row(r).mean()) <= 1e-12);
    CHECK(std::abs(t.values.row(r).array().square().mean() - 1.0) <= 1e-6);
  }
}

TEST_CASE("momentum schedule: endpoints, midpoint, range") {
  const EmaSchedule s{0.996, 1.0, 1000};
  CHECK(ema_beta(0, s) == 0.996);
  CHECK(ema_beta(1000, s) == 1.0);
  CHECK(std::abs(ema_beta(500, s) - 0.998) <= 1e-15);
  double prev = 0.0;
  for (std::int64_t i = 0; i <= 1000; ++i) {
    const double b = ema_beta(i, s);
    CHECK(b >= prev);
    prev = b;
  }
  CHECK_THROWS_AS(ema_beta(-1, s), ValidationError);
  CHECK_THROWS_AS(ema_beta(1001, s), ValidationError);
  CHECK_THROWS_AS(EmaSchedule({0.9, 0.8, 10}).validate(), ValidationError);
}

TEST_CASE("momentum update: boundary betas and the worked value") {
  Rng rng(12);
  const auto cfg = tiny_model();
  auto p = init_jepa_parameters<double>(cfg, rng);
  const auto student = init_encoder_parameters<double>(cfg, rng);
  auto teacher = p.teacher;
  ema_update(teacher, student, 1.0);
  CHECK(teacher == p.teacher);
  ema_update(teacher, student, 0.0);
  CHECK(teacher == student);
  ParameterSet<double> zero, one;
  zero.add_vector("w", 3);
  one.add_vector("w", 3).setOnes();
  ema_update(zero, one, 0.996);
  CHECK(std::abs(zero["w"](0, 1) - 0.004) <= 1e-15);
  ParameterSet<double> other;
  other.add_vector("x", 3);
  CHECK_THROWS_AS(ema_update(zero, other, 0.5), ValidationError);
  CHECK_THROWS_AS(ema_update(zero, one, 1.5), ValidationError);
}

TEST_CASE("analytic gradients match central differences on the tiny model") {
  testing::GradcheckProblem problem(0);
  const auto r = testing::gradcheck(problem);
  INFO("worst entry: " << r.worst);
  CHECK(r.checked == r.total);
  CHECK(r.total == problem.params.student.scalar_count() + problem.params.predictor.scalar_count());
  CHECK(r.max_relative_error < 1e-4);
}

TEST_CASE("gradients stop at the teacher") {
  testing::GradcheckProblem problem(1);
  const auto teacher_before = problem.params.teacher;
  auto sg = problem.params.student.zeros_like();
  auto pg = problem.params.predictor.zeros_like();
  jepa_objective<double>(problem.params, problem.grid, problem.plan, problem.config, nullptr, &sg, &pg);
  CHECK(problem.params.teacher == teacher_before);
  // Recompose the objective with the targets held as constants; the gradients
  // must agree exactly, so nothing flows back into the teacher.
  const auto& p = problem.params;
  const auto target = normalize_targets(encode(p.teacher, all_tokens(problem.grid), problem.config));
  EncoderCache<double> ec;
  const auto visible = encode(p.student, split_visible(problem.grid, problem.plan), problem.config, nullptr, &ec);
  PredictorCache<double> pc;
  const auto predicted = predict(p.predictor, visible, problem.plan, problem.config, &pc);
  Mat<double> d_pred;
  const double loss = jepa_loss(predicted, target, problem.plan, &d_pred);
  CHECK(loss == problem.loss());
  auto sg2 = sg.zeros_like();
  auto pg2 = pg.zeros_like();
  const Mat<double> d_visible = predict_backward(p.predictor, d_pred, pc, problem.plan, problem.config, pg2);
  encode_backward(p.student, d_visible, ec, problem.config, sg2);
  for (const auto& [name, t] : sg) CHECK((t.value - sg2[name]).cwiseAbs().maxCoeff() <= 1e-15);
  for (const auto& [name, t] : pg) CHECK((t.value - pg2[name]).cwiseAbs().maxCoeff() <= 1e-15);
}

TEST_CASE("objective is deterministic and drop path uses only the supplied generator") {
  testing::GradcheckProblem problem(2);
  CHECK(problem.loss() == problem.loss());
  auto cfg = problem.config;
  cfg.drop_path_rate = 0.3;
  Rng a(5), b(5);
  const double la = jepa_objective<double>(problem.params, problem.grid, problem.plan, cfg, &a, nullptr, nullptr);
  const double lb = jepa_objective<double>(problem.params, problem.grid, problem.plan, cfg, &b, nullptr, nullptr);
  CHECK(la == lb);
  CHECK(a == b);
}
