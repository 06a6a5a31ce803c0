// SPDX-License-Identifier: Apache-2.0
#include "ecgjepa/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "ecgjepa/ecgb.hpp"
#include "ecgjepa/error.hpp"

namespace ecgjepa {

using nlohmann::json;

Dataset dataset_from_corpus(Corpus corpus) {
  Dataset d;
  for (auto& item : corpus) {
    d.names.push_back(std::move(item.name));
    d.records.push_back(std::move(item.record));
    d.labels.push_back(std::move(item.labels));
  }
  return d;
}

namespace {

Dataset load_or_synthesize(const std::string& dir, std::size_t count, const SynthRanges& ranges, std::uint64_t seed) {
  if (dir.empty()) return dataset_from_corpus(make_synthetic_corpus(count, ranges, seed));
  if (!std::filesystem::is_directory(dir)) throw IoError(dir + ": corpus directory not found");
  return dataset_from_corpus(load_corpus(dir));
}

}  // namespace

Dataset load_dataset(const DataConfig& data) {
  return load_or_synthesize(data.corpus_dir, data.synth_count, data.synth, data.synth_seed);
}

Dataset load_eval_dataset(const DataConfig& data) {
  return load_or_synthesize(data.eval_corpus_dir, data.eval_synth_count, data.synth, data.eval_synth_seed);
}

std::vector<PatchGrid> patch_dataset(const Dataset& data, std::span<const Lead> leads, int patch_len) {
  std::vector<PatchGrid> grids;
  grids.reserve(data.records.size());
  for (std::size_t i = 0; i < data.records.size(); ++i) {
    try {
      grids.push_back(patchify(data.records[i].select(leads), patch_len));
    } catch (const ValidationError& e) {
      throw ValidationError(data.names[i] + ": " + e.what());
    }
  }
  if (grids.empty()) throw ValidationError("dataset is empty");
  return grids;
}

Eigen::VectorXd label_column(const Dataset& data, const std::string& key) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(data.labels.size()));
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    const auto& l = data.labels[i];
    if (!l.contains(key) || !l.at(key).is_number()) {
      throw ValidationError(data.names[i] + ": label '" + key + "' missing or not a number");
    }
    out[static_cast<Eigen::Index>(i)] = l.at(key).get<double>();
  }
  return out;
}

std::vector<int> class_column(const Dataset& data, const std::string& key) {
  std::vector<int> out;
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    const auto& l = data.labels[i];
    if (!l.contains(key) || !l.at(key).is_number_integer() || l.at(key).get<int>() < 0) {
      throw ValidationError(data.names[i] + ": label '" + key + "' missing or not a non-negative integer");
    }
    out.push_back(l.at(key).get<int>());
  }
  return out;
}

std::string experiment_hash(const ExperimentConfig& config) { return config_hash(to_json(config)); }

PretrainRun run_pretrain(const ExperimentConfig& config, const Dataset& data, const EpochCallback& on_epoch) {
  const auto grids = patch_dataset(data, config.data.leads, config.model.patch_len);
  auto result = pretrain(config.train, config.model, grids, on_epoch);
  PretrainRun run{Checkpoint{std::move(result.state), json::object()}, std::move(result.log)};
  run.checkpoint.info = {{"config_hash", experiment_hash(config)}, {"records", data.records.size()}};
  return run;
}

std::string loss_log_csv(const std::vector<EpochLog>& log, const std::string& hash) {
  std::ostringstream out;
  out << "# config_hash=" << hash << "\nepoch,mean_loss,steps\n";
  char buf[64];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof buf, "%.17g", e.mean_loss);
    out << e.epoch << ',' << buf << ',' << e.steps << '\n';
  }
  return out.str();
}

ParameterSet<float> untrained_encoder(const ModelConfig& model, const TrainConfig& train) {
  Rng rng(train.seed);
  return init_jepa_parameters<float>(model, rng).student;
}

namespace {

json summary(const std::vector<double>& values) {
  const auto [mean, sd] = mean_std(values);
  return {{"mean", mean}, {"std", sd}, {"values", values}};
}

json metrics_json(const MetricsReport& r) {
  return {{"per_class_auc", r.per_class_auc}, {"per_class_f1", r.per_class_f1},
          {"excluded_classes", r.excluded_classes}, {"macro_auc", r.macro_auc},
          {"macro_f1", r.macro_f1}, {"n_samples", r.n_samples}};
}

json lead_names(std::span<const Lead> leads) {
  json out = json::array();
  for (Lead l : leads) out.push_back(std::string(lead_name(l)));
  return out;
}

struct Labelled {
  Eigen::MatrixXd labels;
  int classes = 0;
};

Labelled class_targets(const ExperimentConfig& config, const Dataset& data) {
  const auto classes = class_column(data, config.eval.target);
  const int count = std::max(2, *std::max_element(classes.begin(), classes.end()) + 1);
  return {one_hot(classes, count), count};
}

json probe_block(const ExperimentConfig& config, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y) {
  json reps = json::array();
  std::vector<double> aucs, f1s;
  std::size_t n_train = 0, n_test = 0;
  for (int r = 0; r < config.eval.repetitions; ++r) {
    const std::uint64_t split_seed = config.data.split_seed + static_cast<std::uint64_t>(r);
    const auto split = holdout_split(static_cast<std::size_t>(x.rows()), config.data.test_fraction, split_seed);
    ProbeConfig pc = config.probe;
    pc.seed = config.probe.seed + static_cast<std::uint64_t>(r);
    const auto probe = train_linear_probe(take_rows(x, split.train), take_rows(y, split.train), TaskKind::MultiClass, pc);
    const auto report =
        evaluate(probe.head.scores(take_rows(x, split.test)), take_rows(y, split.test), TaskKind::MultiClass);
    aucs.push_back(report.macro_auc);
    f1s.push_back(report.macro_f1);
    n_train = split.train.size();
    n_test = split.test.size();
    json rep = metrics_json(report);
    rep["split_seed"] = split_seed;
    rep["probe_seed"] = pc.seed;
    rep["final_train_loss"] = probe.epoch_loss.back();
    reps.push_back(rep);
  }
  return {{"repetitions", reps},
          {"macro_auc", summary(aucs)},
          {"macro_f1", summary(f1s)},
          {"n_train", n_train},
          {"n_test", n_test}};
}

}  // namespace

json eval_probe(const ExperimentConfig& config, const ParameterSet<float>& encoder, const ModelConfig& model,
                const Dataset& data) {
  const auto grids = patch_dataset(data, config.data.leads, model.patch_len);
  const Eigen::MatrixXd x = encode_pooled(encoder, model, grids);
  const auto targets = class_targets(config, data);
  json out = probe_block(config, x, targets.labels);
  out["protocol"] = "probe";
  out["leads"] = lead_names(config.data.leads);
  out["target"] = config.eval.target;
  return out;
}

json eval_finetune(const ExperimentConfig& config, const ParameterSet<float>& encoder, const ModelConfig& model,
                   const Dataset& data) {
  const auto grids = patch_dataset(data, config.data.leads, model.patch_len);
  const auto targets = class_targets(config, data);
  const Eigen::MatrixXd x0 = encode_pooled(encoder, model, grids);
  json reps = json::array();
  std::vector<double> ft_aucs, ft_f1s, probe_aucs;
  for (int r = 0; r < config.eval.repetitions; ++r) {
    const std::uint64_t split_seed = config.data.split_seed + static_cast<std::uint64_t>(r);
    const auto split = holdout_split(grids.size(), config.data.test_fraction, split_seed);
    FinetuneConfig ft = config.finetune;
    ft.head.seed = config.finetune.head.seed + static_cast<std::uint64_t>(r);
    std::vector<PatchGrid> train_grids, test_grids;
    for (auto i : split.train) train_grids.push_back(grids[i]);
    for (auto i : split.test) test_grids.push_back(grids[i]);
    const Eigen::MatrixXd y_train = take_rows(targets.labels, split.train);
    const Eigen::MatrixXd y_test = take_rows(targets.labels, split.test);
    const auto tuned = finetune(encoder, model, train_grids, y_train, TaskKind::MultiClass, ft);
    const auto ft_report =
        evaluate(tuned.head.scores(encode_pooled(tuned.encoder, model, test_grids)), y_test, TaskKind::MultiClass);
    const auto probe = train_linear_probe(take_rows(x0, split.train), y_train, TaskKind::MultiClass, ft.head);
    const auto probe_report = evaluate(probe.head.scores(take_rows(x0, split.test)), y_test, TaskKind::MultiClass);
    ft_aucs.push_back(ft_report.macro_auc);
    ft_f1s.push_back(ft_report.macro_f1);
    probe_aucs.push_back(probe_report.macro_auc);
    json rep = metrics_json(ft_report);
    rep["split_seed"] = split_seed;
    rep["head_seed"] = ft.head.seed;
    rep["encoder_lr"] = ft.encoder_lr();
    rep["final_train_loss"] = tuned.epoch_loss.back();
    rep["probe_macro_auc"] = probe_report.macro_auc;
    rep["probe_final_train_loss"] = probe.epoch_loss.back();
    reps.push_back(rep);
  }
  return {{"protocol", "finetune"},
          {"leads", lead_names(config.data.leads)},
          {"target", config.eval.target},
          {"repetitions", reps},
          {"macro_auc", summary(ft_aucs)},
          {"macro_f1", summary(ft_f1s)},
          {"probe_macro_auc", summary(probe_aucs)}};
}

json eval_lowshot(const ExperimentConfig& config, const ParameterSet<float>& encoder, const ModelConfig& model,
                  const Dataset& data) {
  const auto grids = patch_dataset(data, config.data.leads, model.patch_len);
  const Eigen::MatrixXd x = encode_pooled(encoder, model, grids);
  const auto targets = class_targets(config, data);
  const auto split = holdout_split(grids.size(), config.data.test_fraction, config.data.split_seed);
  const auto subsets =
      lowshot_splits(split.train.size(), config.eval.lowshot_fraction, config.eval.repetitions, config.data.split_seed);
  json reps = json::array();
  std::vector<double> aucs, f1s;
  for (std::size_t r = 0; r < subsets.size(); ++r) {
    std::vector<std::size_t> rows;
    for (auto k : subsets[r]) rows.push_back(split.train[k]);
    ProbeConfig pc = config.probe;
    pc.seed = config.probe.seed + r;
    const auto probe = train_linear_probe(take_rows(x, rows), take_rows(targets.labels, rows), TaskKind::MultiClass, pc);
    const auto report = evaluate(probe.head.scores(take_rows(x, split.test)), take_rows(targets.labels, split.test),
                                 TaskKind::MultiClass);
    aucs.push_back(report.macro_auc);
    f1s.push_back(report.macro_f1);
    json rep = metrics_json(report);
    rep["subset_size"] = rows.size();
    rep["probe_seed"] = pc.seed;
    reps.push_back(rep);
  }
  return {{"protocol", "lowshot"},
          {"leads", lead_names(config.data.leads)},
          {"target", config.eval.target},
          {"fraction", config.eval.lowshot_fraction},
          {"repetitions", reps},
          {"macro_auc", summary(aucs)},
          {"macro_f1", summary(f1s)},
          {"n_test", split.test.size()}};
}

json eval_features(const ExperimentConfig& config, const ParameterSet<float>& encoder, const ModelConfig& model,
                   const Dataset& data) {
  const auto grids = patch_dataset(data, config.data.leads, model.patch_len);
  const Eigen::MatrixXd x = encode_pooled(encoder, model, grids);
  json features = json::array();
  for (const char* key : {"heart_rate_bpm", "qrs_duration_ms"}) {
    const Eigen::VectorXd y = label_column(data, key);
    // Absolute errors pooled over the repeated held-out splits.
    std::vector<double> errors, baseline, ratios;
    int n_train = 0, n_test = 0;
    for (int rep = 0; rep < config.eval.repetitions; ++rep) {
      const auto split = holdout_split(grids.size(), config.data.test_fraction,
                                       config.data.split_seed + static_cast<std::uint64_t>(rep));
      const auto r = feature_regression(take_rows(x, split.train), take_rows(y, split.train),
                                        take_rows(x, split.test), take_rows(y, split.test));
      errors.insert(errors.end(), r.abs_errors.begin(), r.abs_errors.end());
      baseline.insert(baseline.end(), r.baseline_abs_errors.begin(), r.baseline_abs_errors.end());
      ratios.push_back(r.mae_mean / r.baseline_mae_mean);
      n_train = r.n_train;
      n_test = r.n_test;
    }
    const auto [mae_mean, mae_std] = mean_std(errors);
    const auto [base_mean, base_std] = mean_std(baseline);
    features.push_back({{"target", key},
                        {"mae_mean", mae_mean},
                        {"mae_std", mae_std},
                        {"baseline_mae_mean", base_mean},
                        {"baseline_mae_std", base_std},
                        {"mae_ratio", mae_mean / base_mean},
                        {"mae_ratio_per_split", ratios},
                        {"repetitions", config.eval.repetitions},
                        {"n_train", n_train},
                        {"n_test", n_test}});
  }
  return {{"protocol", "features"}, {"leads", lead_names(config.data.leads)}, {"features", features}};
}

json run_eval(const ExperimentConfig& config, const Checkpoint& checkpoint, const Dataset& data) {
  const auto& model = checkpoint.state.model;
  const auto& encoder = checkpoint.state.params.student;
  json out;
  const auto& p = config.eval.protocol;
  if (p == "probe") {
    out = eval_probe(config, encoder, model, data);
  } else if (p == "finetune") {
    out = eval_finetune(config, encoder, model, data);
  } else if (p == "lowshot") {
    out = eval_lowshot(config, encoder, model, data);
  } else if (p == "features") {
    out = eval_features(config, encoder, model, data);
  } else {
    throw ValidationError("unknown protocol '" + p + "'");
  }
  out["config_hash"] = experiment_hash(config);
  out["seeds"] = {{"train", checkpoint.state.train.seed},
                  {"probe", config.probe.seed},
                  {"split", config.data.split_seed}};
  out["checkpoint_step"] = checkpoint.state.step;
  out["n_records"] = data.records.size();
  return out;
}

namespace {

Dataset with_twelve_leads(const Dataset& data) {
  Dataset out = data;
  for (auto& r : out.records) {
    if (!r.has(Lead::III)) r = derive_full_leads(reduce_to_8_leads(r));
  }
  return out;
}

struct Variant {
  std::string name;
  ExperimentConfig config;
};

std::vector<Variant> ablation_variants(const std::string& suite, const ExperimentConfig& base) {
  std::vector<Variant> out;
  if (suite == "cropa") {
    for (bool on : {true, false}) {
      Variant v{on ? "cropa on" : "cropa off", base};
      v.config.model.use_cropa = on;
      out.push_back(v);
    }
  } else if (suite == "maskratio") {
    const std::pair<double, double> random[] = {{0.3, 0.4}, {0.4, 0.5}, {0.5, 0.6}, {0.6, 0.7}, {0.7, 0.8}};
    const std::pair<double, double> blocks[] = {{0.10, 0.15}, {0.15, 0.20}, {0.175, 0.225}};
    char name[64];
    for (auto [lo, hi] : random) {
      Variant v{"", base};
      std::snprintf(name, sizeof name, "random (%g, %g)", lo, hi);
      v.name = name;
      v.config.train.mask_strategy = MaskStrategy::Random;
      v.config.train.mask_ratio_lo = lo;
      v.config.train.mask_ratio_hi = hi;
      v.config.train.mask_freq = 1;
      out.push_back(v);
    }
    for (auto [lo, hi] : blocks) {
      Variant v{"", base};
      std::snprintf(name, sizeof name, "multiblock (%g, %g) x4", lo, hi);
      v.name = name;
      v.config.train.mask_strategy = MaskStrategy::MultiBlock;
      v.config.train.mask_ratio_lo = lo;
      v.config.train.mask_ratio_hi = hi;
      v.config.train.mask_freq = 4;
      out.push_back(v);
    }
  } else if (suite == "leads") {
    Variant eight{"8-lead", base};
    eight.config.data.leads.assign(kEightLeads.begin(), kEightLeads.end());
    Variant twelve{"12-lead", base};
    twelve.config.data.leads.assign(kTwelveLeads.begin(), kTwelveLeads.end());
    out = {eight, twelve};
  } else {
    throw ValidationError("unknown ablation suite '" + suite + "' (expected cropa|maskratio|leads)");
  }
  return out;
}

}  // namespace

json run_ablation(const std::string& suite, const ExperimentConfig& config, const Dataset& pretrain_data,
                  const Dataset& eval_data, int seeds, const std::function<void(const std::string&)>& progress) {
  if (seeds < 1) throw ValidationError("ablation needs at least one seed");
  const auto variants = ablation_variants(suite, config);
  const bool twelve = suite == "leads";
  const Dataset pre = twelve ? with_twelve_leads(pretrain_data) : pretrain_data;
  const Dataset ev = twelve ? with_twelve_leads(eval_data) : eval_data;

  json rows = json::array();
  json seed_list = json::array();
  for (int s = 0; s < seeds; ++s) seed_list.push_back(config.train.seed + static_cast<std::uint64_t>(s));
  for (const auto& v : variants) {
    json runs = json::array();
    std::vector<double> aucs, f1s;
    for (int s = 0; s < seeds; ++s) {
      ExperimentConfig c = v.config;
      c.train.seed = config.train.seed + static_cast<std::uint64_t>(s);
      if (progress) progress(v.name + ", seed " + std::to_string(c.train.seed));
      const auto run = run_pretrain(c, pre);
      const auto probe = eval_probe(c, run.checkpoint.state.params.student, c.model, ev);
      const double auc = probe["macro_auc"]["mean"].get<double>();
      const double f1 = probe["macro_f1"]["mean"].get<double>();
      aucs.push_back(auc);
      f1s.push_back(f1);
      runs.push_back({{"seed", c.train.seed},
                      {"first_epoch_loss", run.log.front().mean_loss},
                      {"final_epoch_loss", run.log.back().mean_loss},
                      {"macro_auc", auc},
                      {"macro_f1", f1},
                      {"config_hash", experiment_hash(c)}});
    }
    rows.push_back({{"name", v.name}, {"runs", runs}, {"macro_auc", summary(aucs)}, {"macro_f1", summary(f1s)}});
  }
  return {{"suite", suite}, {"seeds", seed_list}, {"variants", rows}, {"config_hash", experiment_hash(config)}};
}

namespace {

std::string pm(const json& s, int digits = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f +/- %.*f", digits, s.at("mean").get<double>(), digits,
                s.at("std").get<double>());
  return buf;
}

std::string num(double v, int digits = 3) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string render_report(const json& report) {
  std::ostringstream out;
  if (report.contains("suite")) {
    out << "Ablation: " << report["suite"].get<std::string>() << " (seeds " << report["seeds"].dump() << ")\n";
    out << "variant                          | macro AUC         | macro F1\n";
    for (const auto& v : report["variants"]) {
      std::string name = v["name"].get<std::string>();
      name.resize(32, ' ');
      out << name << " | " << pm(v["macro_auc"]) << " | " << pm(v["macro_f1"]) << "\n";
    }
  } else if (report.value("protocol", "") == "features") {
    out << "Feature regression (leads " << report["leads"].dump() << ")\n";
    auto cell = [](std::string text, std::size_t width) {
      text.resize(std::max(text.size(), width), ' ');
      return text;
    };
    out << cell("feature", 16) << " | " << cell("MAE (mean +/- std)", 18) << " | " << cell("constant-mean MAE", 18)
        << " | ratio\n";
    for (const auto& f : report["features"]) {
      out << cell(f["target"].get<std::string>(), 16) << " | "
          << cell(num(f["mae_mean"].get<double>(), 2) + " +/- " + num(f["mae_std"].get<double>(), 2), 18) << " | "
          << cell(num(f["baseline_mae_mean"].get<double>(), 2) + " +/- " + num(f["baseline_mae_std"].get<double>(), 2),
                  18)
          << " | " << num(f["mae_ratio"].get<double>(), 3) << "\n";
    }
  } else {
    out << "Protocol: " << report.value("protocol", "?") << ", leads " << report["leads"].dump() << ", target "
        << report.value("target", "?") << "\n";
    if (report.contains("fraction")) out << "training fraction: " << report["fraction"].get<double>() << "\n";
    out << "macro AUC: " << pm(report["macro_auc"]) << "\n";
    out << "macro F1:  " << pm(report["macro_f1"]) << "\n";
    if (report.contains("probe_macro_auc")) out << "probe AUC: " << pm(report["probe_macro_auc"]) << "\n";
  }
  if (report.contains("config_hash")) out << "config hash: " << report["config_hash"].get<std::string>() << "\n";
  return out.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw IoError(path.parent_path().string() + ": cannot create directory: " + ec.message());
  }
  write_file_atomic(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace ecgjepa
