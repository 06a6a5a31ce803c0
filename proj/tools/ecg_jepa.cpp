// SPDX-License-Identifier: Apache-2.0
// Command-line front end: synth, convert, pretrain, eval, ablate.
// Exit codes: 0 success, 1 invalid input or configuration, 2 I/O failure.

#include <chrono>
#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"

#include "ecgjepa/checkpoint.hpp"
#include "ecgjepa/config.hpp"
#include "ecgjepa/corpus.hpp"
#include "ecgjepa/error.hpp"
#include "ecgjepa/experiment.hpp"

namespace fs = std::filesystem;
using namespace ecgjepa;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitIo = 2;

struct Globals {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

/// Wall-clock notes go to run.log so the report files stay reproducible.
class RunLog {
 public:
  explicit RunLog(fs::path path) : path_(std::move(path)), start_(std::chrono::steady_clock::now()) {}

  void note(const std::string& line) {
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    char stamp[32];
    std::snprintf(stamp, sizeof stamp, "[%8.1fs] ", s);
    text_ += stamp + line + "\n";
    std::cerr << stamp << line << "\n";
  }

  ~RunLog() {
    try {
      write_text_file(path_, text_);
    } catch (...) {
    }
  }

 private:
  fs::path path_;
  std::chrono::steady_clock::time_point start_;
  std::string text_;
};

ExperimentConfig resolve_config(const Globals& g) {
  ExperimentConfig c = g.config.empty() ? ExperimentConfig{} : load_experiment_config(g.config);
  if (!g.out.empty()) c.output_dir = g.out;
  return c;
}

void write_json(const fs::path& path, const json& j) { write_text_file(path, j.dump(2) + "\n"); }

void set_range(std::pair<double, double>& target, const std::vector<double>& values) {
  if (!values.empty()) target = {values.at(0), values.at(1)};
}

struct SynthArgs {
  std::size_t count = 256;
  std::vector<double> hr, qrs, jitter, noise, wander;
  std::optional<double> duration, rate;
  std::optional<int> leads;
};

int cmd_synth(const Globals& g, const SynthArgs& a, bool count_given) {
  ExperimentConfig c = g.config.empty() ? ExperimentConfig{} : load_experiment_config(g.config);
  SynthRanges ranges = c.data.synth;
  set_range(ranges.heart_rate_bpm, a.hr);
  set_range(ranges.qrs_duration_ms, a.qrs);
  set_range(ranges.rr_jitter_frac, a.jitter);
  set_range(ranges.noise_std_mv, a.noise);
  set_range(ranges.baseline_wander_amp_mv, a.wander);
  if (a.duration) ranges.duration_s = *a.duration;
  if (a.rate) ranges.sample_rate_hz = *a.rate;
  if (a.leads) ranges.lead_count = *a.leads;
  const std::size_t count = count_given || g.config.empty() ? a.count : c.data.synth_count;
  const std::uint64_t seed = g.seed.value_or(c.data.synth_seed);
  const fs::path out = g.out.empty() ? fs::path("corpus") : fs::path(g.out);
  write_corpus(out, make_synthetic_corpus(count, ranges, seed));
  std::cout << "wrote " << count << " records to " << out.string() << "\n";
  return kExitOk;
}

int cmd_convert(const Globals& g, const std::string& manifest, bool keep12) {
  const fs::path out = g.out.empty() ? fs::path("converted") : fs::path(g.out);
  const auto corpus = convert_corpus(manifest, keep12);
  write_corpus(out, corpus);
  std::cout << "converted " << corpus.size() << " records to " << out.string() << "\n";
  return kExitOk;
}

int cmd_pretrain(const Globals& g) {
  ExperimentConfig c = resolve_config(g);
  if (g.seed) c.train.seed = *g.seed;
  const fs::path out = c.output_dir;
  fs::create_directories(out);
  RunLog log(out / "run.log");
  const std::string hash = experiment_hash(c);
  write_json(out / "config.json", to_json(c));
  const Dataset data = load_dataset(c.data);
  log.note("pretraining on " + std::to_string(data.records.size()) + " records, config " + hash);
  const auto run = run_pretrain(c, data, [&](const EpochLog& e, const TrainingState&) {
    char line[96];
    std::snprintf(line, sizeof line, "epoch %d mean loss %.6f", e.epoch, e.mean_loss);
    log.note(line);
  });
  save_checkpoint(out / "checkpoint.ejpa", run.checkpoint);
  write_text_file(out / "loss_log.csv", loss_log_csv(run.log, hash));
  log.note("wrote " + (out / "checkpoint.ejpa").string());
  return kExitOk;
}

void check_model_compatible(const ModelConfig& configured, const ModelConfig& stored) {
  const auto shape = [](const ModelConfig& m) {
    std::ostringstream s;
    s << "encoder " << m.encoder_layers << "x" << m.encoder_dim << " (" << m.encoder_heads << " heads), patch_len "
      << m.patch_len;
    return s.str();
  };
  if (configured.encoder_layers != stored.encoder_layers || configured.encoder_dim != stored.encoder_dim ||
      configured.encoder_heads != stored.encoder_heads || configured.patch_len != stored.patch_len) {
    throw ValidationError("checkpoint is incompatible with the configured model: checkpoint has " + shape(stored) +
                          ", config asks for " + shape(configured));
  }
}

struct EvalArgs {
  std::string checkpoint;
  std::string protocol;
  std::vector<std::string> leads;
  std::optional<double> fraction;
  std::optional<int> seeds;
  std::string target;
  std::string data;
};

int cmd_eval(const Globals& g, const EvalArgs& a) {
  ExperimentConfig c = resolve_config(g);
  if (!a.protocol.empty()) c.eval.protocol = a.protocol;
  if (!a.target.empty()) c.eval.target = a.target;
  if (a.fraction) c.eval.lowshot_fraction = *a.fraction;
  if (a.seeds) c.eval.repetitions = *a.seeds;
  if (!a.data.empty()) c.data.eval_corpus_dir = a.data;
  if (!a.leads.empty()) {
    c.data.leads.clear();
    for (const auto& name : a.leads) c.data.leads.push_back(lead_from_name(name));
  }
  if (g.seed) {
    c.data.split_seed = *g.seed;
    c.probe.seed = *g.seed;
    c.finetune.head.seed = *g.seed;
  }
  c = experiment_config_from_json(to_json(c));
  const fs::path out = c.output_dir;
  const fs::path ckpt = a.checkpoint.empty() ? out / "checkpoint.ejpa" : fs::path(a.checkpoint);
  const Checkpoint checkpoint = load_checkpoint(ckpt);
  check_model_compatible(c.model, checkpoint.state.model);
  // Reduced-lead runs get their own report names so they do not overwrite the
  // full-lead ones.
  std::string stem = c.eval.protocol;
  if (!a.leads.empty()) {
    stem += "_";
    for (std::size_t i = 0; i < c.data.leads.size(); ++i) stem += (i ? "-" : "") + std::string(lead_name(c.data.leads[i]));
  }
  RunLog log(out / ("eval_" + stem + ".log"));
  const Dataset data = load_eval_dataset(c.data);
  log.note("protocol " + c.eval.protocol + " on " + std::to_string(data.records.size()) + " records");
  const json report = run_eval(c, checkpoint, data);
  write_json(out / ("metrics_" + stem + ".json"), report);
  write_text_file(out / ("metrics_" + stem + ".txt"), render_report(report));
  write_json(out / ("eval_config_" + stem + ".json"), to_json(c));
  std::cout << render_report(report);
  return kExitOk;
}

int cmd_ablate(const Globals& g, const std::string& suite, int seeds) {
  ExperimentConfig c = resolve_config(g);
  if (g.seed) c.train.seed = *g.seed;
  const fs::path out = c.output_dir;
  fs::create_directories(out);
  RunLog log(out / ("ablate_" + suite + ".log"));
  const Dataset pre = load_dataset(c.data);
  const Dataset ev = load_eval_dataset(c.data);
  const json report = run_ablation(suite, c, pre, ev, seeds, [&](const std::string& s) { log.note(s); });
  write_json(out / ("ablation_" + suite + ".json"), report);
  write_text_file(out / ("ablation_" + suite + ".txt"), render_report(report));
  write_json(out / ("ablation_config_" + suite + ".json"), to_json(c));
  std::cout << render_report(report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ECG joint-embedding predictive pretraining and evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Experiment configuration (JSON)");
  app.add_option("--seed", g.seed, "Seed override for the command");
  app.add_option("--out", g.out, "Output directory");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic ECGB corpus with ground-truth labels");
  auto* count_opt = synth_cmd->add_option("--count", synth.count, "Number of records")->check(CLI::PositiveNumber);
  synth_cmd->add_option("--hr", synth.hr, "Heart-rate range in bpm (min max)")->expected(2);
  synth_cmd->add_option("--qrs", synth.qrs, "QRS duration range in ms (min max)")->expected(2);
  synth_cmd->add_option("--jitter", synth.jitter, "RR jitter fraction range (min max)")->expected(2);
  synth_cmd->add_option("--noise", synth.noise, "Noise std range in mV (min max)")->expected(2);
  synth_cmd->add_option("--wander", synth.wander, "Baseline wander amplitude range in mV (min max)")->expected(2);
  synth_cmd->add_option("--duration", synth.duration, "Record duration in seconds");
  synth_cmd->add_option("--rate", synth.rate, "Sampling rate in Hz");
  synth_cmd->add_option("--leads", synth.leads, "8 or 12");

  std::string manifest;
  bool keep12 = false;
  auto* convert_cmd = app.add_subcommand("convert", "Convert CSV records listed in a manifest to ECGB");
  convert_cmd->add_option("--manifest", manifest, "Manifest JSON")->required();
  convert_cmd->add_flag("--keep12", keep12, "Keep all 12 leads (deriving the limb leads when absent)");

  auto* pretrain_cmd = app.add_subcommand("pretrain", "Pretrain student, teacher and predictor");

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Run a downstream protocol on a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint, "Checkpoint (default <out>/checkpoint.ejpa)");
  eval_cmd->add_option("--protocol", eval.protocol, "probe | finetune | lowshot | features");
  eval_cmd->add_option("--leads", eval.leads, "Lead subset, e.g. II or II,V1")->delimiter(',');
  eval_cmd->add_option("--fraction", eval.fraction, "Low-shot training fraction");
  eval_cmd->add_option("--seeds", eval.seeds, "Repetitions (independent seeds)");
  eval_cmd->add_option("--target", eval.target, "Label used as the class target");
  eval_cmd->add_option("--data", eval.data, "Labelled corpus directory");

  std::string suite;
  int ablate_seeds = 3;
  auto* ablate_cmd = app.add_subcommand("ablate", "Paired desk-scale ablation runs");
  ablate_cmd->add_option("--suite", suite, "cropa | maskratio | leads")->required()->check(
      CLI::IsMember({"cropa", "maskratio", "leads"}));
  ablate_cmd->add_option("--seeds", ablate_seeds, "Pretraining seeds")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    if (*synth_cmd) return cmd_synth(g, synth, count_opt->count() > 0);
    if (*convert_cmd) return cmd_convert(g, manifest, keep12);
    if (*pretrain_cmd) return cmd_pretrain(g);
    if (*eval_cmd) return cmd_eval(g, eval);
    if (*ablate_cmd) return cmd_ablate(g, suite, ablate_seeds);
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIo;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitInvalid;
}
