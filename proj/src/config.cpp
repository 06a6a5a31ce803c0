// SPDX-License-Identifier: Apache-2.0
#include "ecgjepa/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "ecgjepa/error.hpp"

namespace ecgjepa {

using nlohmann::json;

namespace {

/// Reads fields of one JSON object, recording every problem under a dotted
/// path instead of stopping at the first.
class FieldReader {
 public:
  FieldReader(const json& j, std::string path, std::vector<std::string>& errors)
      : j_(j), path_(std::move(path)), errors_(errors) {
    if (!j_.is_object()) errors_.push_back(where("") + ": expected an object");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    const json& v = j_.at(key);
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) return type_error(key, "a boolean");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) return type_error(key, "an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.is_number_integer() && !v.is_number_unsigned()) return type_error(key, "a non-negative integer");
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) return type_error(key, "a number");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) return type_error(key, "a string");
    }
    out = v.get<T>();
  }

  void get_range(const std::string& key, std::pair<double, double>& out) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
      return type_error(key, "a [min, max] pair of numbers");
    }
    out = {v[0].get<double>(), v[1].get<double>()};
  }

  /// The sub-object at `key`, or null when absent.
  const json* child(const std::string& key) {
    seen_.insert(key);
    if (!j_.is_object() || !j_.contains(key)) return nullptr;
    return &j_.at(key);
  }

  std::string where(const std::string& key) const {
    if (key.empty()) return path_.empty() ? "<root>" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() {
    if (!j_.is_object()) return;
    for (const auto& [key, value] : j_.items()) {
      if (seen_.count(key) == 0) errors_.push_back(where(key) + ": unknown key");
    }
  }

  std::vector<std::string>& errors() { return errors_; }

 private:
  void type_error(const std::string& key, const char* expected) {
    errors_.push_back(where(key) + ": expected " + expected);
  }

  const json& j_;
  std::string path_;
  std::vector<std::string>& errors_;
  std::set<std::string> seen_;
};

/// Runs a type's validate() and folds its message lines into `errors`.
template <typename F>
void collect_validation(const std::string& path, std::vector<std::string>& errors, F&& validate) {
  try {
    validate();
  } catch (const ValidationError& e) {
    std::istringstream lines(e.what());
    std::string line;
    std::getline(lines, line);
    bool any = false;
    while (std::getline(lines, line)) {
      const auto start = line.find_first_not_of(' ');
      errors.push_back(path + ": " + line.substr(start == std::string::npos ? 0 : start));
      any = true;
    }
    if (!any) errors.push_back(path + ": " + e.what());
  }
}

void throw_if_errors(const std::vector<std::string>& errors) {
  if (errors.empty()) return;
  std::string msg = "invalid configuration (" + std::to_string(errors.size()) + " problem" +
                    (errors.size() == 1 ? "" : "s") + "):";
  for (const auto& e : errors) msg += "\n  " + e;
  throw ValidationError(msg);
}

ModelConfig read_model(const json& j, const std::string& path, std::vector<std::string>& errors) {
  ModelConfig c;
  FieldReader r(j, path, errors);
  r.get("encoder_layers", c.encoder_layers);
  r.get("encoder_heads", c.encoder_heads);
  r.get("encoder_dim", c.encoder_dim);
  r.get("predictor_layers", c.predictor_layers);
  r.get("predictor_heads", c.predictor_heads);
  r.get("predictor_dim", c.predictor_dim);
  r.get("patch_len", c.patch_len);
  r.get("drop_path_rate", c.drop_path_rate);
  r.get("use_cropa", c.use_cropa);
  r.finish();
  collect_validation(path, errors, [&] { c.validate(); });
  return c;
}

TrainConfig read_train(const json& j, const std::string& path, std::vector<std::string>& errors) {
  TrainConfig c;
  FieldReader r(j, path, errors);
  r.get("learning_rate", c.learning_rate);
  r.get("weight_decay", c.weight_decay);
  r.get("batch_size", c.batch_size);
  r.get("epochs", c.epochs);
  r.get("warmup_epochs", c.warmup_epochs);
  std::string strategy(mask_strategy_name(c.mask_strategy));
  r.get("mask_strategy", strategy);
  try {
    c.mask_strategy = parse_mask_strategy(strategy);
  } catch (const ValidationError& e) {
    errors.push_back(r.where("mask_strategy") + ": " + e.what());
  }
  r.get("mask_ratio_lo", c.mask_ratio_lo);
  r.get("mask_ratio_hi", c.mask_ratio_hi);
  r.get("mask_freq", c.mask_freq);
  r.get("ema0", c.ema0);
  r.get("ema1", c.ema1);
  r.get("seed", c.seed);
  r.get("base_lr_scaling", c.base_lr_scaling);
  r.finish();
  collect_validation(path, errors, [&] { c.validate(); });
  return c;
}

ProbeConfig read_probe(const json& j, const std::string& path, std::vector<std::string>& errors,
                       ProbeConfig c = {}) {
  FieldReader r(j, path, errors);
  r.get("learning_rate", c.learning_rate);
  r.get("weight_decay", c.weight_decay);
  r.get("batch_size", c.batch_size);
  r.get("epochs", c.epochs);
  r.get("warmup_epochs", c.warmup_epochs);
  r.get("seed", c.seed);
  r.get("standardize", c.standardize);
  r.finish();
  collect_validation(path, errors, [&] { c.validate(); });
  return c;
}

FinetuneConfig read_finetune(const json& j, const std::string& path, std::vector<std::string>& errors) {
  FinetuneConfig c;
  FieldReader r(j, path, errors);
  if (const json* h = r.child("head")) c.head = read_probe(*h, r.where("head"), errors, c.head);
  r.get("encoder_base_lr", c.encoder_base_lr);
  r.get("base_lr_scaling", c.base_lr_scaling);
  r.finish();
  if (!(c.encoder_base_lr >= 0.0)) errors.push_back(r.where("encoder_base_lr") + ": must be >= 0");
  return c;
}

SynthRanges read_synth(const json& j, const std::string& path, std::vector<std::string>& errors) {
  SynthRanges c;
  FieldReader r(j, path, errors);
  r.get_range("heart_rate_bpm", c.heart_rate_bpm);
  r.get_range("qrs_duration_ms", c.qrs_duration_ms);
  r.get_range("rr_jitter_frac", c.rr_jitter_frac);
  r.get_range("noise_std_mv", c.noise_std_mv);
  r.get_range("baseline_wander_amp_mv", c.baseline_wander_amp_mv);
  r.get("duration_s", c.duration_s);
  r.get("sample_rate_hz", c.sample_rate_hz);
  r.get("lead_count", c.lead_count);
  r.finish();
  collect_validation(path, errors, [&] { c.validate(); });
  return c;
}

json range_json(const std::pair<double, double>& r) { return json::array({r.first, r.second}); }

}  // namespace

json to_json(const ModelConfig& c) {
  return {{"encoder_layers", c.encoder_layers},     {"encoder_heads", c.encoder_heads},
          {"encoder_dim", c.encoder_dim},           {"predictor_layers", c.predictor_layers},
          {"predictor_heads", c.predictor_heads},   {"predictor_dim", c.predictor_dim},
          {"patch_len", c.patch_len},               {"drop_path_rate", c.drop_path_rate},
          {"use_cropa", c.use_cropa}};
}

json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs},
          {"mask_strategy", std::string(mask_strategy_name(c.mask_strategy))},
          {"mask_ratio_lo", c.mask_ratio_lo},
          {"mask_ratio_hi", c.mask_ratio_hi},
          {"mask_freq", c.mask_freq},
          {"ema0", c.ema0},
          {"ema1", c.ema1},
          {"seed", c.seed},
          {"base_lr_scaling", c.base_lr_scaling}};
}

json to_json(const ProbeConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"weight_decay", c.weight_decay},
          {"batch_size", c.batch_size},       {"epochs", c.epochs},
          {"warmup_epochs", c.warmup_epochs}, {"seed", c.seed},
          {"standardize", c.standardize}};
}

json to_json(const FinetuneConfig& c) {
  return {{"head", to_json(c.head)}, {"encoder_base_lr", c.encoder_base_lr}, {"base_lr_scaling", c.base_lr_scaling}};
}

json to_json(const SynthRanges& c) {
  return {{"heart_rate_bpm", range_json(c.heart_rate_bpm)},
          {"qrs_duration_ms", range_json(c.qrs_duration_ms)},
          {"rr_jitter_frac", range_json(c.rr_jitter_frac)},
          {"noise_std_mv", range_json(c.noise_std_mv)},
          {"baseline_wander_amp_mv", range_json(c.baseline_wander_amp_mv)},
          {"duration_s", c.duration_s},
          {"sample_rate_hz", c.sample_rate_hz},
          {"lead_count", c.lead_count}};
}

json to_json(const DataConfig& c) {
  json leads = json::array();
  for (Lead l : c.leads) leads.push_back(std::string(lead_name(l)));
  return {{"corpus_dir", c.corpus_dir},
          {"synth_count", c.synth_count},
          {"synth_seed", c.synth_seed},
          {"eval_corpus_dir", c.eval_corpus_dir},
          {"eval_synth_count", c.eval_synth_count},
          {"eval_synth_seed", c.eval_synth_seed},
          {"synth", to_json(c.synth)},
          {"leads", leads},
          {"test_fraction", c.test_fraction},
          {"split_seed", c.split_seed}};
}

json to_json(const EvalConfig& c) {
  return {{"protocol", c.protocol},
          {"target", c.target},
          {"lowshot_fraction", c.lowshot_fraction},
          {"repetitions", c.repetitions}};
}

json to_json(const ExperimentConfig& c) {
  return {{"model", to_json(c.model)},       {"train", to_json(c.train)}, {"probe", to_json(c.probe)},
          {"finetune", to_json(c.finetune)}, {"data", to_json(c.data)},   {"eval", to_json(c.eval)},
          {"output_dir", c.output_dir}};
}

ModelConfig model_config_from_json(const json& j) {
  std::vector<std::string> errors;
  auto c = read_model(j, "model", errors);
  throw_if_errors(errors);
  return c;
}

TrainConfig train_config_from_json(const json& j) {
  std::vector<std::string> errors;
  auto c = read_train(j, "train", errors);
  throw_if_errors(errors);
  return c;
}

ProbeConfig probe_config_from_json(const json& j) {
  std::vector<std::string> errors;
  auto c = read_probe(j, "probe", errors);
  throw_if_errors(errors);
  return c;
}

FinetuneConfig finetune_config_from_json(const json& j) {
  std::vector<std::string> errors;
  auto c = read_finetune(j, "finetune", errors);
  throw_if_errors(errors);
  return c;
}

SynthRanges synth_ranges_from_json(const json& j) {
  std::vector<std::string> errors;
  auto c = read_synth(j, "synth", errors);
  throw_if_errors(errors);
  return c;
}

ExperimentConfig experiment_config_from_json(const json& j) {
  std::vector<std::string> errors;
  ExperimentConfig c;
  FieldReader r(j, "", errors);
  if (const json* v = r.child("model")) c.model = read_model(*v, "model", errors);
  if (const json* v = r.child("train")) c.train = read_train(*v, "train", errors);
  if (const json* v = r.child("probe")) c.probe = read_probe(*v, "probe", errors);
  if (const json* v = r.child("finetune")) c.finetune = read_finetune(*v, "finetune", errors);
  if (const json* v = r.child("data")) {
    FieldReader d(*v, "data", errors);
    d.get("corpus_dir", c.data.corpus_dir);
    d.get("synth_count", c.data.synth_count);
    d.get("synth_seed", c.data.synth_seed);
    d.get("eval_corpus_dir", c.data.eval_corpus_dir);
    d.get("eval_synth_count", c.data.eval_synth_count);
    d.get("eval_synth_seed", c.data.eval_synth_seed);
    if (const json* s = d.child("synth")) c.data.synth = read_synth(*s, "data.synth", errors);
    if (const json* leads = d.child("leads")) {
      if (!leads->is_array() || leads->empty()) {
        errors.push_back("data.leads: expected a non-empty array of lead names");
      } else {
        c.data.leads.clear();
        for (const auto& name : *leads) {
          const auto lead = name.is_string() ? parse_lead(name.get<std::string>()) : std::nullopt;
          if (!lead) {
            errors.push_back("data.leads: unknown lead " + name.dump());
          } else if (std::find(c.data.leads.begin(), c.data.leads.end(), *lead) != c.data.leads.end()) {
            errors.push_back("data.leads: duplicate lead " + name.dump());
          } else {
            c.data.leads.push_back(*lead);
          }
        }
      }
    }
    d.get("test_fraction", c.data.test_fraction);
    d.get("split_seed", c.data.split_seed);
    d.finish();
    if (!(c.data.test_fraction > 0.0 && c.data.test_fraction < 1.0)) {
      errors.push_back("data.test_fraction: must be in (0, 1)");
    }
    if (c.data.corpus_dir.empty() && c.data.synth_count < 2) {
      errors.push_back("data.synth_count: must be >= 2 when no corpus_dir is given");
    }
    if (c.data.eval_corpus_dir.empty() && c.data.eval_synth_count < 2) {
      errors.push_back("data.eval_synth_count: must be >= 2 when no eval_corpus_dir is given");
    }
  }
  if (const json* v = r.child("eval")) {
    FieldReader e(*v, "eval", errors);
    e.get("protocol", c.eval.protocol);
    e.get("target", c.eval.target);
    e.get("lowshot_fraction", c.eval.lowshot_fraction);
    e.get("repetitions", c.eval.repetitions);
    e.finish();
    static const std::set<std::string> protocols{"probe", "finetune", "lowshot", "features"};
    if (protocols.count(c.eval.protocol) == 0) {
      errors.push_back("eval.protocol: expected probe|finetune|lowshot|features");
    }
    if (!(c.eval.lowshot_fraction > 0.0 && c.eval.lowshot_fraction <= 1.0)) {
      errors.push_back("eval.lowshot_fraction: must be in (0, 1]");
    }
    if (c.eval.repetitions < 1) errors.push_back("eval.repetitions: must be >= 1");
  }
  r.get("output_dir", c.output_dir);
  r.finish();
  throw_if_errors(errors);
  return c;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string() + ": cannot open for reading");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError(path.string() + ": invalid JSON: " + e.what());
  }
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  try {
    return experiment_config_from_json(j);
  } catch (const ValidationError& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

std::string canonical_dump(const json& j) { return j.dump(); }

std::string config_hash(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : canonical_dump(j)) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace ecgjepa
