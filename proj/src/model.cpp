// SPDX-License-Identifier: Apache-2.0
#include "ecgjepa/model.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ecgjepa/error.hpp"

namespace ecgjepa {
namespace {

std::string block_prefix(int i) { return "blocks." + std::to_string(i) + "."; }

template <typename T>
void require_finite(const Mat<T>& m, const std::string& where) {
  if (!m.allFinite()) {
    std::ostringstream msg;
    msg << where << ": non-finite activation (" << m.rows() << "x" << m.cols() << ", max |x| = "
        << m.array().abs().maxCoeff() << ")";
    throw NumericError(msg.str());
  }
}

template <typename T>
std::pair<T, T> drop_path_scales(double rate, Rng* rng) {
  if (!rng || rate <= 0.0) return {T(1), T(1)};
  const T keep = static_cast<T>(1.0 / (1.0 - rate));
  const T a = rng->bernoulli(rate) ? T(0) : keep;
  const T m = rng->bernoulli(rate) ? T(0) : keep;
  return {a, m};
}

}  // namespace

void ModelConfig::validate() const {
  std::vector<std::string> errors;
  if (encoder_layers < 1) errors.push_back("encoder_layers must be >= 1");
  if (encoder_heads < 1) errors.push_back("encoder_heads must be >= 1");
  if (predictor_layers < 1) errors.push_back("predictor_layers must be >= 1");
  if (predictor_heads < 1) errors.push_back("predictor_heads must be >= 1");
  if (encoder_dim < 2 || encoder_dim % 4 != 0) {
    errors.push_back("encoder_dim must be a positive multiple of 4 (two even sinusoidal halves)");
  }
  if (encoder_heads >= 1 && encoder_dim % encoder_heads != 0) {
    errors.push_back("encoder_dim must be divisible by encoder_heads");
  }
  if (predictor_dim < 2 || predictor_dim % 2 != 0) errors.push_back("predictor_dim must be even");
  if (predictor_heads >= 1 && predictor_dim % predictor_heads != 0) {
    errors.push_back("predictor_dim must be divisible by predictor_heads");
  }
  if (patch_len < 1) errors.push_back("patch_len must be >= 1");
  if (!(drop_path_rate >= 0.0 && drop_path_rate < 1.0)) errors.push_back("drop_path_rate must be in [0, 1)");
  if (!errors.empty()) {
    std::string msg = "invalid model config:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw ValidationError(msg);
  }
}

void EmaSchedule::validate() const {
  if (!(0.0 <= ema0 && ema0 <= ema1 && ema1 <= 1.0)) {
    throw ValidationError("ema schedule must satisfy 0 <= ema0 <= ema1 <= 1");
  }
  if (total_iterations < 1) throw ValidationError("ema schedule needs total_iterations >= 1");
}

Eigen::MatrixXd sinusoidal_table_1d(int count, int dim) {
  if (dim <= 0 || dim % 2 != 0) throw ValidationError("sinusoidal_table_1d: dim must be positive and even");
  if (count < 0) throw ValidationError("sinusoidal_table_1d: negative count");
  Eigen::MatrixXd table(count, dim);
  for (int k = 0; k < dim / 2; ++k) {
    const double inv_freq = 1.0 / std::pow(10000.0, 2.0 * k / dim);
    for (int p = 0; p < count; ++p) {
      table(p, 2 * k) = std::sin(p * inv_freq);
      table(p, 2 * k + 1) = std::cos(p * inv_freq);
    }
  }
  return table;
}

Eigen::MatrixXd sinusoidal_table_2d(int leads, int times, int dim) {
  if (dim <= 0 || dim % 4 != 0) {
    throw ValidationError("sinusoidal_table_2d: dim must be divisible by 2 with an even half");
  }
  const int half = dim / 2;
  const Eigen::MatrixXd time_table = sinusoidal_table_1d(times, half);
  const Eigen::MatrixXd lead_table = sinusoidal_table_1d(leads, half);
  Eigen::MatrixXd table(static_cast<Eigen::Index>(leads) * times, dim);
  for (int l = 0; l < leads; ++l) {
    for (int p = 0; p < times; ++p) {
      table.row(l * times + p) << time_table.row(p), lead_table.row(l);
    }
  }
  return table;
}

BoolMatrix cropa_mask(std::span<const int> lead_index, std::span<const int> time_index) {
  if (lead_index.size() != time_index.size()) {
    throw ValidationError("cropa_mask: lead and time index lists differ in length");
  }
  const auto n = static_cast<Eigen::Index>(lead_index.size());
  BoolMatrix allow(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      allow(i, j) = lead_index[static_cast<std::size_t>(i)] == lead_index[static_cast<std::size_t>(j)] ||
                    time_index[static_cast<std::size_t>(i)] == time_index[static_cast<std::size_t>(j)];
    }
  }
  return allow;
}

template <typename T>
ParameterSet<T> init_encoder_parameters(const ModelConfig& config, Rng& rng) {
  config.validate();
  const Eigen::Index d = config.encoder_dim;
  ParameterSet<T> p;
  nn::fill_truncated_normal(p.add_matrix("patch_embed.weight", config.patch_len, d), 0.02, rng);
  p.add_vector("patch_embed.bias", d);
  for (int i = 0; i < config.encoder_layers; ++i) nn::add_block_parameters(p, block_prefix(i), d, 4 * d, rng);
  p.add_vector("norm.weight", d).setOnes();
  p.add_vector("norm.bias", d);
  return p;
}

template <typename T>
ParameterSet<T> init_predictor_parameters(const ModelConfig& config, Rng& rng) {
  config.validate();
  const Eigen::Index d = config.encoder_dim;
  const Eigen::Index dp = config.predictor_dim;
  ParameterSet<T> p;
  nn::fill_truncated_normal(p.add_matrix("embed.weight", d, dp), 0.02, rng);
  p.add_vector("embed.bias", dp);
  nn::fill_truncated_normal(p.add_vector("mask_token", dp), 0.02, rng);
  for (int i = 0; i < config.predictor_layers; ++i) nn::add_block_parameters(p, block_prefix(i), dp, 4 * dp, rng);
  p.add_vector("norm.weight", dp).setOnes();
  p.add_vector("norm.bias", dp);
  nn::fill_truncated_normal(p.add_matrix("proj.weight", dp, d), 0.02, rng);
  p.add_vector("proj.bias", d);
  return p;
}

template <typename T>
JepaParameters<T> init_jepa_parameters(const ModelConfig& config, Rng& rng) {
  JepaParameters<T> params;
  params.student = init_encoder_parameters<T>(config, rng);
  params.teacher = params.student;
  params.predictor = init_predictor_parameters<T>(config, rng);
  return params;
}

template <typename T>
RepresentationGrid<T> encode(const ParameterSet<T>& encoder, const TokenSet& tokens, const ModelConfig& config,
                             Rng* drop_rng, EncoderCache<T>* cache) {
  const auto n = static_cast<Eigen::Index>(tokens.size());
  const Eigen::Index d = config.encoder_dim;
  if (n == 0) throw ValidationError("encode: no tokens");
  if (tokens.time_index.size() != tokens.size() || tokens.patches.rows() != n) {
    throw ValidationError("encode: token index lists do not match the patch rows");
  }
  if (static_cast<Eigen::Index>(tokens.lead_count) * tokens.time_count != n) {
    throw ValidationError("encode: lead_count x time_count does not match the token count");
  }
  if (tokens.patches.cols() != config.patch_len) {
    throw ValidationError("encode: patch length " + std::to_string(tokens.patches.cols()) + " but model expects " +
                          std::to_string(config.patch_len));
  }
  const auto& w = encoder["patch_embed.weight"];
  if (w.cols() != d) throw ValidationError("encode: parameter width does not match encoder_dim");

  Mat<T> patches = tokens.patches.cast<T>();
  Mat<T> x(n, d);
  x.noalias() = patches * w;
  x.rowwise() += encoder["patch_embed.bias"].row(0);

  const int max_time = *std::max_element(tokens.time_index.begin(), tokens.time_index.end());
  const int max_lead = *std::max_element(tokens.lead_index.begin(), tokens.lead_index.end());
  const Eigen::MatrixXd time_pos = sinusoidal_table_1d(max_time + 1, static_cast<int>(d / 2));
  const Eigen::MatrixXd lead_pos = sinusoidal_table_1d(max_lead + 1, static_cast<int>(d / 2));
  for (Eigen::Index r = 0; r < n; ++r) {
    x.row(r).head(d / 2) += time_pos.row(tokens.time_index[static_cast<std::size_t>(r)]).cast<T>();
    x.row(r).tail(d / 2) += lead_pos.row(tokens.lead_index[static_cast<std::size_t>(r)]).cast<T>();
  }

  Mat<T> bias;
  if (config.use_cropa) {
    const BoolMatrix allow = cropa_mask(tokens.lead_index, tokens.time_index);
    bias = allow.select(Mat<T>::Zero(n, n), Mat<T>::Constant(n, n, static_cast<T>(nn::kMaskedLogit)));
  }
  nn::AttentionLayout<T> layout{n, config.use_cropa ? &bias : nullptr};

  std::vector<nn::BlockCache<T>> block_caches(cache ? config.encoder_layers : 0);
  for (int i = 0; i < config.encoder_layers; ++i) {
    const auto [sa, sm] = drop_path_scales<T>(config.drop_path_rate, drop_rng);
    x = nn::block_forward(encoder, block_prefix(i), x, config.encoder_heads, layout, sa, sm,
                          cache ? &block_caches[static_cast<std::size_t>(i)] : nullptr);
    require_finite(x, "encoder block " + std::to_string(i));
  }

  RepresentationGrid<T> out;
  out.lead_count = tokens.lead_count;
  out.time_count = tokens.time_count;
  nn::LayerNormCache<T> norm_cache;
  out.values = nn::layer_norm(x, &encoder["norm.weight"], &encoder["norm.bias"], cache ? &norm_cache : nullptr);
  require_finite(out.values, "encoder output");

  if (cache) {
    cache->patches = std::move(patches);
    cache->bias = std::move(bias);
    cache->has_bias = config.use_cropa;
    cache->segment_len = n;
    cache->blocks = std::move(block_caches);
    cache->norm = std::move(norm_cache);
  }
  return out;
}

template <typename T>
void encode_backward(const ParameterSet<T>& encoder, const Mat<T>& d_out, const EncoderCache<T>& cache,
                     const ModelConfig& config, ParameterSet<T>& grads) {
  Mat<T> dx = nn::layer_norm_backward(d_out, cache.norm, &encoder["norm.weight"], &grads["norm.weight"],
                                      &grads["norm.bias"]);
  const nn::AttentionLayout<T> layout{cache.segment_len, cache.has_bias ? &cache.bias : nullptr};
  for (int i = config.encoder_layers - 1; i >= 0; --i) {
    dx = nn::block_backward(encoder, block_prefix(i), dx, cache.blocks[static_cast<std::size_t>(i)],
                            config.encoder_heads, layout, grads);
  }
  grads["patch_embed.weight"].noalias() += cache.patches.transpose() * dx;
  grads["patch_embed.bias"].row(0) += dx.colwise().sum();
}

template <typename T>
RepresentationGrid<T> predict(const ParameterSet<T>& predictor, const RepresentationGrid<T>& student_reps,
                              const MaskPlan& plan, const ModelConfig& config, PredictorCache<T>* cache) {
  const int leads = student_reps.lead_count;
  const int n = plan.n();
  const auto& visible = plan.visible();
  const auto q = static_cast<int>(visible.size());
  if (student_reps.time_count != q || student_reps.values.rows() != static_cast<Eigen::Index>(leads) * q) {
    throw ValidationError("predict: student representations hold " + std::to_string(student_reps.time_count) +
                          " time slots per lead but the plan has " + std::to_string(q) + " visible");
  }
  if (student_reps.dim() != config.encoder_dim) throw ValidationError("predict: representation width mismatch");
  const Eigen::Index dp = config.predictor_dim;

  Mat<T> z(student_reps.values.rows(), dp);
  z.noalias() = student_reps.values * predictor["embed.weight"];
  z.rowwise() += predictor["embed.bias"].row(0);

  const auto& mask_token = predictor["mask_token"];
  const Eigen::MatrixXd pos = sinusoidal_table_1d(n, static_cast<int>(dp));
  Mat<T> x(static_cast<Eigen::Index>(leads) * n, dp);
  for (int l = 0; l < leads; ++l) {
    for (int i = 0; i < n; ++i) x.row(l * n + i) = mask_token.row(0);
    for (int k = 0; k < q; ++k) x.row(l * n + visible[static_cast<std::size_t>(k)]) = z.row(l * q + k);
    for (int i = 0; i < n; ++i) x.row(l * n + i) += pos.row(i).cast<T>();
  }

  const nn::AttentionLayout<T> layout{n, nullptr};
  std::vector<nn::BlockCache<T>> block_caches(cache ? config.predictor_layers : 0);
  for (int i = 0; i < config.predictor_layers; ++i) {
    x = nn::block_forward(predictor, block_prefix(i), x, config.predictor_heads, layout, T(1), T(1),
                          cache ? &block_caches[static_cast<std::size_t>(i)] : nullptr);
    require_finite(x, "predictor block " + std::to_string(i));
  }
  nn::LayerNormCache<T> norm_cache;
  Mat<T> normed = nn::layer_norm(x, &predictor["norm.weight"], &predictor["norm.bias"], cache ? &norm_cache : nullptr);

  RepresentationGrid<T> out;
  out.lead_count = leads;
  out.time_count = n;
  out.values.resize(normed.rows(), config.encoder_dim);
  out.values.noalias() = normed * predictor["proj.weight"];
  out.values.rowwise() += predictor["proj.bias"].row(0);
  require_finite(out.values, "predictor output");

  if (cache) {
    cache->lead_count = leads;
    cache->reps_in = student_reps.values;
    cache->blocks = std::move(block_caches);
    cache->norm = std::move(norm_cache);
    cache->normed = std::move(normed);
  }
  return out;
}

template <typename T>
Mat<T> predict_backward(const ParameterSet<T>& predictor, const Mat<T>& d_out, const PredictorCache<T>& cache,
                        const MaskPlan& plan, const ModelConfig& config, ParameterSet<T>& grads) {
  const int leads = cache.lead_count;
  const int n = plan.n();
  const auto& visible = plan.visible();
  const auto q = static_cast<int>(visible.size());

  grads["proj.weight"].noalias() += cache.normed.transpose() * d_out;
  grads["proj.bias"].row(0) += d_out.colwise().sum();
  Mat<T> dx(d_out.rows(), config.predictor_dim);
  dx.noalias() = d_out * predictor["proj.weight"].transpose();
  dx = nn::layer_norm_backward(dx, cache.norm, &predictor["norm.weight"], &grads["norm.weight"], &grads["norm.bias"]);

  const nn::AttentionLayout<T> layout{n, nullptr};
  for (int i = config.predictor_layers - 1; i >= 0; --i) {
    dx = nn::block_backward(predictor, block_prefix(i), dx, cache.blocks[static_cast<std::size_t>(i)],
                            config.predictor_heads, layout, grads);
  }

  Mat<T> dz(static_cast<Eigen::Index>(leads) * q, config.predictor_dim);
  auto& d_mask = grads["mask_token"];
  for (int l = 0; l < leads; ++l) {
    for (int k = 0; k < q; ++k) dz.row(l * q + k) = dx.row(l * n + visible[static_cast<std::size_t>(k)]);
    for (int i : plan.masked()) d_mask.row(0) += dx.row(l * n + i);
  }
  grads["embed.weight"].noalias() += cache.reps_in.transpose() * dz;
  grads["embed.bias"].row(0) += dz.colwise().sum();
  Mat<T> d_reps(dz.rows(), config.encoder_dim);
  d_reps.noalias() = dz * predictor["embed.weight"].transpose();
  return d_reps;
}

double smooth_l1(double d) {
  const double a = std::abs(d);
  return a < 1.0 ? 0.5 * d * d : a - 0.5;
}

template <typename T>
RepresentationGrid<T> normalize_targets(const RepresentationGrid<T>& teacher_out) {
  RepresentationGrid<T> out;
  out.lead_count = teacher_out.lead_count;
  out.time_count = teacher_out.time_count;
  out.values = nn::layer_norm<T>(teacher_out.values, nullptr, nullptr, nullptr);
  return out;
}

template <typename T>
double jepa_loss(const RepresentationGrid<T>& predicted, const RepresentationGrid<T>& target, const MaskPlan& plan,
                 Mat<T>* d_predicted) {
  if (predicted.lead_count != target.lead_count || predicted.time_count != target.time_count ||
      predicted.values.rows() != target.values.rows() || predicted.values.cols() != target.values.cols()) {
    throw ValidationError("jepa_loss: predicted and target shapes differ");
  }
  if (plan.n() != predicted.time_count) throw ValidationError("jepa_loss: plan size does not match the grid");
  const int n = predicted.time_count;
  const Eigen::Index d = predicted.dim();
  const double count = static_cast<double>(predicted.lead_count) * static_cast<double>(plan.masked().size()) *
                       static_cast<double>(d);
  if (d_predicted) d_predicted->setZero(predicted.values.rows(), d);
  double total = 0.0;
  for (int l = 0; l < predicted.lead_count; ++l) {
    for (int i : plan.masked()) {
      const Eigen::Index r = static_cast<Eigen::Index>(l) * n + i;
      for (Eigen::Index c = 0; c < d; ++c) {
        const double diff = static_cast<double>(predicted.values(r, c)) - static_cast<double>(target.values(r, c));
        total += smooth_l1(diff);
        if (d_predicted) {
          const double g = std::abs(diff) < 1.0 ? diff : (diff > 0.0 ? 1.0 : -1.0);
          (*d_predicted)(r, c) = static_cast<T>(g / count);
        }
      }
    }
  }
  return total / count;
}

template <typename T>
double jepa_objective(const JepaParameters<T>& params, const PatchGrid& grid, const MaskPlan& plan,
                      const ModelConfig& config, Rng* drop_rng, ParameterSet<T>* student_grad,
                      ParameterSet<T>* predictor_grad, T grad_weight) {
  const RepresentationGrid<T> target = normalize_targets(encode(params.teacher, all_tokens(grid), config));

  const bool backward = student_grad && predictor_grad;
  EncoderCache<T> enc_cache;
  PredictorCache<T> pred_cache;
  const RepresentationGrid<T> context =
      encode(params.student, split_visible(grid, plan), config, drop_rng, backward ? &enc_cache : nullptr);
  const RepresentationGrid<T> predicted =
      predict(params.predictor, context, plan, config, backward ? &pred_cache : nullptr);

  Mat<T> d_pred;
  const double loss = jepa_loss(predicted, target, plan, backward ? &d_pred : nullptr);
  if (!std::isfinite(loss)) throw NumericError("jepa_objective: non-finite loss");
  if (backward) {
    d_pred *= grad_weight;
    const Mat<T> d_context = predict_backward(params.predictor, d_pred, pred_cache, plan, config, *predictor_grad);
    encode_backward(params.student, d_context, enc_cache, config, *student_grad);
  }
  return loss;
}

double ema_beta(std::int64_t i, const EmaSchedule& schedule) {
  schedule.validate();
  if (i < 0 || i > schedule.total_iterations) {
    throw ValidationError("ema_beta: iteration " + std::to_string(i) + " outside [0, " +
                          std::to_string(schedule.total_iterations) + "]");
  }
  return schedule.ema0 +
         static_cast<double>(i) * (schedule.ema1 - schedule.ema0) / static_cast<double>(schedule.total_iterations);
}

template <typename T>
void ema_update(ParameterSet<T>& teacher, const ParameterSet<T>& student, double beta) {
  if (!(beta >= 0.0 && beta <= 1.0)) throw ValidationError("ema_update: beta outside [0, 1]");
  if (!teacher.same_layout(student)) throw ValidationError("ema_update: teacher and student layouts differ");
  const T b = static_cast<T>(beta);
  const T one_minus_b = static_cast<T>(1.0 - beta);
  for (auto& [name, t] : teacher) {
    t.value = b * t.value + one_minus_b * student[name];
  }
}

#define ECGJEPA_INSTANTIATE_MODEL(T)                                                                           \
  template ParameterSet<T> init_encoder_parameters<T>(const ModelConfig&, Rng&);                              \
  template ParameterSet<T> init_predictor_parameters<T>(const ModelConfig&, Rng&);                            \
  template JepaParameters<T> init_jepa_parameters<T>(const ModelConfig&, Rng&);                               \
  template RepresentationGrid<T> encode<T>(const ParameterSet<T>&, const TokenSet&, const ModelConfig&, Rng*,  \
                                           EncoderCache<T>*);                                                 \
  template void encode_backward<T>(const ParameterSet<T>&, const Mat<T>&, const EncoderCache<T>&,              \
                                   const ModelConfig&, ParameterSet<T>&);                                     \
  template RepresentationGrid<T> predict<T>(const ParameterSet<T>&, const RepresentationGrid<T>&,              \
                                            const MaskPlan&, const ModelConfig&, PredictorCache<T>*);         \
  template Mat<T> predict_backward<T>(const ParameterSet<T>&, const Mat<T>&, const PredictorCache<T>&,         \
                                      const MaskPlan&, const ModelConfig&, ParameterSet<T>&);                 \
  template RepresentationGrid<T> normalize_targets<T>(const RepresentationGrid<T>&);                          \
  template double jepa_loss<T>(const RepresentationGrid<T>&, const RepresentationGrid<T>&, const MaskPlan&,    \
                               Mat<T>*);                                                                      \
  template double jepa_objective<T>(const JepaParameters<T>&, const PatchGrid&, const MaskPlan&,               \
                                    const ModelConfig&, Rng*, ParameterSet<T>*, ParameterSet<T>*, T);         \
  template void ema_update<T>(ParameterSet<T>&, const ParameterSet<T>&, double);

ECGJEPA_INSTANTIATE_MODEL(float)
ECGJEPA_INSTANTIATE_MODEL(double)

}  // namespace ecgjepa
