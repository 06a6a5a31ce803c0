// SPDX-License-Identifier: Apache-2.0
#include "ecgjepa/optimizer.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "ecgjepa/error.hpp"

namespace ecgjepa {

template <typename T>
AdamW<T>::AdamW(const ParameterSet<T>& params, AdamWHyper hyper)
    : hyper_(hyper), m_(params.zeros_like()), v_(params.zeros_like()) {}

template <typename T>
void AdamW<T>::step(ParameterSet<T>& params, const ParameterSet<T>& grads, double lr, double weight_decay) {
  if (!params.same_layout(m_) || !params.same_layout(grads)) {
    throw ValidationError("AdamW::step: parameter, gradient and moment layouts differ");
  }
  ++steps_;
  const double bc1 = 1.0 - std::pow(hyper_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(hyper_.beta2, static_cast<double>(steps_));
  const T b1 = static_cast<T>(hyper_.beta1);
  const T b2 = static_cast<T>(hyper_.beta2);
  const T step_size = static_cast<T>(lr / bc1);
  const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
  const T eps = static_cast<T>(hyper_.eps);
  const T decay = static_cast<T>(1.0 - lr * weight_decay);

  for (auto& [name, p] : params) {
    const auto& g = grads[name].array();
    auto m = m_[name].array();
    auto v = v_[name].array();
    if (weight_decay != 0.0 && receives_weight_decay(p)) p.value *= decay;
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g.square();
    p.value.array() -= step_size * m / (v.sqrt() * inv_sqrt_bc2 + eps);
  }
}

template <typename T>
void AdamW<T>::restore(ParameterSet<T> m, ParameterSet<T> v, std::int64_t steps) {
  if (!m.same_layout(v) || !m.same_layout(m_)) throw ValidationError("AdamW::restore: moment layouts differ");
  if (steps < 0) throw ValidationError("AdamW::restore: negative step count");
  m_ = std::move(m);
  v_ = std::move(v);
  steps_ = steps;
}

template class AdamW<float>;
template class AdamW<double>;

double lr_at(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double peak_lr) {
  if (total_steps < 1 || warmup_steps < 0 || warmup_steps >= total_steps) {
    throw ValidationError("lr_at: need 0 <= warmup_steps < total_steps");
  }
  if (step < 0 || step > total_steps) {
    throw ValidationError("lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(total_steps) + "]");
  }
  if (step < warmup_steps) return peak_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return peak_lr * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

double scaled_finetune_lr(double base_lr, int batch_size) {
  if (!(base_lr > 0.0)) throw ValidationError("scaled_finetune_lr: base_lr must be positive");
  if (batch_size < 1) throw ValidationError("scaled_finetune_lr: batch_size must be >= 1");
  return base_lr * batch_size / 256.0;
}

}  // namespace ecgjepa
