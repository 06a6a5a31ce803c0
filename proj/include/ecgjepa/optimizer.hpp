// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "ecgjepa/tensor.hpp"

namespace ecgjepa {

struct AdamWHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Only weight matrices (rank-2 tensors) are decayed; biases, norm gains and
/// the mask token are not.
template <typename T>
bool receives_weight_decay(const Tensor<T>& tensor) {
  return tensor.rank() == 2;
}

/// Adam with decoupled weight decay:
///   p <- p - lr wd p                      (decayed tensors only)
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   p <- p - lr mhat / (sqrt(vhat) + eps),  mhat = m / (1 - b1^t), vhat = v / (1 - b2^t)
template <typename T>
class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(const ParameterSet<T>& params, AdamWHyper hyper = {});

  void step(ParameterSet<T>& params, const ParameterSet<T>& grads, double lr, double weight_decay);

  std::int64_t step_count() const noexcept { return steps_; }
  const ParameterSet<T>& first_moment() const noexcept { return m_; }
  const ParameterSet<T>& second_moment() const noexcept { return v_; }
  const AdamWHyper& hyper() const noexcept { return hyper_; }

  /// Reinstates saved moments; layouts must match the parameters.
  void restore(ParameterSet<T> m, ParameterSet<T> v, std::int64_t steps);

 private:
  AdamWHyper hyper_;
  ParameterSet<T> m_;
  ParameterSet<T> v_;
  std::int64_t steps_ = 0;
};

extern template class AdamW<float>;
extern template class AdamW<double>;

/// Linear warmup from 0 to peak_lr over warmup_steps, then half-cosine decay
/// reaching 0 at total_steps.
double lr_at(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double peak_lr);

/// base_lr * batch_size / 256.
double scaled_finetune_lr(double base_lr, int batch_size);

}  // namespace ecgjepa
