// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "ecgjepa/ecg.hpp"
#include "ecgjepa/model.hpp"
#include "ecgjepa/rng.hpp"

namespace ecgjepa::testing {

/// Record with i.i.d. normal samples on the given leads.
inline EcgRecord random_record(std::span<const Lead> leads, int samples, double rate, Rng& rng) {
  EcgRecord::Samples s(static_cast<Eigen::Index>(leads.size()), samples);
  for (Eigen::Index i = 0; i < s.size(); ++i) s.data()[i] = rng.normal();
  return EcgRecord(std::vector<Lead>(leads.begin(), leads.end()), rate, s);
}

inline EcgRecord random_record8(int samples, Rng& rng) {
  return random_record(kEightLeads, samples, 250.0, rng);
}

/// Smallest model with every structural piece present.
inline ModelConfig tiny_model(int patch_len = 8) {
  ModelConfig m;
  m.encoder_layers = 1;
  m.encoder_heads = 2;
  m.encoder_dim = 8;
  m.predictor_layers = 1;
  m.predictor_heads = 2;
  m.predictor_dim = 8;
  m.patch_len = patch_len;
  m.drop_path_rate = 0.0;
  return m;
}

}  // namespace ecgjepa::testing
