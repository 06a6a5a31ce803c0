// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace ecgjepa {

/// Lead identifiers. The numeric value is the on-disk code of the ECGB format.
enum class Lead : std::uint16_t {
  I = 0,
  II = 1,
  III = 2,
  aVR = 3,
  aVL = 4,
  aVF = 5,
  V1 = 6,
  V2 = 7,
  V3 = 8,
  V4 = 9,
  V5 = 10,
  V6 = 11,
};

/// The eight independent leads, in model order.
inline constexpr std::array<Lead, 8> kEightLeads{Lead::I,  Lead::II, Lead::V1, Lead::V2,
                                                 Lead::V3, Lead::V4, Lead::V5, Lead::V6};

/// Model order for twelve leads: the eight independent leads followed by the
/// four limb-derived leads.
inline constexpr std::array<Lead, 12> kTwelveLeads{
    Lead::I,  Lead::II, Lead::V1,  Lead::V2,  Lead::V3,  Lead::V4,
    Lead::V5, Lead::V6, Lead::III, Lead::aVR, Lead::aVL, Lead::aVF};

std::string_view lead_name(Lead lead);
/// Parses "I", "II", "aVR", "V1" ... (exact spelling, case-sensitive except
/// that "AVR"/"avr" style spellings of augmented leads are accepted).
std::optional<Lead> parse_lead(std::string_view name);
/// Like parse_lead but throws ValidationError naming the bad token.
Lead lead_from_name(std::string_view name);
std::optional<Lead> lead_from_code(std::uint16_t code);

/// Index of a lead in kTwelveLeads. Positional embeddings use this index, so
/// a lead keeps the same position whatever subset of leads is present.
int canonical_position(Lead lead);

/// Multi-lead signal in millivolts, lead-major (one row per lead).
class EcgRecord {
 public:
  using Samples = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

  /// Throws ValidationError unless every invariant holds: matching row count,
  /// at least one sample, positive rate, no duplicate leads, finite values.
  EcgRecord(std::vector<Lead> leads, double sample_rate_hz, Samples samples);

  const std::vector<Lead>& leads() const noexcept { return leads_; }
  double sample_rate_hz() const noexcept { return sample_rate_hz_; }
  const Samples& samples() const noexcept { return samples_; }
  std::size_t lead_count() const noexcept { return leads_.size(); }
  std::size_t sample_count() const noexcept { return static_cast<std::size_t>(samples_.cols()); }

  std::optional<std::size_t> row_of(Lead lead) const;
  bool has(Lead lead) const { return row_of(lead).has_value(); }

  /// Record restricted to `subset`, in the order given. A missing lead is a
  /// ValidationError naming it.
  EcgRecord select(std::span<const Lead> subset) const;

  friend bool operator==(const EcgRecord& a, const EcgRecord& b) {
    return a.leads_ == b.leads_ && a.sample_rate_hz_ == b.sample_rate_hz_ &&
           a.samples_.rows() == b.samples_.rows() && a.samples_.cols() == b.samples_.cols() &&
           a.samples_ == b.samples_;
  }

 private:
  std::vector<Lead> leads_;
  double sample_rate_hz_;
  Samples samples_;
};

/// Appends III, aVR, aVL, aVF to an 8-lead record (I, II, V1-V6):
///   III = II - I, aVR = -(I + II)/2, aVL = (I - II)/2, aVF = (II - I)/2.
/// The input must hold exactly those eight leads; output is in kTwelveLeads order.
EcgRecord derive_full_leads(const EcgRecord& record8);

/// Restricts a record to (I, II, V1..V6) in that order.
EcgRecord reduce_to_8_leads(const EcgRecord& record);

/// Linear interpolation onto a grid at target_hz. The output has
/// round(sample_count * target_hz / sample_rate_hz) samples; points past the
/// last source sample extrapolate from the final segment, which keeps the
/// operation exact on affine signals.
EcgRecord resample(const EcgRecord& record, double target_hz);

double heart_rate_from_rr(double rr_ms);

/// Parameters of one synthetic recording.
struct SyntheticEcgSpec {
  double heart_rate_bpm = 70.0;
  double qrs_duration_ms = 90.0;
  double rr_jitter_frac = 0.0;
  double noise_std_mv = 0.0;
  double baseline_wander_amp_mv = 0.0;
  double duration_s = 10.0;
  double sample_rate_hz = 250.0;
  int lead_count = 8;

  /// Throws ValidationError listing the first violated constraint.
  void validate() const;
};

struct EcgGroundTruth {
  double heart_rate_bpm = 0.0;
  double qrs_duration_ms = 0.0;
  int class_label = 0;
  double rr_interval_ms = 0.0;
};

/// Lead gains applied to the source beat train, in kEightLeads order. The
/// derived leads of a 12-lead synthetic record follow from these by the
/// limb-lead identities.
inline constexpr std::array<double, 8> kSyntheticLeadGains{0.6, 1.0, -0.4, 0.3, 0.8, 1.2, 1.1, 0.9};

/// Heart-rate bucket used as the synthetic classification label.
inline constexpr double kClassBoundaryBpm = 75.0;

/// Deterministic synthetic ECG with known heart rate and QRS width.
///
/// Beats are spaced RR = 60000/heart_rate ms apart with a per-beat
/// multiplicative jitter drawn from [1 - rr_jitter_frac, 1 + rr_jitter_frac].
/// Each beat is the sum of three Gaussian bumps relative to the R peak:
///   P   amplitude 0.15 mV at -0.18 RR, sigma 0.025 RR
///   QRS amplitude 1.00 mV at 0,        FWHM = qrs_duration_ms
///   T   amplitude 0.30 mV at +0.32 RR, sigma 0.05 RR
/// The first R peak falls on the sample grid inside [0.2 RR, 0.8 RR]. Each of
/// I, II, V1..V6 is the beat train times kSyntheticLeadGains, plus a shared
/// 0.3 Hz baseline-wander sinusoid (random phase) and independent white noise.
/// A 12-lead request derives the remaining four leads from the noisy eight.
std::pair<EcgRecord, EcgGroundTruth> generate_synthetic(const SyntheticEcgSpec& spec,
                                                        std::uint64_t seed);

}  // namespace ecgjepa
