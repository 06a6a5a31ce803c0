// SPDX-License-Identifier: Apache-2.0
#include "ecgjepa/ecg.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "ecgjepa/error.hpp"
#include "ecgjepa/rng.hpp"

namespace ecgjepa {
namespace {

constexpr std::array<std::string_view, 12> kLeadNames{"I",   "II",  "III", "aVR", "aVL", "aVF",
                                                      "V1",  "V2",  "V3",  "V4",  "V5",  "V6"};

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

}  // namespace

std::string_view lead_name(Lead lead) { return kLeadNames.at(static_cast<std::size_t>(lead)); }

std::optional<Lead> parse_lead(std::string_view name) {
  for (std::size_t i = 0; i < kLeadNames.size(); ++i) {
    if (kLeadNames[i] == name) return static_cast<Lead>(i);
  }
  const std::string low = lower(name);
  for (std::size_t i = 3; i <= 5; ++i) {
    if (lower(kLeadNames[i]) == low) return static_cast<Lead>(i);
  }
  return std::nullopt;
}

Lead lead_from_name(std::string_view name) {
  if (auto lead = parse_lead(name)) return *lead;
  throw ValidationError("unknown lead name '" + std::string(name) + "'");
}

std::optional<Lead> lead_from_code(std::uint16_t code) {
  if (code < kLeadNames.size()) return static_cast<Lead>(code);
  return std::nullopt;
}

int canonical_position(Lead lead) {
  const auto it = std::find(kTwelveLeads.begin(), kTwelveLeads.end(), lead);
  return static_cast<int>(it - kTwelveLeads.begin());
}

EcgRecord::EcgRecord(std::vector<Lead> leads, double sample_rate_hz, Samples samples)
    : leads_(std::move(leads)), sample_rate_hz_(sample_rate_hz), samples_(std::move(samples)) {
  if (leads_.empty()) throw ValidationError("EcgRecord: no leads");
  if (static_cast<std::size_t>(samples_.rows()) != leads_.size()) {
    std::ostringstream msg;
    msg << "EcgRecord: " << leads_.size() << " lead ids but " << samples_.rows() << " rows";
    throw ValidationError(msg.str());
  }
  if (samples_.cols() < 1) throw ValidationError("EcgRecord: sample_count must be >= 1");
  if (!(sample_rate_hz_ > 0.0) || !std::isfinite(sample_rate_hz_)) {
    throw ValidationError("EcgRecord: sample_rate_hz must be positive");
  }
  for (std::size_t i = 0; i < leads_.size(); ++i) {
    for (std::size_t j = i + 1; j < leads_.size(); ++j) {
      if (leads_[i] == leads_[j]) {
        throw ValidationError("EcgRecord: duplicate lead " + std::string(lead_name(leads_[i])));
      }
    }
  }
  if (!samples_.allFinite()) throw ValidationError("EcgRecord: non-finite sample value");
}

std::optional<std::size_t> EcgRecord::row_of(Lead lead) const {
  const auto it = std::find(leads_.begin(), leads_.end(), lead);
  if (it == leads_.end()) return std::nullopt;
  return static_cast<std::size_t>(it - leads_.begin());
}

EcgRecord EcgRecord::select(std::span<const Lead> subset) const {
  Samples out(static_cast<Eigen::Index>(subset.size()), samples_.cols());
  for (std::size_t i = 0; i < subset.size(); ++i) {
    const auto row = row_of(subset[i]);
    if (!row) throw ValidationError("missing lead " + std::string(lead_name(subset[i])));
    out.row(static_cast<Eigen::Index>(i)) = samples_.row(static_cast<Eigen::Index>(*row));
  }
  return EcgRecord(std::vector<Lead>(subset.begin(), subset.end()), sample_rate_hz_,
                   std::move(out));
}

EcgRecord derive_full_leads(const EcgRecord& record8) {
  for (Lead lead : kEightLeads) {
    if (!record8.has(lead)) {
      throw ValidationError("derive_full_leads: missing lead " + std::string(lead_name(lead)));
    }
  }
  if (record8.lead_count() != kEightLeads.size()) {
    throw ValidationError("derive_full_leads: expected exactly leads I, II, V1-V6");
  }
  const EcgRecord base = record8.select(kEightLeads);
  const auto& s = base.samples();
  const auto n = s.cols();
  EcgRecord::Samples out(12, n);
  out.topRows(8) = s;
  const auto lead_i = s.row(0).array();
  const auto lead_ii = s.row(1).array();
  out.row(8) = (lead_ii - lead_i).matrix();
  out.row(9) = (-(lead_i + lead_ii) / 2.0).matrix();
  out.row(10) = ((lead_i - lead_ii) / 2.0).matrix();
  out.row(11) = ((lead_ii - lead_i) / 2.0).matrix();
  return EcgRecord(std::vector<Lead>(kTwelveLeads.begin(), kTwelveLeads.end()),
                   base.sample_rate_hz(), std::move(out));
}

EcgRecord reduce_to_8_leads(const EcgRecord& record) { return record.select(kEightLeads); }

EcgRecord resample(const EcgRecord& record, double target_hz) {
  if (!(target_hz > 0.0) || !std::isfinite(target_hz)) {
    throw ValidationError("resample: target_hz must be positive");
  }
  if (target_hz == record.sample_rate_hz()) return record;

  const auto src_count = static_cast<Eigen::Index>(record.sample_count());
  const double ratio = record.sample_rate_hz() / target_hz;
  const auto out_count = static_cast<Eigen::Index>(
      std::round(static_cast<double>(src_count) * target_hz / record.sample_rate_hz()));
  if (out_count < 1) throw ValidationError("resample: target rate leaves no samples");

  const auto& src = record.samples();
  EcgRecord::Samples out(src.rows(), out_count);
  for (Eigen::Index k = 0; k < out_count; ++k) {
    const double x = static_cast<double>(k) * ratio;
    if (src_count == 1) {
      out.col(k) = src.col(0);
      continue;
    }
    const auto i = std::min(static_cast<Eigen::Index>(std::floor(x)), src_count - 2);
    const double w = x - static_cast<double>(i);
    out.col(k) = (1.0 - w) * src.col(i) + w * src.col(i + 1);
  }
  return EcgRecord(record.leads(), target_hz, std::move(out));
}

double heart_rate_from_rr(double rr_ms) {
  if (!(rr_ms > 0.0) || !std::isfinite(rr_ms)) {
    throw ValidationError("heart_rate_from_rr: rr_ms must be positive");
  }
  return 60000.0 / rr_ms;
}

void SyntheticEcgSpec::validate() const {
  auto fail = [](const std::string& what) { throw ValidationError("SyntheticEcgSpec: " + what); };
  if (!(heart_rate_bpm >= 30.0 && heart_rate_bpm <= 200.0)) fail("heart_rate_bpm outside [30, 200]");
  if (!(qrs_duration_ms >= 40.0 && qrs_duration_ms <= 200.0)) fail("qrs_duration_ms outside [40, 200]");
  if (!(rr_jitter_frac >= 0.0 && rr_jitter_frac <= 0.1)) fail("rr_jitter_frac outside [0, 0.1]");
  if (!(noise_std_mv >= 0.0) || !std::isfinite(noise_std_mv)) fail("noise_std_mv must be >= 0");
  if (!(baseline_wander_amp_mv >= 0.0) || !std::isfinite(baseline_wander_amp_mv)) {
    fail("baseline_wander_amp_mv must be >= 0");
  }
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) fail("duration_s must be > 0");
  if (!(sample_rate_hz > 0.0) || !std::isfinite(sample_rate_hz)) fail("sample_rate_hz must be > 0");
  if (lead_count != 8 && lead_count != 12) fail("lead_count must be 8 or 12");
  if (!(qrs_duration_ms < 60000.0 / heart_rate_bpm)) fail("QRS complex longer than the RR interval");
  if (std::round(duration_s * sample_rate_hz) < 1.0) fail("duration_s * sample_rate_hz < 1 sample");
}

std::pair<EcgRecord, EcgGroundTruth> generate_synthetic(const SyntheticEcgSpec& spec,
                                                        std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);

  const double fs = spec.sample_rate_hz;
  const auto n = static_cast<Eigen::Index>(std::round(spec.duration_s * fs));
  const double rr_ms = 60000.0 / spec.heart_rate_bpm;
  const double rr_s = rr_ms / 1000.0;

  // First R peak on the sample grid, well inside the first beat period.
  const double first = std::round(rng.uniform(0.2, 0.8) * rr_s * fs) / fs;
  auto jittered = [&] { return rr_s * rng.uniform(1.0 - spec.rr_jitter_frac, 1.0 + spec.rr_jitter_frac); };
  std::vector<double> peaks{first};
  // One beat before the window so its T wave leaks in like a real recording.
  peaks.insert(peaks.begin(), first - jittered());
  while (peaks.back() < spec.duration_s + rr_s) peaks.push_back(peaks.back() + jittered());

  const double qrs_sigma = spec.qrs_duration_ms / 1000.0 / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
  struct Bump {
    double amplitude, offset, sigma;
  };
  const std::array<Bump, 3> bumps{Bump{0.15, -0.18 * rr_s, 0.025 * rr_s},
                                  Bump{1.00, 0.0, qrs_sigma},
                                  Bump{0.30, 0.32 * rr_s, 0.05 * rr_s}};

  Eigen::RowVectorXd source = Eigen::RowVectorXd::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) / fs;
    double v = 0.0;
    for (double peak : peaks) {
      for (const Bump& b : bumps) {
        const double z = (t - peak - b.offset) / b.sigma;
        if (std::abs(z) < 12.0) v += b.amplitude * std::exp(-0.5 * z * z);
      }
    }
    source[k] = v;
  }

  const double wander_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  EcgRecord::Samples samples(8, n);
  for (Eigen::Index l = 0; l < 8; ++l) {
    samples.row(l) = kSyntheticLeadGains[static_cast<std::size_t>(l)] * source;
  }
  if (spec.baseline_wander_amp_mv > 0.0) {
    for (Eigen::Index k = 0; k < n; ++k) {
      const double t = static_cast<double>(k) / fs;
      samples.col(k).array() +=
          spec.baseline_wander_amp_mv * std::sin(2.0 * std::numbers::pi * 0.3 * t + wander_phase);
    }
  }
  if (spec.noise_std_mv > 0.0) {
    for (Eigen::Index l = 0; l < 8; ++l) {
      for (Eigen::Index k = 0; k < n; ++k) samples(l, k) += spec.noise_std_mv * rng.normal();
    }
  }

  EcgRecord record(std::vector<Lead>(kEightLeads.begin(), kEightLeads.end()), fs, std::move(samples));
  if (spec.lead_count == 12) record = derive_full_leads(record);

  EcgGroundTruth truth;
  truth.heart_rate_bpm = spec.heart_rate_bpm;
  truth.qrs_duration_ms = spec.qrs_duration_ms;
  truth.rr_interval_ms = rr_ms;
  truth.class_label = spec.heart_rate_bpm < kClassBoundaryBpm ? 0 : 1;
  return {std::move(record), truth};
}

}  // namespace ecgjepa
