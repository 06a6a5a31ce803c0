// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "doctest.h"
#include "ecgjepa/corpus.hpp"
#include "ecgjepa/ecg.hpp"
#include "ecgjepa/ecgb.hpp"
#include "ecgjepa/error.hpp"
#include "support.hpp"

using namespace ecgjepa;
using ecgjepa::testing::random_record8;

namespace {

EcgRecord two_sample_record(double lead_i, double lead_ii) {
  EcgRecord::Samples s = EcgRecord::Samples::Zero(8, 1);
  s(0, 0) = lead_i;
  s(1, 0) = lead_ii;
  return EcgRecord({kEightLeads.begin(), kEightLeads.end()}, 250.0, s);
}

double at(const EcgRecord& r, Lead lead, Eigen::Index k = 0) {
  return r.samples()(static_cast<Eigen::Index>(*r.row_of(lead)), k);
}

/// Amplitude of the DFT bin at `freq_hz`, evaluated directly.
double dft_amplitude(const Eigen::RowVectorXd& x, double rate, double freq_hz) {
  std::complex<double> acc = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    acc += x[k] * std::polar(1.0, -2.0 * std::numbers::pi * freq_hz * static_cast<double>(k) / rate);
  }
  return 2.0 * std::abs(acc) / static_cast<double>(x.size());
}

}  // namespace

TEST_CASE("derived limb leads at a single sample") {
  const auto full = derive_full_leads(two_sample_record(0.5, 1.0));
  CHECK(at(full, Lead::III) == doctest::Approx(0.5));
  CHECK(at(full, Lead::aVR) == doctest::Approx(-0.75));
  CHECK(at(full, Lead::aVL) == doctest::Approx(-0.25));
  CHECK(at(full, Lead::aVF) == doctest::Approx(0.25));
  CHECK(full.leads() == std::vector<Lead>(kTwelveLeads.begin(), kTwelveLeads.end()));
}

TEST_CASE("derived limb leads: zero and equal-limb cases") {
  const auto zero = derive_full_leads(two_sample_record(0.0, 0.0));
  for (Lead l : {Lead::III, Lead::aVR, Lead::aVL, Lead::aVF}) CHECK(at(zero, l) == 0.0);
  const auto equal = derive_full_leads(two_sample_record(0.7, 0.7));
  CHECK(at(equal, Lead::III) == 0.0);
  CHECK(at(equal, Lead::aVL) == 0.0);
  CHECK(at(equal, Lead::aVF) == 0.0);
  CHECK(at(equal, Lead::aVR) == doctest::Approx(-0.7));
}

TEST_CASE("derived limb leads: identities on random records, and reduce inverts derive") {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto r8 = random_record8(64, rng);
    const auto r12 = derive_full_leads(r8);
    for (Eigen::Index k = 0; k < 64; ++k) {
      const double i = at(r12, Lead::I, k), ii = at(r12, Lead::II, k);
      CHECK(std::abs(at(r12, Lead::III, k) - (ii - i)) <= 1e-12);
      CHECK(std::abs(at(r12, Lead::aVR, k) + (i + ii) / 2) <= 1e-12);
      CHECK(std::abs(at(r12, Lead::aVL, k) - (i - ii) / 2) <= 1e-12);
      CHECK(std::abs(at(r12, Lead::aVF, k) - (ii - i) / 2) <= 1e-12);
      CHECK(std::abs(at(r12, Lead::aVL, k) + at(r12, Lead::aVF, k)) <= 1e-12);
    }
    CHECK(reduce_to_8_leads(r12) == r8);
    CHECK(reduce_to_8_leads(r8) == r8);
  }
}

TEST_CASE("derive_full_leads names the missing lead") {
  Rng rng(1);
  const auto r = random_record8(10, rng);
  const std::array<Lead, 7> without_v3{Lead::I, Lead::II, Lead::V1, Lead::V2, Lead::V4, Lead::V5, Lead::V6};
  const auto partial = r.select(without_v3);
  try {
    derive_full_leads(partial);
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("V3") != std::string::npos);
  }
  CHECK_THROWS_AS(reduce_to_8_leads(partial), ValidationError);
}

TEST_CASE("EcgRecord rejects invariant violations") {
  EcgRecord::Samples s = EcgRecord::Samples::Zero(2, 4);
  CHECK_THROWS_AS(EcgRecord({Lead::I, Lead::I}, 250.0, s), ValidationError);
  CHECK_THROWS_AS(EcgRecord({Lead::I, Lead::II}, 0.0, s), ValidationError);
  CHECK_THROWS_AS(EcgRecord({Lead::I}, 250.0, s), ValidationError);
  s(1, 2) = std::nan("");
  CHECK_THROWS_AS(EcgRecord({Lead::I, Lead::II}, 250.0, s), ValidationError);
  CHECK_THROWS_AS(EcgRecord({Lead::I}, 250.0, EcgRecord::Samples(1, 0)), ValidationError);
}

TEST_CASE("resample: counts, identity, affine exactness") {
  Rng rng(2);
  EcgRecord::Samples s(8, 5000);
  for (Eigen::Index k = 0; k < 5000; ++k) s.col(k).setConstant(0.3 + 0.002 * static_cast<double>(k));
  const EcgRecord ramp({kEightLeads.begin(), kEightLeads.end()}, 500.0, s);
  const auto down = resample(ramp, 250.0);
  CHECK(down.sample_count() == 2500);
  CHECK(down.sample_rate_hz() == 250.0);
  for (Eigen::Index k = 0; k < 2500; ++k) {
    const double expected = 0.3 + 0.002 * (static_cast<double>(k) * 2.0);
    CHECK(std::abs(down.samples()(3, k) - expected) <= 1e-9 * std::abs(expected));
  }
  const auto up = resample(ramp, 333.0);
  CHECK(up.sample_count() == static_cast<std::size_t>(std::round(5000 * 333.0 / 500.0)));
  for (Eigen::Index k = 0; k < static_cast<Eigen::Index>(up.sample_count()); ++k) {
    const double expected = 0.3 + 0.002 * (static_cast<double>(k) * 500.0 / 333.0);
    CHECK(std::abs(up.samples()(0, k) - expected) <= 1e-9 * std::abs(expected));
  }
  const auto r = random_record8(100, rng);
  CHECK(resample(r, 250.0) == r);
  CHECK_THROWS_AS(resample(r, 0.0), ValidationError);
}

TEST_CASE("resample: a 5 Hz sinusoid keeps its frequency and amplitude") {
  EcgRecord::Samples s(1, 5000);
  for (Eigen::Index k = 0; k < 5000; ++k) s(0, k) = std::sin(2.0 * std::numbers::pi * 5.0 * static_cast<double>(k) / 500.0);
  const auto out = resample(EcgRecord({Lead::II}, 500.0, s), 250.0);
  const Eigen::RowVectorXd y = out.samples().row(0);
  // Bin spacing 0.1 Hz; the largest bin over 0..125 Hz must be 5 Hz.
  double best_amp = 0.0, best_freq = -1.0;
  for (int b = 1; b <= 1250; ++b) {
    const double a = dft_amplitude(y, 250.0, 0.1 * b);
    if (a > best_amp) best_amp = a, best_freq = 0.1 * b;
  }
  CHECK(best_freq == doctest::Approx(5.0));
  Eigen::RowVectorXd direct(y.size());
  for (Eigen::Index k = 0; k < y.size(); ++k) direct[k] = std::sin(2.0 * std::numbers::pi * 5.0 * static_cast<double>(k) / 250.0);
  const double reference = dft_amplitude(direct, 250.0, 5.0);
  CHECK(std::abs(best_amp - reference) <= 0.02 * reference);
}

TEST_CASE("heart rate from RR") {
  CHECK(heart_rate_from_rr(1000.0) == 60.0);
  CHECK(heart_rate_from_rr(500.0) == 120.0);
  CHECK(heart_rate_from_rr(857.06) == doctest::Approx(70.01).epsilon(1e-4));
  for (double hr : {31.0, 60.0, 70.01, 123.4, 199.0}) {
    CHECK(std::abs(heart_rate_from_rr(60000.0 / hr) - hr) <= 1e-12 * hr);
  }
  CHECK_THROWS_AS(heart_rate_from_rr(0.0), ValidationError);
  CHECK_THROWS_AS(heart_rate_from_rr(-5.0), ValidationError);
}

TEST_CASE("synthetic generator: periodic beats at 60 bpm") {
  SyntheticEcgSpec spec;
  spec.heart_rate_bpm = 60.0;
  const auto [rec, truth] = generate_synthetic(spec, 5);
  const Eigen::RowVectorXd ii = rec.samples().row(static_cast<Eigen::Index>(*rec.row_of(Lead::II)));
  std::vector<Eigen::Index> peaks;
  for (Eigen::Index k = 1; k + 1 < ii.size(); ++k) {
    if (ii[k] > 0.5 && ii[k] >= ii[k - 1] && ii[k] > ii[k + 1]) peaks.push_back(k);
  }
  CHECK(peaks.size() == 10);
  for (std::size_t i = 1; i < peaks.size(); ++i) CHECK(peaks[i] - peaks[i - 1] == 250);  // 1000 ms at 250 Hz
  CHECK(truth.rr_interval_ms == 1000.0);
  CHECK(truth.class_label == 0);
}

TEST_CASE("synthetic generator: measured QRS width matches the requested duration") {
  SyntheticEcgSpec spec;
  spec.heart_rate_bpm = 70.0;
  spec.qrs_duration_ms = 90.0;
  const auto [rec, truth] = generate_synthetic(spec, 9);
  const Eigen::RowVectorXd ii = rec.samples().row(1);
  Eigen::Index peak = 0;
  ii.segment(50, 250).maxCoeff(&peak);
  peak += 50;
  const double half = ii[peak] / 2.0;
  auto crossing = [&](int dir) {
    Eigen::Index k = peak;
    while (ii[k + dir] > half) k += dir;
    const double frac = (ii[k] - half) / (ii[k] - ii[k + dir]);
    return static_cast<double>(k) + dir * frac;
  };
  const double fwhm_ms = (crossing(+1) - crossing(-1)) * 1000.0 / 250.0;
  CHECK(std::abs(fwhm_ms - 90.0) <= 4.0);
  CHECK(truth.qrs_duration_ms == 90.0);
}

TEST_CASE("synthetic generator: determinism, labels, ground-truth consistency, parameter checks") {
  SyntheticEcgSpec spec;
  spec.heart_rate_bpm = 82.5;
  spec.rr_jitter_frac = 0.05;
  spec.noise_std_mv = 0.03;
  spec.baseline_wander_amp_mv = 0.1;
  const auto a = generate_synthetic(spec, 42);
  const auto b = generate_synthetic(spec, 42);
  CHECK(a.first == b.first);
  CHECK_FALSE(generate_synthetic(spec, 43).first == a.first);
  CHECK(a.second.class_label == 1);
  CHECK(std::abs(a.second.heart_rate_bpm * a.second.rr_interval_ms - 60000.0) <= 1e-9 * 60000.0);
  spec.lead_count = 12;
  const auto twelve = generate_synthetic(spec, 42).first;
  CHECK(twelve.lead_count() == 12);
  CHECK(reduce_to_8_leads(twelve) == a.first);

  SyntheticEcgSpec fast;
  fast.heart_rate_bpm = 200.0;  // RR 300 ms
  fast.qrs_duration_ms = 199.0;
  CHECK_NOTHROW(generate_synthetic(fast, 0));
  SyntheticEcgSpec wide = fast;
  wide.lead_count = 10;
  CHECK_THROWS_AS(generate_synthetic(wide, 0), ValidationError);
}

TEST_CASE("ECGB round trip is bit-exact for f32-representable samples") {
  Rng rng(3);
  auto r = random_record8(300, rng);
  EcgRecord::Samples s = r.samples().cast<float>().cast<double>();
  const EcgRecord rec(r.leads(), 250.0, s);
  const auto bytes = encode_ecgb(rec);
  CHECK(bytes.size() == 4 + 2 + 2 + 4 + 4 + 8 * 2 + 8 * 300 * 4);
  CHECK(decode_ecgb(bytes) == rec);
}

TEST_CASE("ECGB decode reports each corruption distinctly") {
  Rng rng(4);
  const auto bytes = encode_ecgb(random_record8(20, rng));
  auto kind_of = [](const std::vector<std::uint8_t>& b) {
    try {
      decode_ecgb(b);
    } catch (const FormatError& e) {
      return e.kind();
    }
    FAIL("expected a FormatError");
    return FormatError::Kind::Malformed;
  };
  auto magic = bytes;
  magic[0] = 'X';
  CHECK(kind_of(magic) == FormatError::Kind::BadMagic);
  auto version = bytes;
  version[4] = 0xe7;
  version[5] = 0x03;
  CHECK(kind_of(version) == FormatError::Kind::UnsupportedVersion);
  CHECK(kind_of({bytes.begin(), bytes.end() - 3}) == FormatError::Kind::Truncated);
  auto extra = bytes;
  extra.push_back(0);
  CHECK(kind_of(extra) == FormatError::Kind::Malformed);
  auto lead = bytes;
  lead[16] = 99;
  CHECK(kind_of(lead) == FormatError::Kind::Malformed);
}

TEST_CASE("synthetic corpus: counts, determinism, fixed heart rate") {
  SynthRanges ranges;
  ranges.heart_rate_bpm = {70.0, 70.0};
  const auto a = make_synthetic_corpus(6, ranges, 9);
  const auto b = make_synthetic_corpus(6, ranges, 9);
  REQUIRE(a.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(a[i].record == b[i].record);
    CHECK(a[i].labels == b[i].labels);
    CHECK(a[i].labels.at("heart_rate_bpm").get<double>() == 70.0);
  }

  const auto dir = std::filesystem::temp_directory_path() / "ecgjepa_test_corpus";
  std::filesystem::remove_all(dir);
  write_corpus(dir, a);
  const auto back = load_corpus(dir);
  REQUIRE(back.size() == a.size());
  std::size_t lines = 0;
  std::ifstream sidecar(dir / kLabelsFileName);
  for (std::string line; std::getline(sidecar, line);) lines += !line.empty();
  CHECK(lines == 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(back[i].name == a[i].name);
    CHECK(back[i].labels == a[i].labels);
    CHECK(back[i].record.samples().isApprox(a[i].record.samples(), 1e-6));
  }
  std::filesystem::remove_all(dir);
}

TEST_CASE("CSV conversion: resample, reduce, keep12 and lead validation") {
  const auto dir = std::filesystem::temp_directory_path() / "ecgjepa_test_convert";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  const std::array<Lead, 12> csv_order{Lead::I,  Lead::II, Lead::III, Lead::aVR, Lead::aVL, Lead::aVF,
                                       Lead::V1, Lead::V2, Lead::V3,  Lead::V4,  Lead::V5,  Lead::V6};
  {
    std::ofstream csv(dir / "r12.csv");
    for (std::size_t j = 0; j < csv_order.size(); ++j) csv << (j ? "," : "") << lead_name(csv_order[j]);
    csv << "\n";
    for (int k = 0; k < 1000; ++k) {
      for (std::size_t j = 0; j < csv_order.size(); ++j) csv << (j ? "," : "") << 0.001 * k * (j + 1);
      csv << "\n";
    }
    std::ofstream csv8(dir / "r8.csv");
    csv8 << "I,II,V1,V2,V3,V4,V5,V6\n";
    for (int k = 0; k < 500; ++k) csv8 << "0.1,0.3,0,0,0,0,0," << k * 0.01 << "\n";
    std::ofstream bad(dir / "noII.csv");
    bad << "I,V1,V2,V3,V4,V5,V6\n";
    for (int k = 0; k < 10; ++k) bad << "0,0,0,0,0,0,0\n";
  }
  {
    std::ofstream m(dir / "manifest.json");
    m << R"({"records":[{"file":"r12.csv","sample_rate_hz":500,"labels":{"class_label":1}},)"
      << R"({"file":"r8.csv","sample_rate_hz":250,"labels":{"class_label":0}}]})";
    std::ofstream m2(dir / "bad.json");
    m2 << R"({"records":[{"file":"noII.csv","sample_rate_hz":250,"labels":{}}]})";
  }
  const auto c8 = convert_corpus(dir / "manifest.json", false);
  REQUIRE(c8.size() == 2);
  CHECK(c8[0].record.sample_count() == 500);
  CHECK(c8[0].record.sample_rate_hz() == 250.0);
  CHECK(c8[0].record.leads() == std::vector<Lead>(kEightLeads.begin(), kEightLeads.end()));
  CHECK(c8[0].labels.at("class_label") == 1);
  const auto c12 = convert_corpus(dir / "manifest.json", true);
  CHECK(c12[1].record.lead_count() == 12);
  CHECK(at(c12[1].record, Lead::III) == doctest::Approx(0.2));
  CHECK(at(c12[1].record, Lead::aVR) == doctest::Approx(-0.2));
  try {
    convert_corpus(dir / "bad.json", false);
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("II") != std::string::npos);
  }
  {
    std::ofstream broken(dir / "broken.csv");
    broken << "I,II,V1,V2,V3,V4,V5,V6\n0,0,0,0,0,0,0,0\n0,0,zz,0,0,0,0,0\n";
  }
  try {
    parse_record_csv(dir / "broken.csv", 250.0);
    FAIL("expected rejection");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(":3") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
}
