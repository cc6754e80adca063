#include <doctest.h>

#include <cmath>

#include "support.hpp"
#include "tdl/features.hpp"
#include "tdl/synth.hpp"

using namespace tdl;
using namespace tdl::features;
using test_support::make_segment;

namespace {

signal::Segment prepared(double bpm, double seconds = 10.0, double amplitude = 1.0, std::uint64_t seed = 1,
                         synth::PulseShape shape = {}) {
  synth::WaveformConfig cfg;
  cfg.heart_rate_bpm = bpm;
  cfg.seed = seed;
  cfg.pulse = shape;
  cfg.pulse.systolic_amplitude *= amplitude;
  cfg.pulse.dicrotic_amplitude *= amplitude;
  auto raw = synth::gen_waveform(cfg, seconds);
  auto seg = make_segment(raw.samples);
  return signal::zscore(signal::bandpass(seg));
}

// Pairwise-difference variance, counted median and direct successive differences.
HrvVector hrv_oracle(const std::vector<double>& ibi) {
  const std::size_t n = ibi.size();
  double pair = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) pair += (ibi[i] - ibi[j]) * (ibi[i] - ibi[j]);
  double sdnn = std::sqrt(pair / static_cast<double>(n * (n - 1)));
  double sq = 0.0;
  int big = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    double d = ibi[i + 1] - ibi[i];
    sq += d * d;
    if (d > 50.0 || d < -50.0) ++big;
  }
  double lo = ibi[0], hi = ibi[0];
  for (double v : ibi) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // Median: the value(s) with at most n/2 strictly below and above.
  std::vector<double> mids;
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t below = 0, equal_before = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (ibi[j] < ibi[i]) ++below;
      if (ibi[j] == ibi[i] && j < i) ++equal_before;
    }
    std::size_t rank = below + equal_before;
    if (rank == (n - 1) / 2 || rank == n / 2) mids.push_back(ibi[i]);
  }
  double median = mids.size() == 1 ? mids[0] : 0.5 * (mids[0] + mids[1]);
  return {sdnn, std::sqrt(sq / static_cast<double>(n - 1)), 100.0 * big / static_cast<double>(n - 1), median, hi - lo};
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("feature table shape") {
    CHECK(kNumFeatures == 34);
    CHECK(feature_names().size() == 34);
    CHECK(feature_names()[0] == "rise_time_ms");
    CHECK(feature_names()[28] == "sdnn_ms");
    CHECK(feature_names()[33] == "mean_hr_bpm");
  }

  TEST_CASE("60 BPM for 10 s gives about ten peaks") {
    auto beats = detect_beats(prepared(60.0));
    REQUIRE(beats.has_value());
    CHECK(beats->peak_indices.size() >= 9);
    CHECK(beats->peak_indices.size() <= 11);
    CHECK(beats->foot_indices.size() == beats->peak_indices.size() - 1);
  }

  TEST_CASE("peak spacing follows the heart rate") {
    auto beats = detect_beats(prepared(90.0));
    REQUIRE(beats.has_value());
    for (double ibi : beats->inter_beat_intervals_ms) CHECK(ibi == doctest::Approx(666.7).epsilon(0.07));
  }

  TEST_CASE("constant signal fails detection") {
    CHECK_FALSE(detect_beats(make_segment(std::vector<double>(250, 0.0))).has_value());
    CHECK_FALSE(extract_features(make_segment(std::vector<double>(250, 0.0))).has_value());
  }

  TEST_CASE("60 BPM over 60 s recovers 60 +- 2 beats per minute") {
    synth::WaveformConfig cfg;
    auto raw = synth::gen_waveform(cfg, 60.0);
    std::size_t peaks = 0;
    for (const auto& seg : signal::segment_stream(raw)) {
      auto b = detect_beats(signal::zscore(signal::bandpass(seg)));
      REQUIRE(b.has_value());
      peaks += b->peak_indices.size();
    }
    CHECK(peaks >= 58);
    CHECK(peaks <= 62);
  }

  TEST_CASE("symmetric pulse has matching rise and fall") {
    synth::PulseShape shape;
    shape.dicrotic_amplitude = 0.0;
    shape.systolic_center = 0.5;
    shape.systolic_width = 0.12;
    auto seg = prepared(60.0, 10.0, 1.0, 1, shape);
    auto beats = detect_beats(seg);
    REQUIRE(beats.has_value());
    auto m = morphology_features(seg, *beats);
    double ratio = m[0] / m[1];
    CHECK(ratio >= 0.8);
    CHECK(ratio <= 1.25);
  }

  TEST_CASE("amplitude scaling leaves features unchanged") {
    auto a = extract_features(prepared(72.0, 10.0, 1.0, 3));
    auto b = extract_features(prepared(72.0, 10.0, 2.0, 3));
    REQUIRE(a.has_value());
    REQUIRE(b.has_value());
    for (std::size_t j = 0; j < kNumFeatures; ++j) CHECK((*a)[j] == doctest::Approx((*b)[j]).epsilon(1e-9).scale(1.0));
  }

  TEST_CASE("valid segments give finite vectors with positive amplitude") {
    for (double bpm : {50.0, 65.0, 80.0, 110.0}) {
      auto f = extract_features(prepared(bpm, 10.0, 1.0, 7));
      REQUIRE(f.has_value());
      CHECK(is_finite(*f));
      CHECK((*f)[7] > 0.0);
      CHECK((*f)[33] == doctest::Approx(bpm).epsilon(0.1));
    }
  }

  TEST_CASE("identical segments give identical vectors") {
    auto a = extract_features(prepared(70.0));
    auto b = extract_features(prepared(70.0));
    REQUIRE(a.has_value());
    CHECK(*a == *b);
  }

  TEST_CASE("periodic beats have no variability") {
    std::vector<double> ibi(8, 900.0);
    auto h = hrv_features(ibi);
    CHECK(h[0] == 0.0);
    CHECK(h[1] == 0.0);
    CHECK(h[2] == 0.0);
  }

  TEST_CASE("RMSSD of 800, 860, 800") {
    std::vector<double> ibi{800, 860, 800};
    CHECK(hrv_features(ibi)[1] == doctest::Approx(60.0).epsilon(1e-12));
  }

  TEST_CASE("mean heart rate") {
    CHECK(mean_hr(std::vector<double>{1000, 1000, 1000}) == doctest::Approx(60.0));
    CHECK(mean_hr(std::vector<double>{500, 500, 500}) == doctest::Approx(120.0));
    CHECK(mean_hr(std::vector<double>{600, 1000}) == doctest::Approx(75.0));
  }

  TEST_CASE("HRV matches a brute-force recomputation") {
    Rng rng(31);
    for (int t = 0; t < 500; ++t) {
      std::vector<double> ibi(3 + rng.below(30));
      for (auto& v : ibi) v = std::round(rng.uniform(kMinIbiMs, kMaxIbiMs));
      auto got = hrv_features(ibi);
      auto want = hrv_oracle(ibi);
      for (std::size_t j = 0; j < kNumHrv; ++j) CHECK(std::abs(got[j] - want[j]) <= 1e-9 * std::max(1.0, std::abs(want[j])));
    }
  }

  TEST_CASE("HRV from detected beats matches the oracle") {
    synth::WaveformConfig cfg;
    cfg.hrv_std_ms = 40.0;
    cfg.heart_rate_bpm = 70.0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      cfg.seed = seed;
      auto raw = synth::gen_waveform(cfg, 10.0);
      auto beats = detect_beats(signal::zscore(signal::bandpass(make_segment(raw.samples))));
      REQUIRE(beats.has_value());
      if (beats->inter_beat_intervals_ms.size() < 3) continue;
      auto got = hrv_features(*beats);
      auto want = hrv_oracle(beats->inter_beat_intervals_ms);
      for (std::size_t j = 0; j < kNumHrv; ++j) CHECK(std::abs(got[j] - want[j]) <= 1e-9 * std::max(1.0, std::abs(want[j])));
    }
  }

  TEST_CASE("imputer falls back to training medians") {
    std::vector<FeatureVector> rows(3);
    for (std::size_t i = 0; i < 3; ++i) rows[i].fill(static_cast<double>(i + 1));
    rows.push_back(failed_features());
    auto imp = Imputer::fit(rows);
    for (double v : imp.medians()) CHECK(v == 2.0);
    CHECK(imp.apply(std::nullopt) == imp.medians());
    auto partial = rows[0];
    partial[5] = std::nan("");
    auto fixed = imp.apply(partial);
    CHECK(fixed[5] == 2.0);
    CHECK(fixed[4] == 1.0);
    CHECK(featurize(make_segment(std::vector<double>(250, 1.0)), imp) == imp.medians());
  }
}
