#include <doctest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"
#include "tdl/signal.hpp"
#include "tdl/synth.hpp"

using namespace tdl;
using namespace tdl::signal;
using test_support::make_segment;

namespace {

std::vector<double> sine(double freq_hz, double fs, std::size_t n, double amp = 1.0) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2.0 * std::numbers::pi * freq_hz * static_cast<double>(i) / fs);
  return x;
}

double rms(std::span<const double> x, std::size_t from, std::size_t to) {
  double s = 0.0;
  for (std::size_t i = from; i < to; ++i) s += x[i] * x[i];
  return std::sqrt(s / static_cast<double>(to - from));
}

RawPpgStream stream_of(std::size_t n, double start = 0.0) {
  RawPpgStream s;
  s.subject_id = "p";
  s.start_timestamp = start;
  s.samples.assign(n, 0.0);
  return s;
}

// Clean 10 s pulse train from the generator.
Segment clean_pulse(double bpm = 60.0, std::uint64_t seed = 1) {
  synth::WaveformConfig cfg;
  cfg.heart_rate_bpm = bpm;
  cfg.seed = seed;
  auto raw = synth::gen_waveform(cfg, 10.0);
  return make_segment(raw.samples);
}

}  // namespace

TEST_SUITE("signal") {
  TEST_CASE("segment counts and timestamps") {
    CHECK(segment_length(25.0) == 250);
    CHECK(segment_stream(stream_of(1000)).size() == 4);
    CHECK(segment_stream(stream_of(999)).size() == 3);
    CHECK(segment_stream(stream_of(249)).empty());
    auto segs = segment_stream(stream_of(1000, 0.0));
    CHECK(segs[0].meta.median_timestamp == 5.0);
    CHECK(segs[1].meta.median_timestamp == 15.0);
    CHECK(segs[0].samples.size() == 250);
    CHECK(segs[0].meta.subject_id == "p");
  }

  TEST_CASE("segment ids are unique across streams") {
    auto a = segment_stream(stream_of(500, 100.0));
    auto b = segment_stream(stream_of(500, 200.0));
    CHECK(a[0].meta.segment_id != b[0].meta.segment_id);
    CHECK(a[0].meta.segment_id != a[1].meta.segment_id);
  }

  TEST_CASE("sqi separates clean pulses from noise") {
    auto clean = sqi(clean_pulse());
    CHECK(clean.pass);
    Rng rng(8);
    std::vector<double> noise(250);
    for (auto& v : noise) v = rng.normal();
    auto bad = sqi(make_segment(noise));
    CHECK(bad.value < clean.value);
    auto flat = sqi(make_segment(std::vector<double>(250, 3.0)));
    CHECK(flat.value == 0.0);
    CHECK_FALSE(flat.pass);
  }

  TEST_CASE("sqi passes every zero-noise waveform") {
    for (double bpm : {45.0, 60.0, 75.0, 90.0, 120.0, 150.0}) {
      for (std::uint64_t seed = 0; seed < 5; ++seed) CHECK(sqi(clean_pulse(bpm, seed)).pass);
    }
  }

  TEST_CASE("moments and autocorrelation") {
    std::vector<double> sym{-1, 0, 1};
    CHECK(skewness(sym) == doctest::Approx(0.0));
    std::vector<double> two{-1, 1, -1, 1};
    CHECK(excess_kurtosis(two) == doctest::Approx(-2.0));
    CHECK(normalized_autocorrelation(two, 2) == doctest::Approx(1.0));
    CHECK(normalized_autocorrelation(two, 1) == doctest::Approx(-1.0));
  }

  TEST_CASE("band-pass frequency response matches a reference design") {
    auto f = butterworth_bandpass(4, 0.5, 5.0, 25.0);
    CHECK(f.order == 4);
    CHECK(f.sections.size() == 4);
    const std::vector<std::pair<double, double>> golden{
        {0.05, 6.948483469317217e-05}, {0.5, 0.707106781186538}, {1.0, 0.9998742589766423},
        {2.0, 0.9999999803862393},     {5.0, 0.7071067811865475}, {8.0, 0.03386731401340408}};
    for (auto [hz, mag] : golden) CHECK(std::abs(std::abs(f.response(hz, 25.0)) - mag) < 1e-9);
  }

  TEST_CASE("filtfilt matches a reference implementation") {
    auto f = butterworth_bandpass(4, 0.5, 5.0, 25.0);
    std::vector<double> x(250);
    for (std::size_t i = 0; i < x.size(); ++i) {
      double t = static_cast<double>(i);
      x[i] = std::sin(0.3 * t) + 0.5 * std::cos(1.1 * t) + 0.01 * t;
    }
    auto y = filtfilt(f, x, 12);
    const std::vector<std::pair<std::size_t, double>> golden{
        {0, 0.10326505844007014},  {1, -0.05557618980657224},  {17, -0.500690278678561},
        {100, -1.4102087076291423}, {248, -0.5001959506111988}, {249, -0.40827866762568704}};
    for (auto [i, v] : golden) CHECK(std::abs(y[i] - v) < 1e-9);
  }

  TEST_CASE("passband tone keeps its amplitude") {
    auto x = sine(2.0, 25.0, 250);
    auto y = bandpass(make_segment(x)).samples;
    double ratio_db = 20.0 * std::log10(rms(y, 50, 200) / rms(x, 50, 200));
    CHECK(std::abs(ratio_db) < 1.0);
  }

  TEST_CASE("slow drift is attenuated by at least 20 dB") {
    auto pass = bandpass(make_segment(sine(2.0, 25.0, 250))).samples;
    auto slow_in = sine(0.05, 25.0, 250);
    auto slow = bandpass(make_segment(slow_in)).samples;
    double db = 20.0 * std::log10(rms(pass, 50, 200) / rms(slow, 50, 200));
    CHECK(db >= 20.0);
  }

  TEST_CASE("zero in, zero out; linear") {
    auto zero = bandpass(make_segment(std::vector<double>(250, 0.0))).samples;
    for (double v : zero) CHECK(v == 0.0);
    Rng rng(4);
    std::vector<double> a(250), b(250), ab(250);
    for (std::size_t i = 0; i < 250; ++i) {
      a[i] = rng.normal();
      b[i] = rng.normal();
      ab[i] = 2.0 * a[i] - 3.0 * b[i];
    }
    auto fa = bandpass(make_segment(a)).samples;
    auto fb = bandpass(make_segment(b)).samples;
    auto fab = bandpass(make_segment(ab)).samples;
    for (std::size_t i = 0; i < 250; ++i) CHECK(std::abs(fab[i] - (2.0 * fa[i] - 3.0 * fb[i])) < 1e-9);
  }

  TEST_CASE("forward-backward filtering has no phase lag") {
    auto x = sine(1.5, 25.0, 500);
    auto y = bandpass(make_segment(x)).samples;
    // Correlation at lag 0 beats lags +-1.
    auto corr = [&](int lag) {
      double s = 0.0;
      for (int i = 100; i < 400; ++i) s += x[static_cast<std::size_t>(i)] * y[static_cast<std::size_t>(i + lag)];
      return s;
    };
    CHECK(corr(0) > corr(1));
    CHECK(corr(0) > corr(-1));
  }

  TEST_CASE("invalid band edges") {
    auto s = make_segment(sine(2.0, 25.0, 250));
    CHECK_THROWS_AS(bandpass(s, 5.0, 0.5), Error);
    CHECK_THROWS_AS(bandpass(s, 0.5, 13.0), Error);
    CHECK_THROWS_AS(bandpass(s, 0.0, 5.0), Error);
  }

  TEST_CASE("zscore") {
    std::vector<double> x{1, 2, 3};
    auto z = zscore(x);
    CHECK(z[0] + z[1] + z[2] == doctest::Approx(0.0));
    double var = (z[0] * z[0] + z[1] * z[1] + z[2] * z[2]) / 3.0;
    CHECK(var == doctest::Approx(1.0));
    for (double v : zscore(std::vector<double>(5, 2.0))) CHECK(v == 0.0);
  }

  TEST_CASE("preprocess counts") {
    synth::WaveformConfig cfg;
    auto raw = synth::gen_waveform(cfg, 40.0);
    PreprocessCounts counts;
    auto out = preprocess_stream(raw, 0.5, &counts);
    CHECK(counts.segments == 4);
    CHECK(counts.sqi_dropped == 0);
    CHECK(counts.retained == out.size());
    CHECK(out.size() == 4);
  }
}
