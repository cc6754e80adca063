#include "tdl/features.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tdl/common.hpp"

namespace tdl::features {

const std::array<std::string_view, kNumFeatures>& feature_names() {
  static const std::array<std::string_view, kNumFeatures> names{
      // morphology
      "rise_time_ms", "fall_time_ms", "pulse_duration_ms", "rise_fall_ratio",
      "width25_ms", "width50_ms", "width75_ms", "systolic_amplitude",
      "area_total", "area_systolic", "area_diastolic", "area_ratio",
      "d1_max", "d1_max_time_ms", "d1_min", "d1_min_time_ms",
      "d2_max", "d2_max_time_ms", "d2_min", "d2_min_time_ms",
      "upslope_mean", "downslope_mean", "upslope_std", "augmentation_index",
      "beat_skewness", "beat_kurtosis", "width50_std", "amplitude_std",
      // HRV
      "sdnn_ms", "rmssd_ms", "pnn50_pct", "ibi_median_ms", "ibi_range_ms",
      // heart rate
      "mean_hr_bpm",
  };
  return names;
}

namespace {

std::vector<double> rolling_median(std::span<const double> x, std::size_t window) {
  const std::size_t half = window / 2;
  std::vector<double> out(x.size());
  std::vector<double> buf;
  for (std::size_t i = 0; i < x.size(); ++i) {
    std::size_t lo = i >= half ? i - half : 0;
    std::size_t hi = std::min(x.size(), i + half + 1);
    buf.assign(x.begin() + static_cast<std::ptrdiff_t>(lo), x.begin() + static_cast<std::ptrdiff_t>(hi));
    out[i] = lower_median(buf);
  }
  return out;
}

double population_std(std::span<const double> v) {
  if (v.empty()) return 0.0;
  double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

// Shortest lag in the 40-180 BPM range whose autocorrelation is within 80% of the best one.
std::size_t dominant_period(std::span<const double> x, double fs) {
  const auto lo = static_cast<std::size_t>(std::floor(fs * 60.0 / 180.0));
  const auto hi = std::min(x.size() / 2, static_cast<std::size_t>(std::ceil(fs * 60.0 / 40.0)));
  if (lo < 1 || hi <= lo) return 0;
  std::vector<double> r(hi + 1, 0.0);
  double best = 0.0;
  for (std::size_t lag = lo; lag <= hi; ++lag) {
    r[lag] = signal::normalized_autocorrelation(x, lag);
    best = std::max(best, r[lag]);
  }
  if (!(best > 0.0)) return 0;
  for (std::size_t lag = lo; lag <= hi; ++lag) {
    bool local_max = (lag == lo || r[lag] >= r[lag - 1]) && (lag == hi || r[lag] >= r[lag + 1]);
    if (local_max && r[lag] >= 0.8 * best) return lag;
  }
  return 0;
}

}  // namespace

std::optional<BeatSequence> detect_beats(const signal::Segment& segment) {
  const auto& x = segment.samples;
  const double fs = segment.sample_rate_hz;
  if (x.size() < 3) return std::nullopt;

  const double sd = population_std(x);
  if (sd < 1e-12) return std::nullopt;
  std::size_t window = static_cast<std::size_t>(std::llround(1.5 * fs)) | 1U;
  const auto baseline = rolling_median(x, window);

  std::vector<std::size_t> candidates;
  for (std::size_t i = 1; i + 1 < x.size(); ++i) {
    if (x[i] > x[i - 1] && x[i] >= x[i + 1] && x[i] > baseline[i] + 0.3 * sd) candidates.push_back(i);
  }

  // Greedy by height: keep the tallest peaks, suppressing neighbours closer than
  // 0.6 of the dominant period (never closer than the 180 BPM spacing), so a
  // dicrotic wave at slow rates is not taken for a beat.
  const auto min_distance = std::max(static_cast<std::size_t>(std::floor(fs * 60.0 / 180.0)),
                                     static_cast<std::size_t>(std::floor(0.6 * static_cast<double>(dominant_period(x, fs)))));
  std::vector<std::size_t> by_height = candidates;
  std::stable_sort(by_height.begin(), by_height.end(), [&](std::size_t a, std::size_t b) { return x[a] > x[b]; });
  std::vector<std::size_t> kept;
  for (std::size_t c : by_height) {
    bool clear = std::none_of(kept.begin(), kept.end(), [&](std::size_t k) {
      std::size_t d = c > k ? c - k : k - c;
      return d < min_distance;
    });
    if (clear) kept.push_back(c);
  }
  std::sort(kept.begin(), kept.end());
  if (kept.size() < 3) return std::nullopt;

  BeatSequence beats;
  beats.sample_rate_hz = fs;
  beats.peak_indices = kept;
  for (std::size_t k = 0; k + 1 < kept.size(); ++k) {
    auto first = x.begin() + static_cast<std::ptrdiff_t>(kept[k] + 1);
    auto last = x.begin() + static_cast<std::ptrdiff_t>(kept[k + 1]);
    std::size_t foot = kept[k] + 1;
    if (first < last) foot = static_cast<std::size_t>(std::min_element(first, last) - x.begin());
    beats.foot_indices.push_back(foot);
    double ibi = static_cast<double>(kept[k + 1] - kept[k]) * 1000.0 / fs;
    if (ibi >= kMinIbiMs && ibi <= kMaxIbiMs) beats.inter_beat_intervals_ms.push_back(ibi);
  }
  return beats;
}

namespace {

struct BeatDescriptors {
  std::array<double, 26> averaged{};  // morphology entries 0..25
  double width50_ms = 0.0;
  double amplitude = 0.0;
};

// Time (samples, fractional) where the rising edge first reaches `level`, scanning back from the peak.
double rising_crossing(const std::vector<double>& x, std::size_t a, std::size_t p, double level) {
  for (std::size_t i = p; i > a; --i) {
    if (x[i - 1] <= level && x[i] >= level) {
      double span = x[i] - x[i - 1];
      return static_cast<double>(i - 1) + (span > 0 ? (level - x[i - 1]) / span : 0.0);
    }
  }
  return static_cast<double>(a);
}

double falling_crossing(const std::vector<double>& x, std::size_t p, std::size_t b, double level) {
  for (std::size_t i = p; i < b; ++i) {
    if (x[i] >= level && x[i + 1] <= level) {
      double span = x[i] - x[i + 1];
      return static_cast<double>(i) + (span > 0 ? (x[i] - level) / span : 0.0);
    }
  }
  return static_cast<double>(b);
}

BeatDescriptors describe_beat(const std::vector<double>& x, double fs, std::size_t a, std::size_t p, std::size_t b) {
  const double dt = 1.0 / fs;
  const double ms = 1000.0 / fs;
  BeatDescriptors d;
  auto& f = d.averaged;

  const double amp = x[p] - x[a];
  const double rise = static_cast<double>(p - a);
  const double fall = static_cast<double>(b - p);
  f[0] = rise * ms;
  f[1] = fall * ms;
  f[2] = static_cast<double>(b - a) * ms;
  f[3] = rise / fall;

  const double widths[3] = {0.25, 0.5, 0.75};
  for (int k = 0; k < 3; ++k) {
    double level = x[a] + widths[k] * amp;
    f[4 + k] = (falling_crossing(x, p, b, level) - rising_crossing(x, a, p, level)) * ms;
  }
  f[7] = amp;

  // Areas above the straight line joining the two feet.
  auto base = [&](std::size_t i) {
    return x[a] + (x[b] - x[a]) * static_cast<double>(i - a) / static_cast<double>(b - a);
  };
  double sys = 0.0, dia = 0.0;
  for (std::size_t i = a; i <= b; ++i) {
    double h = (x[i] - base(i)) * dt;
    if (i < p) {
      sys += h;
    } else {
      dia += h;
    }
  }
  f[8] = sys + dia;
  f[9] = sys;
  f[10] = dia;
  f[11] = std::abs(sys) > 1e-12 ? dia / sys : 0.0;

  // Central differences on the beat interior (feet are never segment endpoints).
  double d1_max = -std::numeric_limits<double>::infinity(), d1_min = std::numeric_limits<double>::infinity();
  double d2_max = d1_max, d2_min = d1_min;
  std::size_t t1_max = a, t1_min = a, t2_max = a, t2_min = a;
  std::vector<double> rise_slopes;
  std::size_t lo = std::max<std::size_t>(a, 1);
  std::size_t hi = std::min(b, x.size() - 2);
  std::optional<std::size_t> shoulder;
  double prev_d2 = 0.0;
  for (std::size_t i = lo; i <= hi; ++i) {
    double d1 = (x[i + 1] - x[i - 1]) * fs / 2.0;
    double d2 = (x[i + 1] - 2.0 * x[i] + x[i - 1]) * fs * fs;
    if (d1 > d1_max) { d1_max = d1; t1_max = i; }
    if (d1 < d1_min) { d1_min = d1; t1_min = i; }
    if (d2 > d2_max) { d2_max = d2; t2_max = i; }
    if (d2 < d2_min) { d2_min = d2; t2_min = i; }
    if (i > a && i <= p) rise_slopes.push_back(d1);
    if (i > p + 1 && i < b && !shoulder && prev_d2 < 0.0 && d2 >= 0.0) shoulder = i;
    prev_d2 = d2;
  }
  if (!std::isfinite(d1_max)) d1_max = d1_min = d2_max = d2_min = 0.0;
  f[12] = d1_max;
  f[13] = static_cast<double>(t1_max - a) * ms;
  f[14] = d1_min;
  f[15] = static_cast<double>(t1_min - a) * ms;
  f[16] = d2_max;
  f[17] = static_cast<double>(t2_max - a) * ms;
  f[18] = d2_min;
  f[19] = static_cast<double>(t2_min - a) * ms;

  f[20] = amp / (rise * dt);
  f[21] = (x[b] - x[p]) / (fall * dt);
  f[22] = population_std(rise_slopes);

  // Late-systolic shoulder: first concave-to-convex inflection after the peak.
  std::size_t s = shoulder ? *shoulder : (p + b) / 2;
  f[23] = amp > 1e-12 ? (x[s] - x[a]) / amp : 0.0;

  std::span<const double> beat(x.data() + a, b - a + 1);
  f[24] = signal::skewness(beat);
  f[25] = signal::excess_kurtosis(beat);

  d.width50_ms = f[5];
  d.amplitude = amp;
  return d;
}

}  // namespace

MorphologyVector morphology_features(const signal::Segment& segment, const BeatSequence& beats) {
  if (beats.peak_indices.size() < 3 || beats.foot_indices.size() + 1 != beats.peak_indices.size()) {
    throw Error(ErrorKind::InvalidArgument, "morphology_features: needs at least 3 peaks with feet between them");
  }
  const auto& x = segment.samples;
  std::vector<BeatDescriptors> per_beat;
  for (std::size_t k = 0; k + 1 < beats.foot_indices.size(); ++k) {
    std::size_t a = beats.foot_indices[k];
    std::size_t b = beats.foot_indices[k + 1];
    std::size_t p = beats.peak_indices[k + 1];
    if (!(a < p && p < b)) continue;
    per_beat.push_back(describe_beat(x, segment.sample_rate_hz, a, p, b));
  }
  MorphologyVector out{};
  if (per_beat.empty()) return out;
  const double n = static_cast<double>(per_beat.size());
  for (std::size_t j = 0; j < 26; ++j) {
    double acc = 0.0;
    for (const auto& d : per_beat) acc += d.averaged[j];
    out[j] = acc / n;
  }
  std::vector<double> widths, amps;
  for (const auto& d : per_beat) {
    widths.push_back(d.width50_ms);
    amps.push_back(d.amplitude);
  }
  out[26] = population_std(widths);
  out[27] = population_std(amps);
  return out;
}

HrvVector hrv_features(std::span<const double> ibis) {
  if (ibis.size() < kMinIbisForFeatures) {
    throw Error(ErrorKind::InvalidArgument, "hrv_features: needs at least 3 inter-beat intervals");
  }
  const double n = static_cast<double>(ibis.size());
  double mean = std::accumulate(ibis.begin(), ibis.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : ibis) ss += (v - mean) * (v - mean);
  double sdnn = std::sqrt(ss / (n - 1.0));

  double sq = 0.0;
  std::size_t over50 = 0;
  for (std::size_t i = 1; i < ibis.size(); ++i) {
    double d = ibis[i] - ibis[i - 1];
    sq += d * d;
    if (std::abs(d) > 50.0) ++over50;
  }
  const double diffs = n - 1.0;
  double rmssd = std::sqrt(sq / diffs);
  double pnn50 = 100.0 * static_cast<double>(over50) / diffs;

  std::vector<double> sorted(ibis.begin(), ibis.end());
  std::sort(sorted.begin(), sorted.end());
  std::size_t m = sorted.size() / 2;
  double median = sorted.size() % 2 ? sorted[m] : 0.5 * (sorted[m - 1] + sorted[m]);
  return {sdnn, rmssd, pnn50, median, sorted.back() - sorted.front()};
}

double mean_hr(std::span<const double> ibis) {
  if (ibis.empty()) throw Error(ErrorKind::InvalidArgument, "mean_hr: no inter-beat intervals");
  double mean = std::accumulate(ibis.begin(), ibis.end(), 0.0) / static_cast<double>(ibis.size());
  return 60000.0 / mean;
}

FeatureVector failed_features() {
  FeatureVector v;
  v.fill(std::numeric_limits<double>::quiet_NaN());
  return v;
}

bool is_finite(const FeatureVector& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

std::optional<FeatureVector> extract_features(const signal::Segment& segment) {
  auto beats = detect_beats(segment);
  if (!beats || beats->inter_beat_intervals_ms.size() < kMinIbisForFeatures) return std::nullopt;
  FeatureVector out{};
  auto morph = morphology_features(segment, *beats);
  auto hrv = hrv_features(*beats);
  std::copy(morph.begin(), morph.end(), out.begin());
  std::copy(hrv.begin(), hrv.end(), out.begin() + kNumMorphology);
  out[kNumFeatures - 1] = mean_hr(*beats);
  if (!is_finite(out)) return std::nullopt;
  return out;
}

Imputer Imputer::fit(std::span<const FeatureVector> rows) {
  FeatureVector medians{};
  std::vector<double> column;
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    column.clear();
    for (const auto& r : rows) {
      if (is_finite(r)) column.push_back(r[j]);
    }
    if (column.empty()) {
      medians[j] = 0.0;
      continue;
    }
    std::sort(column.begin(), column.end());
    std::size_t m = column.size() / 2;
    medians[j] = column.size() % 2 ? column[m] : 0.5 * (column[m - 1] + column[m]);
  }
  return Imputer(medians);
}

FeatureVector Imputer::apply(const std::optional<FeatureVector>& raw) const {
  if (!raw) return medians_;
  FeatureVector out = *raw;
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    if (!std::isfinite(out[j])) out[j] = medians_[j];
  }
  return out;
}

FeatureVector featurize(const signal::Segment& segment, const Imputer& imputer) {
  return imputer.apply(extract_features(segment));
}

}  // namespace tdl::features
