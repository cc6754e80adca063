#include "tdl/signal.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "tdl/common.hpp"
#include "tdl/kernels.hpp"

namespace tdl::signal {

std::size_t segment_length(double sample_rate_hz, double seg_seconds) {
  return static_cast<std::size_t>(std::llround(seg_seconds * sample_rate_hz));
}

std::vector<Segment> segment_stream(const RawPpgStream& stream, double seg_seconds) {
  if (!(stream.sample_rate_hz > 0.0)) throw Error(ErrorKind::InvalidArgument, "segment_stream: sample rate must be > 0");
  const std::size_t len = segment_length(stream.sample_rate_hz, seg_seconds);
  if (len == 0) throw Error(ErrorKind::InvalidArgument, "segment_stream: zero-length segments");
  const std::size_t count = stream.samples.size() / len;
  const std::string prefix = stream.subject_id + "-" + std::to_string(std::llround(stream.start_timestamp)) + "-";
  std::vector<Segment> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Segment s;
    s.meta.subject_id = stream.subject_id;
    s.meta.segment_id = prefix + std::to_string(i);
    s.meta.median_timestamp = stream.start_timestamp + (static_cast<double>(i) + 0.5) * seg_seconds;
    s.sample_rate_hz = stream.sample_rate_hz;
    s.samples.assign(stream.samples.begin() + static_cast<std::ptrdiff_t>(i * len),
                     stream.samples.begin() + static_cast<std::ptrdiff_t>((i + 1) * len));
    out.push_back(std::move(s));
  }
  return out;
}

namespace {

struct Moments {
  double mean = 0.0;
  double m2 = 0.0;  // population variance
};

Moments central_moments(std::span<const double> x) {
  Moments m;
  if (x.empty()) return m;
  const double n = static_cast<double>(x.size());
  m.mean = kernels::sum(x) / n;
  m.m2 = kernels::sum_sq_dev(x, m.mean) / n;
  return m;
}

}  // namespace

double skewness(std::span<const double> x) {
  Moments m = central_moments(x);
  if (m.m2 < 1e-24) return 0.0;
  double m3 = 0.0;
  for (double v : x) {
    double d = v - m.mean;
    m3 += d * d * d;
  }
  m3 /= static_cast<double>(x.size());
  return m3 / std::pow(m.m2, 1.5);
}

double excess_kurtosis(std::span<const double> x) {
  Moments m = central_moments(x);
  if (m.m2 < 1e-24) return 0.0;
  double m4 = 0.0;
  for (double v : x) {
    double d = v - m.mean;
    m4 += d * d * d * d;
  }
  m4 /= static_cast<double>(x.size());
  return m4 / (m.m2 * m.m2) - 3.0;
}

double normalized_autocorrelation(std::span<const double> x, std::size_t lag) {
  Moments m = central_moments(x);
  if (m.m2 < 1e-24 || lag >= x.size()) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i + lag < x.size(); ++i) acc += (x[i] - m.mean) * (x[i + lag] - m.mean);
  return acc / static_cast<double>(x.size() - lag) / m.m2;
}

QualityScore sqi(const Segment& segment, double threshold) {
  const auto& x = segment.samples;
  Moments m = central_moments(x);
  QualityScore q;
  if (x.size() < 3 || m.m2 < 1e-24) {
    q.value = 0.0;
    q.pass = false;
    return q;
  }
  double skew_score = std::clamp(skewness(x), 0.0, 2.0) / 2.0;

  // 180 BPM -> shortest lag, 40 BPM -> longest lag.
  const double fs = segment.sample_rate_hz;
  auto min_lag = static_cast<std::size_t>(std::max<long long>(1, std::llround(fs * 60.0 / 180.0)));
  auto max_lag = static_cast<std::size_t>(std::llround(fs * 60.0 / 40.0));
  max_lag = std::min(max_lag, x.size() - 1);
  double best = 0.0;
  for (std::size_t lag = min_lag; lag <= max_lag; ++lag) best = std::max(best, normalized_autocorrelation(x, lag));
  double ac_score = std::clamp(best, 0.0, 1.0);

  q.value = 0.5 * (skew_score + ac_score);
  q.pass = q.value >= threshold;
  return q;
}

std::complex<double> SosFilter::response(double freq_hz, double sample_rate_hz) const {
  const double w = 2.0 * std::numbers::pi * freq_hz / sample_rate_hz;
  const std::complex<double> z1 = std::polar(1.0, -w);  // z^-1
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h = 1.0;
  for (const auto& s : sections) h *= (s.b0 + s.b1 * z1 + s.b2 * z2) / (1.0 + s.a1 * z1 + s.a2 * z2);
  return h;
}

SosFilter butterworth_bandpass(std::size_t order, double low_hz, double high_hz, double sample_rate_hz) {
  using cd = std::complex<double>;
  if (order == 0 || order % 2 != 0) throw Error(ErrorKind::InvalidArgument, "butterworth_bandpass: order must be even");
  if (!(low_hz > 0.0 && low_hz < high_hz && high_hz < sample_rate_hz / 2.0)) {
    throw Error(ErrorKind::InvalidArgument, "band-pass edges must satisfy 0 < low < high < sample_rate/2");
  }
  const double fs2 = 2.0 * sample_rate_hz;
  const double w_lo = fs2 * std::tan(std::numbers::pi * low_hz / sample_rate_hz);
  const double w_hi = fs2 * std::tan(std::numbers::pi * high_hz / sample_rate_hz);
  const double bw = w_hi - w_lo;
  const double w0_sq = w_lo * w_hi;

  std::vector<cd> digital_poles;
  const double n = static_cast<double>(order);
  for (std::size_t k = 1; k <= order; ++k) {
    cd proto = std::polar(1.0, std::numbers::pi * (2.0 * static_cast<double>(k) + n - 1.0) / (2.0 * n));
    cd half = proto * (bw / 2.0);
    cd root = std::sqrt(half * half - w0_sq);
    for (cd s : {half + root, half - root}) digital_poles.push_back((fs2 + s) / (fs2 - s));
  }

  SosFilter filter;
  filter.order = order;
  for (const cd& p : digital_poles) {
    if (p.imag() <= 0.0) continue;
    // One zero at z = 1 and one at z = -1 per section.
    filter.sections.push_back({1.0, 0.0, -1.0, -2.0 * p.real(), std::norm(p)});
  }
  if (filter.sections.size() != order) throw Error(ErrorKind::Numeric, "butterworth_bandpass: unexpected pole layout");

  const double center_hz = sample_rate_hz / std::numbers::pi * std::atan(std::sqrt(w0_sq) / fs2);
  const double gain = std::abs(filter.response(center_hz, sample_rate_hz));
  auto& first = filter.sections.front();
  first.b0 /= gain;
  first.b1 /= gain;
  first.b2 /= gain;
  return filter;
}

namespace {

// Transposed direct form II, in place; state holds (z1, z2) per section.
void run_sections(const SosFilter& f, std::vector<double>& x, std::vector<std::array<double, 2>> state) {
  for (std::size_t s = 0; s < f.sections.size(); ++s) {
    const Biquad& q = f.sections[s];
    double z1 = state[s][0], z2 = state[s][1];
    for (double& v : x) {
      double in = v;
      double out = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * out + z2;
      z2 = q.b2 * in - q.a2 * out;
      v = out;
    }
  }
}

// Section states that reproduce the steady state for a unit step input.
std::vector<std::array<double, 2>> step_steady_state(const SosFilter& f) {
  std::vector<std::array<double, 2>> zi;
  double level = 1.0;  // steady input level seen by the current section
  for (const auto& q : f.sections) {
    double dc = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    double out = dc * level;
    double z2 = q.b2 * level - q.a2 * out;
    double z1 = q.b1 * level - q.a1 * out + z2;
    zi.push_back({z1, z2});
    level = out;
  }
  return zi;
}

std::vector<std::array<double, 2>> scaled(std::vector<std::array<double, 2>> zi, double k) {
  for (auto& z : zi) {
    z[0] *= k;
    z[1] *= k;
  }
  return zi;
}

}  // namespace

std::vector<double> filtfilt(const SosFilter& filter, std::span<const double> x, std::size_t pad) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  if (pad >= n) pad = n - 1;
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (std::size_t i = pad; i >= 1; --i) ext.push_back(2.0 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (std::size_t i = 1; i <= pad; ++i) ext.push_back(2.0 * x[n - 1] - x[n - 1 - i]);

  const auto zi = step_steady_state(filter);
  run_sections(filter, ext, scaled(zi, ext.front()));
  std::reverse(ext.begin(), ext.end());
  run_sections(filter, ext, scaled(zi, ext.front()));
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

Segment bandpass(const Segment& segment, double low_hz, double high_hz) {
  SosFilter f = butterworth_bandpass(kBandpassOrder, low_hz, high_hz, segment.sample_rate_hz);
  Segment out = segment;
  out.samples = filtfilt(f, segment.samples, 3 * kBandpassOrder);
  return out;
}

std::vector<double> zscore(std::span<const double> x) {
  std::vector<double> out(x.size(), 0.0);
  if (x.empty()) return out;
  Moments m = central_moments(x);
  double sd = std::sqrt(m.m2);
  if (sd < 1e-12) return out;
  kernels::scale_shift(x, out, m.mean, 1.0 / sd);
  return out;
}

Segment zscore(const Segment& segment) {
  Segment out = segment;
  out.samples = zscore(segment.samples);
  return out;
}

std::vector<Segment> preprocess_stream(const RawPpgStream& stream, double sqi_threshold, PreprocessCounts* counts) {
  std::vector<Segment> out;
  for (auto& seg : segment_stream(stream)) {
    if (counts) ++counts->segments;
    if (!sqi(seg, sqi_threshold).pass) {
      if (counts) ++counts->sqi_dropped;
      continue;
    }
    out.push_back(zscore(bandpass(seg)));
    if (counts) ++counts->retained;
  }
  return out;
}

}  // namespace tdl::signal
