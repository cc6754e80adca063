#pragma once

// Raw PPG handling: fixed-length segmentation, signal-quality gating,
// zero-phase Butterworth band-pass and per-segment z-scoring.

#include <array>
#include <complex>
#include <span>
#include <string>
#include <vector>

#include "tdl/cohort.hpp"

namespace tdl::signal {

inline constexpr double kDefaultSampleRateHz = 25.0;
inline constexpr double kDefaultSegmentSeconds = 10.0;

struct RawPpgStream {
  std::string subject_id;
  double start_timestamp = 0.0;  // UTC seconds
  double sample_rate_hz = kDefaultSampleRateHz;
  std::vector<double> samples;
};

struct Segment {
  cohort::SegmentMeta meta;
  double sample_rate_hz = kDefaultSampleRateHz;
  std::vector<double> samples;
};

struct QualityScore {
  double value = 0.0;
  bool pass = false;
};

// round(seg_seconds * sample_rate)
std::size_t segment_length(double sample_rate_hz, double seg_seconds = kDefaultSegmentSeconds);

/// Non-overlapping windows; the trailing remainder is dropped. Segment i has
/// median timestamp start + (i + 0.5) * seg_seconds and id "<subject>-<start>-<i>".
std::vector<Segment> segment_stream(const RawPpgStream& stream, double seg_seconds = kDefaultSegmentSeconds);

inline constexpr double kDefaultSqiThreshold = 0.5;

// Heuristic quality index on the raw segment: mean of a skewness score
// clamp(skew, 0, 2) / 2 and the peak normalized autocorrelation over lags
// covering 40-180 BPM, clamped to [0, 1]. Constant input scores 0.
QualityScore sqi(const Segment& segment, double threshold = kDefaultSqiThreshold);

double skewness(std::span<const double> x);
// Population excess kurtosis.
double excess_kurtosis(std::span<const double> x);
// Autocorrelation at `lag` normalized by the variance, using the mean product
// over the N - lag overlapping pairs.
double normalized_autocorrelation(std::span<const double> x, std::size_t lag);

/// Second-order section, a0 == 1.
struct Biquad {
  double b0, b1, b2, a1, a2;
};

struct SosFilter {
  std::vector<Biquad> sections;
  std::size_t order = 0;  // prototype order

  std::complex<double> response(double freq_hz, double sample_rate_hz) const;
};

/// Digital Butterworth band-pass via the bilinear transform with pre-warped
/// edges; `order` is the low-pass prototype order (2*order poles in total).
SosFilter butterworth_bandpass(std::size_t order, double low_hz, double high_hz, double sample_rate_hz);

// Forward-backward application with odd reflection padding of `pad` samples
// and steady-state initial conditions scaled by the first padded sample.
std::vector<double> filtfilt(const SosFilter& filter, std::span<const double> x, std::size_t pad);

inline constexpr std::size_t kBandpassOrder = 4;
inline constexpr double kBandLowHz = 0.5;
inline constexpr double kBandHighHz = 5.0;

// Throws Error(InvalidArgument) unless 0 < low < high < sample_rate / 2.
Segment bandpass(const Segment& segment, double low_hz = kBandLowHz, double high_hz = kBandHighHz);

// (x - mean) / std with population std; all zeros when std < 1e-12.
Segment zscore(const Segment& segment);
std::vector<double> zscore(std::span<const double> x);

struct PreprocessCounts {
  std::size_t segments = 0;
  std::size_t sqi_dropped = 0;
  std::size_t retained = 0;
};

// sqi on raw -> bandpass -> zscore for every segment of a stream.
std::vector<Segment> preprocess_stream(const RawPpgStream& stream, double sqi_threshold, PreprocessCounts* counts);

}  // namespace tdl::signal
