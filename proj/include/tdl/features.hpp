#pragma once

// 34 handcrafted descriptors per filtered, normalized segment:
// 28 beat-morphology features, 5 time-domain HRV metrics and mean heart rate.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tdl/signal.hpp"

namespace tdl::features {

inline constexpr std::size_t kNumMorphology = 28;
inline constexpr std::size_t kNumHrv = 5;
inline constexpr std::size_t kNumFeatures = kNumMorphology + kNumHrv + 1;

using FeatureVector = std::array<double, kNumFeatures>;
using MorphologyVector = std::array<double, kNumMorphology>;
using HrvVector = std::array<double, kNumHrv>;

// Frozen column order: [28 morphology | 5 HRV | mean HR].
const std::array<std::string_view, kNumFeatures>& feature_names();

struct BeatSequence {
  std::vector<std::size_t> peak_indices;
  std::vector<std::size_t> foot_indices;         // foot k lies between peaks k and k+1
  std::vector<double> inter_beat_intervals_ms;  // plausibility-cleaned, 333-1500 ms
  double sample_rate_hz = signal::kDefaultSampleRateHz;
};

inline constexpr double kMinIbiMs = 333.0;
inline constexpr double kMaxIbiMs = 1500.0;

/// Systolic peaks: local maxima that exceed the centred 1.5 s rolling median by
/// 0.3 segment standard deviations, kept tallest-first at least 0.6 of the
/// autocorrelation period (and at least 60/180 s) apart. Feet are the
/// minima between consecutive peaks. nullopt when fewer than 3 peaks are found.
std::optional<BeatSequence> detect_beats(const signal::Segment& segment);

// Per-beat descriptors averaged over the complete foot-to-foot beats (plus
// across-beat std of width and amplitude). Requires >= 3 peaks.
MorphologyVector morphology_features(const signal::Segment& segment, const BeatSequence& beats);

// {SDNN (sample std), RMSSD, pNN50 (%), median IBI, IBI range}, all in ms except pNN50.
HrvVector hrv_features(std::span<const double> ibis_ms);
inline HrvVector hrv_features(const BeatSequence& beats) { return hrv_features(beats.inter_beat_intervals_ms); }

// 60000 / mean(IBI).
double mean_hr(std::span<const double> ibis_ms);
inline double mean_hr(const BeatSequence& beats) { return mean_hr(beats.inter_beat_intervals_ms); }

inline constexpr std::size_t kMinIbisForFeatures = 3;

// Raw extraction; nullopt when beat detection fails or fewer than 3 plausible IBIs remain.
std::optional<FeatureVector> extract_features(const signal::Segment& segment);

/// Per-feature medians of a training split, substituted for failed segments
/// (and for any non-finite entry) so nothing non-finite leaves featurize.
class Imputer {
 public:
  Imputer() { medians_.fill(0.0); }
  explicit Imputer(const FeatureVector& medians) : medians_(medians) {}

  // Rows containing a non-finite value are treated as failed extractions and skipped.
  static Imputer fit(std::span<const FeatureVector> training_rows);

  const FeatureVector& medians() const { return medians_; }
  FeatureVector apply(const std::optional<FeatureVector>& raw) const;

 private:
  FeatureVector medians_;
};

FeatureVector featurize(const signal::Segment& segment, const Imputer& imputer);

bool is_finite(const FeatureVector& v);

/// One row of a feature table: a labelled segment plus its raw descriptors.
/// A failed extraction is stored as all-NaN features and imputed later from
/// training-split medians.
struct FeatureRow {
  std::string subject_id;
  std::string segment_id;
  cohort::Biomarker biomarker = cohort::Biomarker::LDL;
  double delta_t_days = 0.0;
  int label = 0;
  FeatureVector features{};
};

FeatureVector failed_features();

}  // namespace tdl::features
