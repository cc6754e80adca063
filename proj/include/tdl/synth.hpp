#pragma once

// Synthetic data at two levels: PPG waveforms for the signal and feature
// pipeline, and feature-level cohorts with a known label-staleness process.

#include <cstdint>
#include <string>
#include <vector>

#include "tdl/cohort.hpp"
#include "tdl/decay.hpp"
#include "tdl/features.hpp"
#include "tdl/signal.hpp"

namespace tdl::synth {

struct PulseShape {
  // Gaussian centres and widths are fractions of the beat period.
  double systolic_amplitude = 1.0;
  double systolic_center = 0.15;
  double systolic_width = 0.06;
  double dicrotic_amplitude = 0.35;
  double dicrotic_center = 0.45;
  double dicrotic_width = 0.10;
};

struct WaveformConfig {
  double heart_rate_bpm = 60.0;
  double hrv_std_ms = 0.0;
  PulseShape pulse;
  double noise_std = 0.0;
  double baseline_wander_hz = 0.05;
  double baseline_wander_amp = 0.0;
  double sample_rate_hz = signal::kDefaultSampleRateHz;
  std::string subject_id = "synth";
  double start_timestamp = 1.6e9;
  std::uint64_t seed = 0;
};

/// Sum of two-Gaussian pulses at jittered beat times, sinusoidal baseline
/// wander and white Gaussian noise. Throws Error(Config) for a heart rate
/// outside [40, 180], negative noise, or a duration below 10 s.
signal::RawPpgStream gen_waveform(const WaveformConfig& cfg, double duration_s);

struct SynthCohortConfig {
  int n_subjects = 300;
  int segments_min = 8;
  int segments_max = 12;
  double true_staleness_rate = 0.15;  // per day
  decay::DecayFamily staleness_family = decay::DecayFamily::Linear;
  double window_days = cohort::kDefaultWindowDays;  // gaps ~ U[0, window_days)
  double class_separation = 1.0;  // difference of class means on each informative feature
  double feature_noise_std = 1.0;
  int n_informative = 4;  // leading features that carry the class signal
  cohort::Biomarker biomarker = cohort::Biomarker::LDL;
  double base_timestamp = 1.6e9;
  std::uint64_t seed = 0;
};

// Throws Error(Config) naming the offending field.
void validate(const SynthCohortConfig& cfg);

struct SynthCohort {
  SynthCohortConfig config;
  std::vector<cohort::LabRecord> labs;
  std::vector<cohort::LabeledSegment> segments;
  std::vector<features::FeatureRow> rows;  // parallel to segments
  std::vector<int> feature_class;          // class whose distribution generated each row
  std::vector<bool> fresh;                 // row drawn with probability g, always class-consistent
};

/// One latent label per subject (classes balanced), one lab draw per subject,
/// segments at gaps U[0, window). With probability g(rate * gap) a segment is
/// fresh and its features come from the subject's class; otherwise the class
/// is a fair coin flip, so P(match | gap) = (1 + g) / 2.
SynthCohort gen_cohort(const SynthCohortConfig& cfg);

struct WaveformCohortConfig {
  int recordings_per_subject = 3;
  double recording_seconds = 30.0;
  double noise_std = 0.02;
  double hrv_std_ms = 20.0;
};

struct WaveformCohort {
  std::vector<cohort::LabRecord> labs;
  std::vector<signal::RawPpgStream> streams;
  std::vector<bool> fresh;  // parallel to streams
};

/// Raw-stream counterpart of gen_cohort for the preprocessing pipeline. Each
/// subject gets a standard-normal lab value z (labels then come from the
/// quantile protocol) and recordings centred at gaps U[0, window). A fresh
/// recording beats at 70 + 8 z BPM; a stale one uses a fresh draw of z.
WaveformCohort gen_waveform_cohort(const SynthCohortConfig& cfg, const WaveformCohortConfig& wave);

}  // namespace tdl::synth
