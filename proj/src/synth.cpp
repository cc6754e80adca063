#include "tdl/synth.hpp"

#include <cmath>
#include <numbers>

#include "tdl/common.hpp"

namespace tdl::synth {

namespace {

double gaussian_bump(double t, double center, double width) {
  double z = (t - center) / width;
  return std::exp(-0.5 * z * z);
}

}  // namespace

signal::RawPpgStream gen_waveform(const WaveformConfig& cfg, double duration_s) {
  if (!(cfg.heart_rate_bpm >= 40.0 && cfg.heart_rate_bpm <= 180.0)) {
    throw Error(ErrorKind::Config, "heart_rate_bpm must be in [40, 180]");
  }
  if (!(cfg.noise_std >= 0.0)) throw Error(ErrorKind::Config, "noise_std must be >= 0");
  if (!(cfg.hrv_std_ms >= 0.0)) throw Error(ErrorKind::Config, "hrv_std_ms must be >= 0");
  if (!(duration_s >= 10.0)) throw Error(ErrorKind::Config, "duration must be >= 10 s");
  if (!(cfg.sample_rate_hz > 0.0)) throw Error(ErrorKind::Config, "sample_rate_hz must be positive");

  Rng beat_rng(derive_seed(cfg.seed, "beats"));
  Rng noise_rng(derive_seed(cfg.seed, "noise"));
  const double period = 60.0 / cfg.heart_rate_bpm;

  // Beat onsets cover the stream plus one period either side.
  std::vector<std::pair<double, double>> beats;  // onset, period
  double onset = -period * beat_rng.uniform();
  while (onset < duration_s + period) {
    double p = period + cfg.hrv_std_ms * 1e-3 * beat_rng.normal();
    p = std::clamp(p, 0.5 * period, 1.5 * period);
    beats.emplace_back(onset, p);
    onset += p;
  }

  signal::RawPpgStream out;
  out.subject_id = cfg.subject_id;
  out.start_timestamp = cfg.start_timestamp;
  out.sample_rate_hz = cfg.sample_rate_hz;
  const auto n = static_cast<std::size_t>(std::llround(duration_s * cfg.sample_rate_hz));
  out.samples.resize(n);
  const auto& shape = cfg.pulse;
  std::size_t first_beat = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / cfg.sample_rate_hz;
    while (first_beat + 1 < beats.size() && beats[first_beat].first + 2.0 * beats[first_beat].second < t) ++first_beat;
    double v = 0.0;
    for (std::size_t b = first_beat; b < beats.size() && beats[b].first <= t + 0.5 * beats[b].second; ++b) {
      const double phase = (t - beats[b].first) / beats[b].second;
      v += shape.systolic_amplitude * gaussian_bump(phase, shape.systolic_center, shape.systolic_width) +
           shape.dicrotic_amplitude * gaussian_bump(phase, shape.dicrotic_center, shape.dicrotic_width);
    }
    v += cfg.baseline_wander_amp * std::sin(2.0 * std::numbers::pi * cfg.baseline_wander_hz * t);
    if (cfg.noise_std > 0.0) v += cfg.noise_std * noise_rng.normal();
    out.samples[i] = v;
  }
  return out;
}

void validate(const SynthCohortConfig& cfg) {
  auto bad = [](const std::string& field, const std::string& why) {
    throw Error(ErrorKind::Config, "synth config field '" + field + "' " + why);
  };
  if (cfg.n_subjects < 10) bad("n_subjects", "must be >= 10");
  if (cfg.segments_min < 1) bad("segments_min", "must be >= 1");
  if (cfg.segments_max < cfg.segments_min) bad("segments_max", "must be >= segments_min");
  if (!(cfg.true_staleness_rate >= 0.0) || !std::isfinite(cfg.true_staleness_rate)) {
    bad("true_staleness_rate", "must be a finite value >= 0");
  }
  if (!(cfg.window_days > 0.0) || !std::isfinite(cfg.window_days)) bad("window_days", "must be positive");
  if (!std::isfinite(cfg.class_separation)) bad("class_separation", "must be finite");
  if (!(cfg.feature_noise_std >= 0.0) || !std::isfinite(cfg.feature_noise_std)) {
    bad("feature_noise_std", "must be a finite value >= 0");
  }
  if (cfg.n_informative < 1 || cfg.n_informative > static_cast<int>(features::kNumFeatures)) {
    bad("n_informative", "must be in [1, 34]");
  }
  if (!(cfg.base_timestamp > 0.0)) bad("base_timestamp", "must be positive");
}

SynthCohort gen_cohort(const SynthCohortConfig& cfg) {
  validate(cfg);
  SynthCohort out;
  out.config = cfg;
  const auto n = static_cast<std::size_t>(cfg.n_subjects);

  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) labels[i] = i < n / 2 ? 1 : 0;
  Rng label_rng(derive_seed(cfg.seed, "labels"));
  label_rng.shuffle(labels);

  char id[32];
  for (std::size_t s = 0; s < n; ++s) {
    std::snprintf(id, sizeof(id), "S%04zu", s);
    const std::string subject = id;
    Rng rng(derive_seed(cfg.seed, "subject", s));
    const int y = labels[s];

    cohort::LabRecord lab;
    lab.subject_id = subject;
    lab.biomarker = cfg.biomarker;
    lab.value = (y ? 2.0 : -2.0) + rng.normal() * 0.25;
    lab.drawn_at = cfg.base_timestamp + std::floor(rng.uniform(0.0, 365.0)) * cohort::kSecondsPerDay;
    out.labs.push_back(lab);

    const int count = cfg.segments_min +
                      static_cast<int>(rng.below(static_cast<std::size_t>(cfg.segments_max - cfg.segments_min + 1)));
    for (int k = 0; k < count; ++k) {
      const double gap = rng.uniform(0.0, cfg.window_days);
      const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const bool fresh = rng.uniform() < decay::g(cfg.staleness_family, cfg.true_staleness_rate * gap);
      const int source = fresh ? y : (rng.bernoulli(0.5) ? 1 : 0);

      features::FeatureRow row;
      row.subject_id = subject;
      row.segment_id = subject + "-" + std::to_string(k);
      row.biomarker = cfg.biomarker;
      row.delta_t_days = gap;
      row.label = y;
      for (std::size_t j = 0; j < features::kNumFeatures; ++j) {
        double mean = 0.0;
        if (static_cast<int>(j) < cfg.n_informative) mean = (source ? 0.5 : -0.5) * cfg.class_separation;
        row.features[j] = mean + cfg.feature_noise_std * rng.normal();
      }

      cohort::LabeledSegment seg;
      seg.meta.subject_id = subject;
      seg.meta.segment_id = row.segment_id;
      seg.meta.median_timestamp = lab.drawn_at + side * gap * cohort::kSecondsPerDay;
      seg.biomarker = cfg.biomarker;
      seg.delta_t_days = gap;
      seg.label = y;
      seg.lab_value = lab.value;

      out.segments.push_back(std::move(seg));
      out.rows.push_back(std::move(row));
      out.feature_class.push_back(source);
      out.fresh.push_back(fresh);
    }
  }
  return out;
}

WaveformCohort gen_waveform_cohort(const SynthCohortConfig& cfg, const WaveformCohortConfig& wave) {
  validate(cfg);
  if (wave.recordings_per_subject < 1) throw Error(ErrorKind::Config, "waveform_recordings must be >= 1");
  if (!(wave.recording_seconds >= 10.0)) throw Error(ErrorKind::Config, "waveform_seconds must be >= 10");
  WaveformCohort out;
  char id[32];
  for (int s = 0; s < cfg.n_subjects; ++s) {
    std::snprintf(id, sizeof(id), "W%04d", s);
    Rng rng(derive_seed(cfg.seed, "waveform-subject", static_cast<std::uint64_t>(s)));
    const double z = rng.normal();
    cohort::LabRecord lab{id, cfg.biomarker, z, cfg.base_timestamp + std::floor(rng.uniform(0.0, 365.0)) * cohort::kSecondsPerDay};
    out.labs.push_back(lab);
    for (int r = 0; r < wave.recordings_per_subject; ++r) {
      const double gap = rng.uniform(0.0, cfg.window_days);
      const double side = rng.bernoulli(0.5) ? 1.0 : -1.0;
      const bool fresh = rng.uniform() < decay::g(cfg.staleness_family, cfg.true_staleness_rate * gap);
      const double source = fresh ? z : rng.normal();
      WaveformConfig w;
      w.heart_rate_bpm = std::clamp(70.0 + 8.0 * source, 45.0, 120.0);
      w.hrv_std_ms = wave.hrv_std_ms;
      w.noise_std = wave.noise_std;
      w.subject_id = id;
      // Centre the recording on the sampled gap, rounded to whole seconds.
      w.start_timestamp = std::round(lab.drawn_at + side * gap * cohort::kSecondsPerDay - 0.5 * wave.recording_seconds);
      w.seed = rng.next_u64();
      out.streams.push_back(gen_waveform(w, wave.recording_seconds));
      out.fresh.push_back(fresh);
    }
  }
  return out;
}

}  // namespace tdl::synth
