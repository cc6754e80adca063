#pragma once

// File formats. Every reader throws Error(Io) naming the file and line on
// malformed input; writers throw Error(Io) when the target cannot be written.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "tdl/baseline.hpp"
#include "tdl/cohort.hpp"
#include "tdl/features.hpp"
#include "tdl/model.hpp"
#include "tdl/signal.hpp"

namespace tdl::io {

namespace fs = std::filesystem;

std::string read_file(const fs::path& path);
void write_file(const fs::path& path, const std::string& contents);
// Creates the directory (and parents); Error(Io) if that fails or it is not writable.
void ensure_dir(const fs::path& dir);
// FNV-1a over the file bytes.
std::uint64_t file_digest(const fs::path& path);

// subject_id,biomarker,value,drawn_at_unix
std::vector<cohort::LabRecord> read_labs(const fs::path& path);
std::string labs_csv(const std::vector<cohort::LabRecord>& labs);

// subject_id,segment_id,median_ts_unix
std::vector<cohort::SegmentMeta> read_segment_meta(const fs::path& path);
std::string segment_meta_csv(const std::vector<cohort::SegmentMeta>& segments);

// One stream per line: subject_id,start_ts_unix,sample_rate,values...
std::vector<signal::RawPpgStream> read_raw_csv(const fs::path& path);
std::string raw_csv(const std::vector<signal::RawPpgStream>& streams);

// Little-endian float32 payload next to a JSON sidecar
// {"subject_id", "start_ts_unix", "sample_rate", "n_samples", "payload"}.
signal::RawPpgStream read_raw_binary(const fs::path& sidecar);
void write_raw_binary(const fs::path& sidecar, const signal::RawPpgStream& stream);

// A CSV file, or a directory holding *.csv stream files and *.json sidecars (sorted by name).
std::vector<signal::RawPpgStream> read_raw(const fs::path& path);

std::string labeled_jsonl(const std::vector<cohort::LabeledSegment>& segments);
std::vector<cohort::LabeledSegment> read_labeled_jsonl(const fs::path& path);

std::string segments_jsonl(const std::vector<signal::Segment>& segments);
std::vector<signal::Segment> read_segments_jsonl(const fs::path& path);

// subject_id,segment_id,biomarker,delta_t_days,label,<34 feature names>; failures as "nan".
std::string features_csv(const std::vector<features::FeatureRow>& rows);
std::vector<features::FeatureRow> read_features_csv(const fs::path& path);

// epoch,weighted_bce,mean_weight,total,alpha_hat
std::string loss_trace_csv(const std::vector<model::EpochTrace>& trace);

struct Checkpoint {
  model::Scorer scorer;
  features::FeatureVector imputer_medians{};
  double raw_alpha = 0.0;
  decay::DecayFamily family = decay::DecayFamily::Linear;
  model::TrainMode mode = model::TrainMode::Full;
  std::string biomarker;
  std::uint64_t config_hash = 0;
};

std::string checkpoint_json(const Checkpoint& checkpoint);
Checkpoint read_checkpoint(const fs::path& path);

std::string forest_json(const baseline::Forest& forest);
baseline::Forest parse_forest_json(const std::string& text);

}  // namespace tdl::io
