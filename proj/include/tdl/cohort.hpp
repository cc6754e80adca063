#pragma once

// Subjects, lab records and segment metadata: windowed label attachment,
// two-extreme quantile labelling, per-subject capping and subject-level folds.

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tdl::cohort {

enum class Biomarker { LDL, Triglyceride, HbA1C, Hemoglobin, CO2, Chloride, Potassium, Sodium, WBC, Platelets };

inline constexpr std::array<Biomarker, 10> kAllBiomarkers{
    Biomarker::LDL,      Biomarker::Triglyceride, Biomarker::HbA1C,  Biomarker::Hemoglobin, Biomarker::CO2,
    Biomarker::Chloride, Biomarker::Potassium,    Biomarker::Sodium, Biomarker::WBC,        Biomarker::Platelets,
};

std::string_view to_string(Biomarker b);
// Case-insensitive; nullopt for unknown names.
std::optional<Biomarker> parse_biomarker(std::string_view name);

inline constexpr double kSecondsPerDay = 86400.0;
inline constexpr double kDefaultWindowDays = 30.0;

struct LabRecord {
  std::string subject_id;
  Biomarker biomarker = Biomarker::LDL;
  double value = 0.0;
  double drawn_at = 0.0;  // UTC seconds
};

struct SegmentMeta {
  std::string subject_id;
  std::string segment_id;
  double median_timestamp = 0.0;  // UTC seconds

  bool operator==(const SegmentMeta&) const = default;
};

struct LabeledSegment {
  SegmentMeta meta;
  Biomarker biomarker = Biomarker::LDL;
  double delta_t_days = 0.0;
  int label = 0;
  double lab_value = 0.0;

  bool operator==(const LabeledSegment&) const = default;
};

/// Joins each segment to the nearest lab of the same subject and biomarker.
///
/// Segments whose nearest lab is more than `window_days` away, and segments of
/// subjects without labs, are dropped. Equidistant labs resolve to the earlier
/// draw. The returned label is 0 until assign_labels runs.
/// Throws Error(RejectedRecords) listing ids with non-positive timestamps or
/// non-finite lab values.
std::vector<LabeledSegment> attach_labels(const std::vector<SegmentMeta>& segments, const std::vector<LabRecord>& labs,
                                          Biomarker biomarker, double window_days = kDefaultWindowDays);

enum class LabClass { Negative, Positive, Excluded };

struct QuantileThresholds {
  double lower = 0.0;
  double upper = 0.0;
  // lower == upper: no separable extremes, every value is excluded.
  bool degenerate() const { return !(lower < upper); }
  LabClass classify(double value) const;
};

// Linear-interpolated order statistic (numpy's default "linear" method).
double interpolated_quantile(std::vector<double> values, double q);

QuantileThresholds quantile_thresholds(const std::vector<double>& values, double lower_q = 0.25,
                                       double upper_q = 0.75);

/// Two-extreme labelling of the lab values of one biomarker, in input order.
/// Throws Error(InsufficientData) when fewer than 4 values are given.
std::vector<LabClass> quantile_label(const std::vector<LabRecord>& labs, double lower_q = 0.25, double upper_q = 0.75);

// Sets labels from the matched lab value and drops segments whose lab is excluded.
std::vector<LabeledSegment> assign_labels(const std::vector<LabeledSegment>& segments,
                                          const QuantileThresholds& thresholds);

/// Caps every (subject, biomarker) group at the lower median of per-subject
/// counts for that biomarker. Kept segments preserve input order; the
/// subsample depends only on (seed, biomarker, subject, group contents).
std::vector<LabeledSegment> cap_segments(const std::vector<LabeledSegment>& segments, std::uint64_t seed);

struct SubjectLabel {
  std::string subject_id;
  int label = 0;
};

// Majority segment label per subject (ties go to the positive class), sorted by id.
std::vector<SubjectLabel> subject_majority_labels(const std::vector<LabeledSegment>& segments);

struct FoldAssignment {
  int k = 0;
  std::map<std::string, int> fold_of;

  std::vector<std::string> subjects_in(int fold) const;
  // Stable digest of the assignment, used to prove folds are shared across runs.
  std::uint64_t digest() const;
};

/// Subject-level stratified k-fold split. Subjects are sorted by id, shuffled
/// with `seed`, then dealt round-robin stratum by stratum, the deal position
/// carrying over between strata.
FoldAssignment stratified_folds(const std::vector<SubjectLabel>& subjects, int k, std::uint64_t seed);

}  // namespace tdl::cohort
