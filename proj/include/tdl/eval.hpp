#pragma once

// Ranking metrics, subject-level logit aggregation and the subject-stratified
// cross-validation runner behind every reported number.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tdl/baseline.hpp"
#include "tdl/cohort.hpp"
#include "tdl/features.hpp"
#include "tdl/model.hpp"

namespace tdl::eval {

// P(score_pos > score_neg) + 0.5 P(equal), via average ranks.
// Throws Error(UndefinedMetric) unless both classes are present.
double auroc(std::span<const double> scores, std::span<const int> labels);

// Average precision, sum over distinct descending thresholds of (R_k - R_{k-1}) * P_k.
// Throws Error(UndefinedMetric) without positives.
double auprc(std::span<const double> scores, std::span<const int> labels);

struct SubjectPrediction {
  std::string subject_id;
  double mean_logit = 0.0;
  int label = 0;
  std::size_t n_segments = 0;
};

struct SegmentScore {
  std::string subject_id;
  double logit = 0.0;
  int label = 0;
};

// Mean logit per subject, sorted by subject id. Throws Error(InvalidArgument)
// when a subject carries conflicting labels.
std::vector<SubjectPrediction> aggregate_subject(std::span<const SegmentScore> rows);

enum class MethodKind { Ours, RandomForest, FixedAlpha, NoDecay };

struct Method {
  MethodKind kind = MethodKind::Ours;
  decay::DecayFamily family = decay::DecayFamily::Linear;
  double fixed_rate_per_day = model::kInitialRatePerDay;  // FixedAlpha only

  static Method ours(decay::DecayFamily f) { return {MethodKind::Ours, f, model::kInitialRatePerDay}; }
  static Method random_forest() { return {MethodKind::RandomForest, decay::DecayFamily::Linear, 0.0}; }
  static Method fixed_alpha(decay::DecayFamily f, double rate) { return {MethodKind::FixedAlpha, f, rate}; }
  static Method no_decay() { return {MethodKind::NoDecay, decay::DecayFamily::Linear, 0.0}; }
};

// ours | rf | ablation_fixed_alpha | ablation_no_decay
std::string method_name(MethodKind kind);
std::optional<MethodKind> parse_method(std::string_view name);
// Family column of reports; "none" where the method has no decay.
std::string family_label(const Method& m);

struct CvOptions {
  int k = 5;
  std::uint64_t seed = 0;
  model::TrainConfig train;  // seed/mode/family/context are set per fold
  objective::Hyperparams hp;
  baseline::ForestConfig forest;
  double valid_fraction = 0.15;  // of training subjects, per class, for early stopping
  int jobs = 1;
};

struct FoldResult {
  int fold = 0;
  double auroc = 0.0;
  double auprc = 0.0;
  std::optional<double> learned_rate_per_day;
  std::size_t n_train_subjects = 0;
  std::size_t n_test_subjects = 0;
};

struct MetricReport {
  cohort::Biomarker biomarker = cohort::Biomarker::LDL;
  Method method;
  std::vector<FoldResult> per_fold;
  double mean_auroc = 0.0;
  double mean_auprc = 0.0;
  std::optional<double> mean_learned_rate;
  std::uint64_t config_hash = 0;
  std::uint64_t fold_digest = 0;
};

/// Training/validation/test subject split for one fold. Subject sets are disjoint.
struct FoldSplit {
  int fold = 0;
  std::vector<std::string> train_subjects;
  std::vector<std::string> valid_subjects;
  std::vector<std::string> test_subjects;
};

struct FoldPlan {
  cohort::FoldAssignment assignment;
  std::vector<FoldSplit> splits;
};

// Rows of one biomarker. Throws Error(EmptyResult) if there are none.
std::vector<features::FeatureRow> rows_for(std::span<const features::FeatureRow> table, cohort::Biomarker biomarker);

/// Folds depend only on (rows, k, seed), never on the method, so every method
/// and decay family sees identical splits. Throws Error(InsufficientData) with
/// fewer than k subjects in either class.
FoldPlan plan_folds(std::span<const features::FeatureRow> rows, int k, std::uint64_t seed, double valid_fraction);

// Every subject trains; a per-class validation subset is held out for early
// stopping. Used to fit a final model outside cross-validation.
FoldSplit holdout_split(std::span<const features::FeatureRow> rows, std::uint64_t seed, double valid_fraction);

/// A trained fold model, scoring test segments without time gaps.
struct FoldModel {
  Method method;
  features::Imputer imputer;
  std::optional<model::TrainResult> network;
  std::optional<baseline::Forest> forest;

  double score(const features::FeatureVector& raw_features) const;
};

// Trains on the training (and validation) subjects of one split; test rows are never read.
FoldModel train_fold(std::span<const features::FeatureRow> rows, const FoldSplit& split, const Method& method,
                     const CvOptions& options, cohort::Biomarker biomarker);

FoldResult evaluate_fold(std::span<const features::FeatureRow> rows, const FoldSplit& split, const FoldModel& m);

/// Per fold: impute and standardize from the training split, train, score test
/// segments unweighted, average logits per subject, compute metrics. Errors
/// are rethrown with the fold index attached.
MetricReport run_cv(std::span<const features::FeatureRow> table, cohort::Biomarker biomarker, const Method& method,
                    const CvOptions& options);

// Ours with each of the four families over shared folds and seeds.
std::vector<MetricReport> compare_decays(std::span<const features::FeatureRow> table, cohort::Biomarker biomarker,
                                         const CvOptions& options);

// Full model, fixed decay rate, and no time-aware loss.
std::vector<MetricReport> ablate(std::span<const features::FeatureRow> table, cohort::Biomarker biomarker,
                                 decay::DecayFamily family, double fixed_rate_per_day, const CvOptions& options);

// biomarker,method,family,fold,auroc,auprc,alpha_hat  (one row per fold plus a "mean" row)
std::string report_csv(std::span<const MetricReport> reports);
std::string summary_table(std::span<const MetricReport> reports);
// family,alpha_hat,delta_t_days,weight on a 0.5-day grid over [0, window_days]
std::string weight_curve_csv(std::span<const MetricReport> reports, double window_days = cohort::kDefaultWindowDays);

// Runs fn(i) for i in [0, n) on up to `jobs` threads; the first exception is rethrown.
void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn);

}  // namespace tdl::eval
