#include "tdl/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "tdl/common.hpp"

namespace tdl::eval {

namespace {

void check_metric_inputs(std::span<const double> scores, std::span<const int> labels, const char* what) {
  if (scores.size() != labels.size()) {
    throw Error(ErrorKind::InvalidArgument, std::string(what) + ": scores and labels differ in length");
  }
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  check_metric_inputs(scores, labels, "auroc");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += y ? 1 : 0;
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw Error(ErrorKind::UndefinedMetric, "auroc: both classes must be present");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Twice the average 1-based rank keeps everything integral.
  double pos_rank_sum_x2 = 0.0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
    double rank_x2 = static_cast<double>(i + 1 + j + 1);
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]]) pos_rank_sum_x2 += rank_x2;
    }
    i = j + 1;
  }
  const double np = static_cast<double>(n_pos);
  const double u = pos_rank_sum_x2 / 2.0 - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double auprc(std::span<const double> scores, std::span<const int> labels) {
  check_metric_inputs(scores, labels, "auprc");
  const std::size_t n = scores.size();
  std::size_t n_pos = 0;
  for (int y : labels) n_pos += y ? 1 : 0;
  if (n_pos == 0) throw Error(ErrorKind::UndefinedMetric, "auprc: no positive labels");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0;
  std::size_t tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    std::size_t group_tp = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]]) {
        ++group_tp;
      } else {
        ++fp;
      }
      ++j;
    }
    tp += group_tp;
    if (group_tp > 0) {
      double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
      ap += static_cast<double>(group_tp) / static_cast<double>(n_pos) * precision;
    }
    i = j;
  }
  return ap;
}

std::vector<SubjectPrediction> aggregate_subject(std::span<const SegmentScore> rows) {
  struct Acc {
    CompensatedSum sum;
    std::size_t n = 0;
    int label = 0;
  };
  std::map<std::string, Acc> by_subject;
  for (const auto& r : rows) {
    auto [it, inserted] = by_subject.try_emplace(r.subject_id);
    Acc& a = it->second;
    if (inserted) {
      a.label = r.label;
    } else if (a.label != r.label) {
      throw Error(ErrorKind::InvalidArgument, "aggregate_subject: conflicting labels for subject " + r.subject_id);
    }
    a.sum.add(r.logit);
    ++a.n;
  }
  std::vector<SubjectPrediction> out;
  out.reserve(by_subject.size());
  for (const auto& [id, a] : by_subject) {
    out.push_back({id, a.sum.value() / static_cast<double>(a.n), a.label, a.n});
  }
  return out;
}

std::string method_name(MethodKind kind) {
  switch (kind) {
    case MethodKind::Ours:
      return "ours";
    case MethodKind::RandomForest:
      return "rf";
    case MethodKind::FixedAlpha:
      return "ablation_fixed_alpha";
    case MethodKind::NoDecay:
      return "ablation_no_decay";
  }
  return "ours";
}

std::optional<MethodKind> parse_method(std::string_view name) {
  std::string n = to_lower(trim(name));
  for (MethodKind k : {MethodKind::Ours, MethodKind::RandomForest, MethodKind::FixedAlpha, MethodKind::NoDecay}) {
    if (n == method_name(k)) return k;
  }
  return std::nullopt;
}

std::string family_label(const Method& m) {
  if (m.kind == MethodKind::RandomForest || m.kind == MethodKind::NoDecay) return "none";
  return std::string(decay::to_string(m.family));
}

std::vector<features::FeatureRow> rows_for(std::span<const features::FeatureRow> table, cohort::Biomarker biomarker) {
  std::vector<features::FeatureRow> out;
  for (const auto& r : table) {
    if (r.biomarker == biomarker) out.push_back(r);
  }
  if (out.empty()) {
    throw Error(ErrorKind::EmptyResult, "no rows for biomarker " + std::string(cohort::to_string(biomarker)));
  }
  return out;
}

namespace {

std::vector<cohort::SubjectLabel> subject_labels(std::span<const features::FeatureRow> rows) {
  std::vector<cohort::LabeledSegment> segs;
  segs.reserve(rows.size());
  for (const auto& r : rows) {
    cohort::LabeledSegment s;
    s.meta.subject_id = r.subject_id;
    s.label = r.label;
    segs.push_back(std::move(s));
  }
  return cohort::subject_majority_labels(segs);
}

// Moves a valid_fraction share of each stratum (at least one subject once the
// stratum has 3 or more, never all of it) into the validation list.
void split_validation(std::vector<std::string> (&strata)[2], std::uint64_t seed, double valid_fraction, FoldSplit& split) {
  Rng rng(seed);
  for (auto& stratum : strata) {
    rng.shuffle(stratum);
    std::size_t n_valid = 0;
    if (valid_fraction > 0.0 && stratum.size() >= 3) {
      n_valid = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(valid_fraction * static_cast<double>(stratum.size()))));
      n_valid = std::min(n_valid, stratum.size() - 1);
    }
    for (std::size_t i = 0; i < stratum.size(); ++i) {
      (i < n_valid ? split.valid_subjects : split.train_subjects).push_back(stratum[i]);
    }
  }
  std::sort(split.train_subjects.begin(), split.train_subjects.end());
  std::sort(split.valid_subjects.begin(), split.valid_subjects.end());
}

}  // namespace

FoldSplit holdout_split(std::span<const features::FeatureRow> rows, std::uint64_t seed, double valid_fraction) {
  std::vector<std::string> strata[2];
  for (const auto& s : subject_labels(rows)) strata[s.label].push_back(s.subject_id);
  FoldSplit split;
  split_validation(strata, derive_seed(seed, "holdout"), valid_fraction, split);
  return split;
}

FoldPlan plan_folds(std::span<const features::FeatureRow> rows, int k, std::uint64_t seed, double valid_fraction) {
  auto subjects = subject_labels(rows);
  std::size_t pos = 0;
  for (const auto& s : subjects) pos += s.label ? 1 : 0;
  const std::size_t neg = subjects.size() - pos;
  if (pos < static_cast<std::size_t>(k) || neg < static_cast<std::size_t>(k)) {
    throw Error(ErrorKind::InsufficientData, "cross-validation needs at least k=" + std::to_string(k) +
                                                 " subjects per class (have " + std::to_string(pos) + " positive, " +
                                                 std::to_string(neg) + " negative)");
  }
  FoldPlan plan;
  plan.assignment = cohort::stratified_folds(subjects, k, derive_seed(seed, "folds"));
  std::map<std::string, int> label_of;
  for (const auto& s : subjects) label_of[s.subject_id] = s.label;

  for (int f = 0; f < k; ++f) {
    FoldSplit split;
    split.fold = f;
    std::vector<std::string> strata[2];
    for (const auto& [id, fold] : plan.assignment.fold_of) {
      if (fold == f) {
        split.test_subjects.push_back(id);
      } else {
        strata[label_of[id]].push_back(id);
      }
    }
    split_validation(strata, derive_seed(seed, "valid", static_cast<std::uint64_t>(f)), valid_fraction, split);

    std::set<std::string> test(split.test_subjects.begin(), split.test_subjects.end());
    for (const auto* group : {&split.train_subjects, &split.valid_subjects}) {
      for (const auto& id : *group) {
        if (test.count(id)) throw Error(ErrorKind::Numeric, "fold " + std::to_string(f) + ": subject " + id + " in train and test");
      }
    }
    plan.splits.push_back(std::move(split));
  }
  return plan;
}

double FoldModel::score(const features::FeatureVector& raw_features) const {
  const auto x = imputer.apply(raw_features);
  if (network) return model::predict_logit(network->scorer, x);
  if (forest) {
    double p = std::clamp(baseline::predict_proba(*forest, x), 1e-3, 1.0 - 1e-3);
    return std::log(p / (1.0 - p));
  }
  throw Error(ErrorKind::InvalidArgument, "FoldModel: untrained");
}

FoldModel train_fold(std::span<const features::FeatureRow> rows, const FoldSplit& split, const Method& method,
                     const CvOptions& options, cohort::Biomarker biomarker) {
  const std::set<std::string> train_ids(split.train_subjects.begin(), split.train_subjects.end());
  const std::set<std::string> valid_ids(split.valid_subjects.begin(), split.valid_subjects.end());
  const std::string context =
      std::string(cohort::to_string(biomarker)) + " fold " + std::to_string(split.fold);

  std::vector<features::FeatureVector> training_raw;
  for (const auto& r : rows) {
    if (train_ids.count(r.subject_id) || valid_ids.count(r.subject_id)) training_raw.push_back(r.features);
  }
  FoldModel fm;
  fm.method = method;
  fm.imputer = features::Imputer::fit(training_raw);

  if (method.kind == MethodKind::RandomForest) {
    std::vector<features::FeatureVector> x;
    std::vector<int> y;
    for (const auto& r : rows) {
      if (train_ids.count(r.subject_id) || valid_ids.count(r.subject_id)) {
        x.push_back(fm.imputer.apply(r.features));
        y.push_back(r.label);
      }
    }
    baseline::ForestConfig fc = options.forest;
    fc.seed = derive_seed(options.seed, "forest", static_cast<std::uint64_t>(split.fold));
    try {
      fm.forest = baseline::fit(x, y, fc);
    } catch (const Error& e) {
      throw Error(e.kind(), context + ": " + e.what());
    }
    return fm;
  }

  model::Dataset train, valid;
  for (const auto& r : rows) {
    if (train_ids.count(r.subject_id)) {
      train.push_back(fm.imputer.apply(r.features), r.label, r.delta_t_days);
    } else if (valid_ids.count(r.subject_id)) {
      valid.push_back(fm.imputer.apply(r.features), r.label, r.delta_t_days);
    }
  }
  model::TrainConfig cfg = options.train;
  cfg.seed = derive_seed(options.seed, "train", static_cast<std::uint64_t>(split.fold));
  cfg.family = method.family;
  cfg.context = context;
  switch (method.kind) {
    case MethodKind::Ours:
      cfg.mode = model::TrainMode::Full;
      break;
    case MethodKind::FixedAlpha:
      cfg.mode = model::TrainMode::FixedAlpha;
      cfg.initial_rate_per_day = method.fixed_rate_per_day;
      break;
    case MethodKind::NoDecay:
      cfg.mode = model::TrainMode::NoDecay;
      break;
    case MethodKind::RandomForest:
      break;
  }
  fm.network = model::train_biomarker(train, valid, cfg, options.hp);
  return fm;
}

FoldResult evaluate_fold(std::span<const features::FeatureRow> rows, const FoldSplit& split, const FoldModel& m) {
  const std::set<std::string> test_ids(split.test_subjects.begin(), split.test_subjects.end());
  std::vector<SegmentScore> scored;
  for (const auto& r : rows) {
    if (test_ids.count(r.subject_id)) scored.push_back({r.subject_id, m.score(r.features), r.label});
  }
  auto subjects = aggregate_subject(scored);
  std::vector<double> s;
  std::vector<int> y;
  for (const auto& p : subjects) {
    s.push_back(p.mean_logit);
    y.push_back(p.label);
  }
  FoldResult out;
  out.fold = split.fold;
  out.auroc = auroc(s, y);
  out.auprc = auprc(s, y);
  if (m.network) {
    if (m.method.kind == MethodKind::NoDecay) {
      out.learned_rate_per_day.reset();
    } else {
      out.learned_rate_per_day = m.network->learned_rate_per_day;
    }
  }
  out.n_train_subjects = split.train_subjects.size() + split.valid_subjects.size();
  out.n_test_subjects = split.test_subjects.size();
  return out;
}

void parallel_for(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

MetricReport run_cv(std::span<const features::FeatureRow> table, cohort::Biomarker biomarker, const Method& method,
                    const CvOptions& options) {
  const auto rows = rows_for(table, biomarker);
  const FoldPlan plan = plan_folds(rows, options.k, options.seed, options.valid_fraction);

  MetricReport report;
  report.biomarker = biomarker;
  report.method = method;
  report.fold_digest = plan.assignment.digest();
  report.per_fold.resize(plan.splits.size());
  std::vector<std::string> errors(plan.splits.size());
  parallel_for(plan.splits.size(), options.jobs, [&](std::size_t f) {
    try {
      FoldModel m = train_fold(rows, plan.splits[f], method, options, biomarker);
      report.per_fold[f] = evaluate_fold(rows, plan.splits[f], m);
    } catch (const Error& e) {
      throw Error(e.kind(), "fold " + std::to_string(f) + ": " + e.what());
    }
  });

  const double k = static_cast<double>(report.per_fold.size());
  CompensatedSum a, p, r;
  bool has_rate = true;
  for (const auto& f : report.per_fold) {
    a.add(f.auroc);
    p.add(f.auprc);
    if (f.learned_rate_per_day) {
      r.add(*f.learned_rate_per_day);
    } else {
      has_rate = false;
    }
  }
  report.mean_auroc = a.value() / k;
  report.mean_auprc = p.value() / k;
  if (has_rate) report.mean_learned_rate = r.value() / k;

  model::TrainConfig cfg = options.train;
  cfg.family = method.family;
  std::string canon = method_name(method.kind) + "|" + family_label(method) + "|" + format_double(method.fixed_rate_per_day) +
                      "|k=" + std::to_string(options.k) + "|seed=" + std::to_string(options.seed) +
                      "|valid=" + format_double(options.valid_fraction) + "|train=" + hex64(model::config_digest(cfg, options.hp));
  if (method.kind == MethodKind::RandomForest) {
    const auto& fc = options.forest;
    canon += "|forest=" + std::to_string(fc.n_trees) + "," + std::to_string(fc.max_depth) + "," +
             std::to_string(fc.min_leaf) + "," + std::to_string(fc.features_per_split) + "," + (fc.bootstrap ? "1" : "0");
  }
  report.config_hash = fnv1a64(canon);
  return report;
}

std::vector<MetricReport> compare_decays(std::span<const features::FeatureRow> table, cohort::Biomarker biomarker,
                                         const CvOptions& options) {
  std::vector<MetricReport> out;
  for (auto family : decay::kAllFamilies) out.push_back(run_cv(table, biomarker, Method::ours(family), options));
  return out;
}

std::vector<MetricReport> ablate(std::span<const features::FeatureRow> table, cohort::Biomarker biomarker,
                                 decay::DecayFamily family, double fixed_rate_per_day, const CvOptions& options) {
  return {
      run_cv(table, biomarker, Method::ours(family), options),
      run_cv(table, biomarker, Method::fixed_alpha(family, fixed_rate_per_day), options),
      run_cv(table, biomarker, Method::no_decay(), options),
  };
}

namespace {
std::string opt(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }
}  // namespace

std::string report_csv(std::span<const MetricReport> reports) {
  std::ostringstream os;
  os << "biomarker,method,family,fold,auroc,auprc,alpha_hat\n";
  for (const auto& r : reports) {
    const std::string prefix = std::string(cohort::to_string(r.biomarker)) + "," + method_name(r.method.kind) + "," +
                               family_label(r.method) + ",";
    for (const auto& f : r.per_fold) {
      os << prefix << f.fold << "," << format_double(f.auroc) << "," << format_double(f.auprc) << ","
         << opt(f.learned_rate_per_day) << "\n";
    }
    os << prefix << "mean," << format_double(r.mean_auroc) << "," << format_double(r.mean_auprc) << ","
       << opt(r.mean_learned_rate) << "\n";
  }
  return os.str();
}

std::string summary_table(std::span<const MetricReport> reports) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof(line), "%-13s %-21s %-12s %7s %7s %9s\n", "Biomarker", "Method", "Family", "AUROC",
                "AUPRC", "rate/day");
  os << line;
  for (const auto& r : reports) {
    std::string rate = r.mean_learned_rate ? std::to_string(*r.mean_learned_rate).substr(0, 7) : "-";
    std::snprintf(line, sizeof(line), "%-13s %-21s %-12s %7.3f %7.3f %9s\n",
                  std::string(cohort::to_string(r.biomarker)).c_str(), method_name(r.method.kind).c_str(),
                  family_label(r.method).c_str(), r.mean_auroc, r.mean_auprc, rate.c_str());
    os << line;
  }
  return os.str();
}

std::string weight_curve_csv(std::span<const MetricReport> reports, double window_days) {
  std::ostringstream os;
  os << "family,alpha_hat,delta_t_days,weight\n";
  for (const auto& r : reports) {
    if (!r.mean_learned_rate || r.method.kind == MethodKind::RandomForest || r.method.kind == MethodKind::NoDecay) continue;
    const double rate = *r.mean_learned_rate;
    decay::DecayParam p{rate > 0.0 ? decay::inverse_softplus(rate) : -745.0, r.method.family};
    const auto steps = static_cast<int>(std::floor(window_days * 2.0 + 1e-9));
    for (int i = 0; i <= steps; ++i) {
      double dt = 0.5 * i;
      os << decay::to_string(r.method.family) << "," << format_double(rate) << "," << format_double(dt) << ","
         << format_double(decay::weight(p, dt)) << "\n";
    }
  }
  return os.str();
}

}  // namespace tdl::eval
