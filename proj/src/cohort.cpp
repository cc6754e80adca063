#include "tdl/cohort.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <unordered_map>

#include "tdl/common.hpp"

namespace tdl::cohort {

namespace {

constexpr std::array<std::string_view, 10> kNames{
    "LDL", "Triglyceride", "HbA1C", "Hemoglobin", "CO2", "Chloride", "Potassium", "Sodium", "WBC", "Platelets",
};

}  // namespace

std::string_view to_string(Biomarker b) { return kNames[static_cast<std::size_t>(b)]; }

std::optional<Biomarker> parse_biomarker(std::string_view name) {
  std::string wanted = to_lower(trim(name));
  for (std::size_t i = 0; i < kNames.size(); ++i) {
    if (to_lower(kNames[i]) == wanted) return static_cast<Biomarker>(i);
  }
  return std::nullopt;
}

std::vector<LabeledSegment> attach_labels(const std::vector<SegmentMeta>& segments, const std::vector<LabRecord>& labs,
                                          Biomarker biomarker, double window_days) {
  if (!(window_days > 0.0)) throw Error(ErrorKind::InvalidArgument, "attach_labels: window_days must be > 0");

  std::vector<std::string> rejected;
  for (const auto& s : segments) {
    if (!(s.median_timestamp > 0.0) || !std::isfinite(s.median_timestamp)) rejected.push_back("segment:" + s.segment_id);
  }
  for (const auto& lab : labs) {
    if (lab.biomarker != biomarker) continue;
    if (!(lab.drawn_at > 0.0) || !std::isfinite(lab.drawn_at) || !std::isfinite(lab.value)) {
      rejected.push_back("lab:" + lab.subject_id);
    }
  }
  if (!rejected.empty()) {
    std::string msg = "rejected records with non-positive timestamps or non-finite values:";
    for (const auto& id : rejected) msg += " " + id;
    throw Error(ErrorKind::RejectedRecords, msg);
  }

  std::unordered_map<std::string, std::vector<const LabRecord*>> by_subject;
  for (const auto& lab : labs) {
    if (lab.biomarker == biomarker) by_subject[lab.subject_id].push_back(&lab);
  }
  for (auto& [_, list] : by_subject) {
    std::stable_sort(list.begin(), list.end(),
                     [](const LabRecord* a, const LabRecord* b) { return a->drawn_at < b->drawn_at; });
  }

  std::vector<LabeledSegment> out;
  for (const auto& seg : segments) {
    auto it = by_subject.find(seg.subject_id);
    if (it == by_subject.end()) continue;
    const auto& list = it->second;
    // First lab drawn at or after the segment; the candidate set is that lab and its predecessor.
    auto pos = std::lower_bound(list.begin(), list.end(), seg.median_timestamp,
                                [](const LabRecord* lab, double t) { return lab->drawn_at < t; });
    const LabRecord* best = nullptr;
    double best_gap = 0.0;
    if (pos != list.begin()) {
      best = *(pos - 1);
      best_gap = seg.median_timestamp - best->drawn_at;
    }
    if (pos != list.end()) {
      double gap = (*pos)->drawn_at - seg.median_timestamp;
      // Strict comparison keeps the earlier lab on ties.
      if (best == nullptr || gap < best_gap) {
        best = *pos;
        best_gap = gap;
      }
    }
    double days = std::abs(best_gap) / kSecondsPerDay;
    if (days > window_days) continue;
    LabeledSegment ls;
    ls.meta = seg;
    ls.biomarker = biomarker;
    ls.delta_t_days = days;
    ls.label = 0;
    ls.lab_value = best->value;
    out.push_back(std::move(ls));
  }
  return out;
}

LabClass QuantileThresholds::classify(double value) const {
  if (degenerate()) return LabClass::Excluded;
  if (value >= upper) return LabClass::Positive;
  if (value <= lower) return LabClass::Negative;
  return LabClass::Excluded;
}

double interpolated_quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::InsufficientData, "quantile of empty list");
  std::sort(values.begin(), values.end());
  double h = (static_cast<double>(values.size()) - 1.0) * q;
  auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

QuantileThresholds quantile_thresholds(const std::vector<double>& values, double lower_q, double upper_q) {
  if (values.size() < 4) {
    throw Error(ErrorKind::InsufficientData,
                "quantile labelling needs at least 4 lab values, got " + std::to_string(values.size()));
  }
  if (!(0.0 <= lower_q && lower_q <= upper_q && upper_q <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "quantile labelling: need 0 <= lower_q <= upper_q <= 1");
  }
  return {interpolated_quantile(values, lower_q), interpolated_quantile(values, upper_q)};
}

std::vector<LabClass> quantile_label(const std::vector<LabRecord>& labs, double lower_q, double upper_q) {
  std::vector<double> values;
  values.reserve(labs.size());
  for (const auto& lab : labs) values.push_back(lab.value);
  QuantileThresholds t = quantile_thresholds(values, lower_q, upper_q);
  std::vector<LabClass> out;
  out.reserve(values.size());
  for (double v : values) out.push_back(t.classify(v));
  return out;
}

std::vector<LabeledSegment> assign_labels(const std::vector<LabeledSegment>& segments,
                                          const QuantileThresholds& thresholds) {
  std::vector<LabeledSegment> out;
  for (const auto& s : segments) {
    LabClass c = thresholds.classify(s.lab_value);
    if (c == LabClass::Excluded) continue;
    LabeledSegment copy = s;
    copy.label = c == LabClass::Positive ? 1 : 0;
    out.push_back(std::move(copy));
  }
  return out;
}

std::vector<LabeledSegment> cap_segments(const std::vector<LabeledSegment>& segments, std::uint64_t seed) {
  // (biomarker, subject) -> indices into segments, in input order
  std::map<std::pair<int, std::string>, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    groups[{static_cast<int>(segments[i].biomarker), segments[i].meta.subject_id}].push_back(i);
  }
  std::map<int, std::vector<std::size_t>> counts;
  for (const auto& [key, idx] : groups) counts[key.first].push_back(idx.size());
  std::map<int, std::size_t> cap;
  for (const auto& [b, c] : counts) cap[b] = lower_median(c);

  std::vector<char> keep(segments.size(), 1);
  for (auto& [key, idx] : groups) {
    std::size_t limit = cap[key.first];
    if (idx.size() <= limit) continue;
    // Order within the group by segment id so the draw ignores input order.
    std::vector<std::size_t> order = idx;
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return segments[a].meta.segment_id < segments[b].meta.segment_id;
    });
    Rng rng(derive_seed(seed, std::string(to_string(static_cast<Biomarker>(key.first))) + "/" + key.second));
    // Partial Fisher-Yates: the first `limit` slots are the uniform subsample.
    for (std::size_t i = 0; i < limit; ++i) {
      std::size_t j = i + rng.below(order.size() - i);
      std::swap(order[i], order[j]);
    }
    for (std::size_t i = limit; i < order.size(); ++i) keep[order[i]] = 0;
  }
  std::vector<LabeledSegment> out;
  for (std::size_t i = 0; i < segments.size(); ++i) {
    if (keep[i]) out.push_back(segments[i]);
  }
  return out;
}

std::vector<SubjectLabel> subject_majority_labels(const std::vector<LabeledSegment>& segments) {
  std::map<std::string, std::pair<int, int>> tally;  // (negatives, positives)
  for (const auto& s : segments) {
    auto& t = tally[s.meta.subject_id];
    (s.label ? t.second : t.first) += 1;
  }
  std::vector<SubjectLabel> out;
  for (const auto& [id, t] : tally) out.push_back({id, t.second >= t.first ? 1 : 0});
  return out;
}

std::vector<std::string> FoldAssignment::subjects_in(int fold) const {
  std::vector<std::string> out;
  for (const auto& [id, f] : fold_of) {
    if (f == fold) out.push_back(id);
  }
  return out;
}

std::uint64_t FoldAssignment::digest() const {
  std::uint64_t h = fnv1a64("k=" + std::to_string(k));
  for (const auto& [id, f] : fold_of) h = fnv1a64(id + "=" + std::to_string(f) + ";", h);
  return h;
}

FoldAssignment stratified_folds(const std::vector<SubjectLabel>& subjects, int k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorKind::InvalidArgument, "stratified_folds: k must be >= 2");
  if (subjects.size() < static_cast<std::size_t>(k)) {
    throw Error(ErrorKind::InsufficientData, "stratified_folds: k=" + std::to_string(k) + " exceeds subject count " +
                                                 std::to_string(subjects.size()));
  }
  std::vector<SubjectLabel> sorted = subjects;
  std::sort(sorted.begin(), sorted.end(),
            [](const SubjectLabel& a, const SubjectLabel& b) { return a.subject_id < b.subject_id; });
  for (std::size_t i = 1; i < sorted.size(); ++i) {
    if (sorted[i].subject_id == sorted[i - 1].subject_id) {
      throw Error(ErrorKind::InvalidArgument, "stratified_folds: duplicate subject " + sorted[i].subject_id);
    }
  }
  Rng rng(seed);
  rng.shuffle(sorted);

  FoldAssignment out;
  out.k = k;
  std::size_t deal = 0;
  for (int stratum : {1, 0}) {
    for (const auto& s : sorted) {
      if ((s.label ? 1 : 0) != stratum) continue;
      out.fold_of[s.subject_id] = static_cast<int>(deal % static_cast<std::size_t>(k));
      ++deal;
    }
  }
  return out;
}

}  // namespace tdl::cohort
