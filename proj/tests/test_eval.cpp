#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "support.hpp"
#include "tdl/eval.hpp"
#include "tdl/synth.hpp"

using namespace tdl;
using namespace tdl::eval;

namespace {

double auroc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

double auprc_oracle(const std::vector<double>& s, const std::vector<int>& y) {
  std::vector<double> thresholds = s;
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());
  double npos = 0.0;
  for (int v : y) npos += v;
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, fp = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i)
      if (s[i] >= t) (y[i] ? tp : fp) += 1.0;
    double recall = tp / npos;
    ap += (recall - prev_recall) * (tp / (tp + fp));
    prev_recall = recall;
  }
  return ap;
}

void random_instance(Rng& rng, std::size_t n, std::vector<double>& s, std::vector<int>& y) {
  s.resize(n);
  y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = rng.bernoulli(0.4) ? 1 : 0;
    s[i] = rng.bernoulli(0.3) ? std::round(rng.normal() * 2.0) : rng.normal() + 0.5 * y[i];
  }
  y[0] = 1;
  y[1] = 0;
}

synth::SynthCohort small_cohort(std::uint64_t seed, int n = 40) {
  synth::SynthCohortConfig c;
  c.n_subjects = n;
  c.segments_min = 4;
  c.segments_max = 6;
  c.class_separation = 1.5;
  c.seed = seed;
  return synth::gen_cohort(c);
}

CvOptions quick_options(std::uint64_t seed) {
  CvOptions o;
  o.k = 4;
  o.seed = seed;
  o.train.epochs = 8;
  o.train.batch_size = 32;
  o.forest.n_trees = 5;
  return o;
}

}  // namespace

TEST_SUITE("eval") {
  TEST_CASE("auroc examples") {
    std::vector<double> s{0.9, 0.8, 0.1, 0.2};
    std::vector<int> y{1, 1, 0, 0};
    CHECK(auroc(s, y) == 1.0);
    std::vector<double> flat(4, 0.3);
    CHECK(auroc(flat, y) == 0.5);
    std::vector<int> one{1, 1, 1, 1};
    try {
      auroc(s, one);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::UndefinedMetric);
    }
  }

  TEST_CASE("auprc examples") {
    std::vector<double> s{0.9, 0.8, 0.1, 0.2};
    std::vector<int> y{1, 1, 0, 0};
    CHECK(auprc(s, y) == 1.0);
    std::vector<double> flat(5, 1.0);
    std::vector<int> y5{1, 0, 0, 1, 0};
    CHECK(auprc(flat, y5) == doctest::Approx(0.4).epsilon(1e-15));
    std::vector<int> none(4, 0);
    CHECK_THROWS_AS(auprc(s, none), Error);
  }

  TEST_CASE("metrics match brute-force oracles") {
    Rng rng(51);
    std::vector<double> s;
    std::vector<int> y;
    for (int t = 0; t < 300; ++t) {
      random_instance(rng, 2 + rng.below(199), s, y);
      CHECK(std::abs(auroc(s, y) - auroc_oracle(s, y)) <= 1e-12);
      CHECK(std::abs(auprc(s, y) - auprc_oracle(s, y)) <= 1e-12);
    }
  }

  TEST_CASE("auroc is invariant to monotone transforms and complements") {
    Rng rng(52);
    std::vector<double> s;
    std::vector<int> y;
    for (int t = 0; t < 100; ++t) {
      random_instance(rng, 50, s, y);
      std::vector<double> m(s.size()), neg(s.size());
      std::vector<int> flipped(y.size());
      for (std::size_t i = 0; i < s.size(); ++i) {
        m[i] = std::exp(0.5 * s[i]) + 3.0;
        neg[i] = -s[i];
        flipped[i] = 1 - y[i];
      }
      CHECK(auroc(m, y) == doctest::Approx(auroc(s, y)).epsilon(1e-12));
      CHECK(auroc(neg, flipped) == doctest::Approx(auroc(s, y)).epsilon(1e-12));
      CHECK(auroc(s, flipped) == doctest::Approx(1.0 - auroc(s, y)).epsilon(1e-12));
    }
  }

  TEST_CASE("subject aggregation") {
    std::vector<SegmentScore> rows{{"b", 1.0, 1}, {"a", 5.0, 0}, {"b", 3.0, 1}};
    auto out = aggregate_subject(rows);
    REQUIRE(out.size() == 2);
    CHECK(out[0].subject_id == "a");
    CHECK(out[0].mean_logit == 5.0);
    CHECK(out[1].mean_logit == 2.0);
    CHECK(out[1].n_segments == 2);
    rows.push_back({"a", 0.0, 1});
    CHECK_THROWS_AS(aggregate_subject(rows), Error);
  }

  TEST_CASE("method names") {
    for (auto k : {MethodKind::Ours, MethodKind::RandomForest, MethodKind::FixedAlpha, MethodKind::NoDecay})
      CHECK(parse_method(method_name(k)) == k);
    CHECK(family_label(Method::random_forest()) == "none");
    CHECK(family_label(Method::no_decay()) == "none");
    CHECK(family_label(Method::ours(decay::DecayFamily::Inverse)) == "inverse");
  }

  TEST_CASE("rows_for filters by biomarker") {
    auto c = small_cohort(1);
    CHECK(rows_for(c.rows, cohort::Biomarker::LDL).size() == c.rows.size());
    CHECK_THROWS_AS(rows_for(c.rows, cohort::Biomarker::Sodium), Error);
  }

  TEST_CASE("fold plans partition subjects with no overlap") {
    auto c = small_cohort(2);
    auto plan = plan_folds(c.rows, 4, 9, 0.15);
    std::set<std::string> tested;
    for (const auto& s : plan.splits) {
      std::set<std::string> test(s.test_subjects.begin(), s.test_subjects.end());
      for (const auto& id : s.train_subjects) CHECK(test.count(id) == 0);
      for (const auto& id : s.valid_subjects) CHECK(test.count(id) == 0);
      CHECK_FALSE(s.valid_subjects.empty());
      CHECK(s.train_subjects.size() + s.valid_subjects.size() + s.test_subjects.size() == 40);
      for (const auto& id : s.test_subjects) CHECK(tested.insert(id).second);
    }
    CHECK(tested.size() == 40);
    CHECK(plan_folds(c.rows, 4, 9, 0.15).assignment.digest() == plan.assignment.digest());
  }

  TEST_CASE("too few subjects per class") {
    auto c = small_cohort(3, 10);
    try {
      plan_folds(c.rows, 6, 1, 0.15);
      FAIL("expected error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::InsufficientData);
    }
  }

  TEST_CASE("holdout keeps every subject") {
    auto c = small_cohort(4);
    auto h = holdout_split(c.rows, 3, 0.15);
    CHECK(h.test_subjects.empty());
    CHECK(h.train_subjects.size() + h.valid_subjects.size() == 40);
    CHECK(h.valid_subjects.size() == 6);
  }

  TEST_CASE("training never reads test rows") {
    auto c = small_cohort(5);
    auto plan = plan_folds(c.rows, 4, 1, 0.15);
    const auto& split = plan.splits[0];
    std::set<std::string> test(split.test_subjects.begin(), split.test_subjects.end());
    auto poisoned = c.rows;
    for (auto& r : poisoned)
      if (test.count(r.subject_id)) {
        r.features.fill(1e6);
        r.label = 1 - r.label;
        r.delta_t_days = 29.0;
      }
    auto opts = quick_options(1);
    for (auto m : {Method::ours(decay::DecayFamily::Linear), Method::random_forest()}) {
      auto a = train_fold(c.rows, split, m, opts, cohort::Biomarker::LDL);
      auto b = train_fold(poisoned, split, m, opts, cohort::Biomarker::LDL);
      CHECK(a.imputer.medians() == b.imputer.medians());
      for (const auto& r : c.rows) CHECK(a.score(r.features) == b.score(r.features));
    }
  }

  TEST_CASE("test scores ignore time gaps") {
    auto c = small_cohort(6);
    auto plan = plan_folds(c.rows, 4, 1, 0.15);
    auto opts = quick_options(2);
    auto m = train_fold(c.rows, plan.splits[1], Method::ours(decay::DecayFamily::Linear), opts, cohort::Biomarker::LDL);
    auto shifted = c.rows;
    for (auto& r : shifted) r.delta_t_days = 0.0;
    auto a = evaluate_fold(c.rows, plan.splits[1], m);
    auto b = evaluate_fold(shifted, plan.splits[1], m);
    CHECK(a.auroc == b.auroc);
    CHECK(a.auprc == b.auprc);
  }

  TEST_CASE("cross-validation shares folds across methods and is reproducible") {
    auto c = small_cohort(7);
    auto opts = quick_options(3);
    auto ours = run_cv(c.rows, cohort::Biomarker::LDL, Method::ours(decay::DecayFamily::Linear), opts);
    auto nd = run_cv(c.rows, cohort::Biomarker::LDL, Method::no_decay(), opts);
    auto rf = run_cv(c.rows, cohort::Biomarker::LDL, Method::random_forest(), opts);
    CHECK(ours.fold_digest == nd.fold_digest);
    CHECK(ours.fold_digest == rf.fold_digest);
    CHECK(ours.per_fold.size() == 4);
    double mean = 0.0;
    for (const auto& f : ours.per_fold) {
      mean += f.auroc / 4.0;
      CHECK(f.learned_rate_per_day.has_value());
    }
    CHECK(ours.mean_auroc == doctest::Approx(mean).epsilon(1e-12));
    CHECK_FALSE(nd.per_fold[0].learned_rate_per_day.has_value());
    CHECK_FALSE(rf.mean_learned_rate.has_value());
    CHECK(ours.config_hash != nd.config_hash);

    opts.jobs = 3;
    auto again = run_cv(c.rows, cohort::Biomarker::LDL, Method::ours(decay::DecayFamily::Linear), opts);
    CHECK(again.mean_auroc == ours.mean_auroc);
    CHECK(again.config_hash == ours.config_hash);
    std::vector<MetricReport> a{ours}, b{again};
    CHECK(report_csv(a) == report_csv(b));
  }

  TEST_CASE("compare and ablate shapes") {
    auto c = small_cohort(8);
    auto opts = quick_options(4);
    auto cmp = compare_decays(c.rows, cohort::Biomarker::LDL, opts);
    REQUIRE(cmp.size() == 4);
    for (const auto& r : cmp) CHECK(r.fold_digest == cmp[0].fold_digest);
    auto ab = ablate(c.rows, cohort::Biomarker::LDL, decay::DecayFamily::Linear, 0.5, opts);
    REQUIRE(ab.size() == 3);
    CHECK(ab[1].mean_learned_rate.value() == doctest::Approx(0.5).epsilon(1e-12));
    auto csv = report_csv(ab);
    CHECK(csv.rfind("biomarker,method,family,fold,auroc,auprc,alpha_hat\n", 0) == 0);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 5);
    auto curves = weight_curve_csv(cmp);
    CHECK(curves.rfind("family,alpha_hat,delta_t_days,weight\n", 0) == 0);
    CHECK(std::count(curves.begin(), curves.end(), '\n') == 1 + 4 * 61);
    CHECK_FALSE(summary_table(ab).empty());
  }

  TEST_CASE("parallel_for visits every index and rethrows") {
    std::vector<int> hit(50, 0);
    parallel_for(50, 4, [&](std::size_t i) { hit[i]++; });
    for (int h : hit) CHECK(h == 1);
    CHECK_THROWS_AS(parallel_for(10, 2, [](std::size_t i) {
                      if (i == 7) throw Error(ErrorKind::Numeric, "boom");
                    }),
                    Error);
  }
}
