#include <doctest.h>

#include <cmath>
#include <fstream>

#include "support.hpp"
#include "tdl/eval.hpp"
#include "tdl/io.hpp"
#include "tdl/synth.hpp"

using namespace tdl;
using namespace tdl::io;

namespace {

void expect_io_error(const std::function<void()>& fn, const std::string& fragment) {
  try {
    fn();
    FAIL("expected an I/O error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Io);
    CHECK(std::string(e.what()).find(fragment) != std::string::npos);
  }
}

}  // namespace

TEST_SUITE("io") {
  TEST_CASE("labs and segment metadata round-trip") {
    auto dir = test_support::scratch("io-labs");
    std::vector<cohort::LabRecord> labs{{"a", cohort::Biomarker::Potassium, 4.125, 1.6e9},
                                        {"b", cohort::Biomarker::HbA1C, 0.1, 1.6e9 + 0.5}};
    write_file(dir / "labs.csv", labs_csv(labs));
    auto back = read_labs(dir / "labs.csv");
    REQUIRE(back.size() == 2);
    CHECK(back[0].biomarker == cohort::Biomarker::Potassium);
    CHECK(back[1].value == 0.1);
    CHECK(back[1].drawn_at == 1.6e9 + 0.5);

    std::vector<cohort::SegmentMeta> segs{{"a", "a-1", 123.25}};
    write_file(dir / "segs.csv", segment_meta_csv(segs));
    auto s = read_segment_meta(dir / "segs.csv");
    REQUIRE(s.size() == 1);
    CHECK(s[0].segment_id == "a-1");
    CHECK(s[0].median_timestamp == 123.25);
  }

  TEST_CASE("malformed rows report file and line") {
    auto dir = test_support::scratch("io-bad");
    write_file(dir / "labs.csv", "subject_id,biomarker,value,drawn_at_unix\na,LDL,1.0,5\nb,LDL,oops,5\n");
    expect_io_error([&] { read_labs(dir / "labs.csv"); }, "labs.csv:3");
    write_file(dir / "labs2.csv", "subject_id,biomarker,value,drawn_at_unix\na,Glucose,1.0,5\n");
    expect_io_error([&] { read_labs(dir / "labs2.csv"); }, "labs2.csv:2");
    expect_io_error([&] { read_labs(dir / "missing.csv"); }, "missing.csv");
  }

  TEST_CASE("raw streams round-trip as CSV and binary") {
    auto dir = test_support::scratch("io-raw");
    synth::WaveformConfig cfg;
    cfg.noise_std = 0.05;
    auto s = synth::gen_waveform(cfg, 12.0);
    s.subject_id = "x1";
    write_file(dir / "streams.csv", raw_csv({s}));
    auto csv = read_raw_csv(dir / "streams.csv");
    REQUIRE(csv.size() == 1);
    CHECK(csv[0].samples == s.samples);
    CHECK(csv[0].start_timestamp == s.start_timestamp);

    auto bin_dir = dir / "bin";
    std::filesystem::create_directories(bin_dir);
    write_raw_binary(bin_dir / "x1.json", s);
    auto bin = read_raw_binary(bin_dir / "x1.json");
    CHECK(bin.subject_id == "x1");
    REQUIRE(bin.samples.size() == s.samples.size());
    for (std::size_t i = 0; i < s.samples.size(); ++i) CHECK(bin.samples[i] == static_cast<double>(static_cast<float>(s.samples[i])));
    CHECK(read_raw(bin_dir).size() == 1);
    CHECK(read_raw(dir / "streams.csv").size() == 1);
  }

  TEST_CASE("jsonl segment formats round-trip") {
    std::vector<cohort::LabeledSegment> labeled(2);
    labeled[0].meta = {"a", "a-0", 1.6e9 + 3.5};
    labeled[0].biomarker = cohort::Biomarker::WBC;
    labeled[0].delta_t_days = 2.25;
    labeled[0].label = 1;
    labeled[0].lab_value = 9.75;
    labeled[1].meta = {"b", "b-0", 1.6e9};
    auto dir = test_support::scratch("io-jsonl");
    write_file(dir / "l.jsonl", labeled_jsonl(labeled));
    CHECK(read_labeled_jsonl(dir / "l.jsonl") == labeled);

    signal::Segment seg = test_support::make_segment({0.5, -1.25, 3.0});
    write_file(dir / "s.jsonl", segments_jsonl({seg}));
    auto back = read_segments_jsonl(dir / "s.jsonl");
    REQUIRE(back.size() == 1);
    CHECK(back[0].samples == seg.samples);
    CHECK(back[0].meta.segment_id == seg.meta.segment_id);
    CHECK(back[0].sample_rate_hz == 25.0);
  }

  TEST_CASE("feature tables round-trip including failures") {
    synth::SynthCohortConfig c;
    c.n_subjects = 10;
    auto co = synth::gen_cohort(c);
    auto rows = co.rows;
    rows[3].features = features::failed_features();
    auto dir = test_support::scratch("io-features");
    write_file(dir / "f.csv", features_csv(rows));
    auto back = read_features_csv(dir / "f.csv");
    REQUIRE(back.size() == rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      CHECK(back[i].segment_id == rows[i].segment_id);
      CHECK(back[i].delta_t_days == rows[i].delta_t_days);
      CHECK(back[i].label == rows[i].label);
      for (std::size_t j = 0; j < features::kNumFeatures; ++j) {
        if (std::isnan(rows[i].features[j])) CHECK(std::isnan(back[i].features[j]));
        else CHECK(back[i].features[j] == rows[i].features[j]);
      }
    }
    CHECK(features_csv(back) == features_csv(rows));
  }

  TEST_CASE("checkpoints round-trip exactly") {
    Checkpoint cp;
    cp.scorer.params = model::init(3);
    cp.scorer.params.values[model::ScorerParams::kB2] = -0.125;
    for (std::size_t j = 0; j < features::kNumFeatures; ++j) {
      cp.scorer.standardizer.mean[j] = 0.1 * static_cast<double>(j);
      cp.scorer.standardizer.scale[j] = 1.0 / (1.0 + static_cast<double>(j));
      cp.imputer_medians[j] = -static_cast<double>(j) / 3.0;
    }
    cp.raw_alpha = -1.75;
    cp.family = decay::DecayFamily::CosineAnnealing;
    cp.mode = model::TrainMode::FixedAlpha;
    cp.biomarker = "Sodium";
    cp.config_hash = 0xfeedbeefcafe1234ULL;
    auto dir = test_support::scratch("io-ckpt");
    write_file(dir / "c.json", checkpoint_json(cp));
    auto back = read_checkpoint(dir / "c.json");
    CHECK(back.scorer.params == cp.scorer.params);
    CHECK(back.scorer.standardizer == cp.scorer.standardizer);
    CHECK(back.imputer_medians == cp.imputer_medians);
    CHECK(back.raw_alpha == cp.raw_alpha);
    CHECK(back.family == cp.family);
    CHECK(back.mode == cp.mode);
    CHECK(back.biomarker == "Sodium");
    CHECK(back.config_hash == cp.config_hash);
    CHECK(checkpoint_json(back) == checkpoint_json(cp));
  }

  TEST_CASE("forests round-trip") {
    baseline::Forest f;
    baseline::DecisionTree t;
    t.nodes.push_back({3, 0.25, 1, 2, 0.5});
    t.nodes.push_back({-1, 0.0, -1, -1, 0.2});
    t.nodes.push_back({-1, 0.0, -1, -1, 0.875});
    f.trees.push_back(t);
    auto back = parse_forest_json(forest_json(f));
    REQUIRE(back.trees.size() == 1);
    features::FeatureVector x{};
    x[3] = 1.0;
    CHECK(baseline::predict_proba(back, x) == 0.875);
    x[3] = 0.0;
    CHECK(baseline::predict_proba(back, x) == 0.2);
    CHECK(forest_json(back) == forest_json(f));
  }

  TEST_CASE("loss trace columns") {
    std::vector<model::EpochTrace> tr{{1, 0.7, 0.9, 0.25, 0.1, std::nan("")}};
    auto csv = loss_trace_csv(tr);
    CHECK(csv.rfind("epoch,weighted_bce,mean_weight,total,alpha_hat", 0) == 0);
  }

  TEST_CASE("ensure_dir rejects a path under a regular file") {
    auto dir = test_support::scratch("io-dir");
    write_file(dir / "file", "x");
    CHECK_THROWS_AS(ensure_dir(dir / "file" / "sub"), Error);
    ensure_dir(dir / "a" / "b");
    CHECK(std::filesystem::is_directory(dir / "a" / "b"));
    CHECK(file_digest(dir / "file") == fnv1a64("x"));
  }
}
