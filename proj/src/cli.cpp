#include "tdl/cli.hpp"

#include <chrono>
#include <ctime>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "tdl/common.hpp"
#include "tdl/io.hpp"
#include "tdl/kernels.hpp"
#include "tdl/signal.hpp"

namespace tdl::cli {

using nlohmann::json;
namespace fs = std::filesystem;

const std::vector<KeySpec>& config_keys() {
  static const std::vector<KeySpec> keys = {
      // run
      {"seed", "", "run seed; required by every artifact-producing command"},
      {"out", "", "output directory"},
      {"jobs", "1", "parallel folds"},
      // inputs
      {"raw", "", "raw stream CSV file or directory of CSV / JSON-sidecar streams"},
      {"labs", "", "lab records CSV"},
      {"segments", "", "processed segments JSON-lines"},
      {"labeled", "", "labeled segments JSON-lines"},
      {"features", "", "feature table CSV"},
      // synth
      {"level", "features", "synth output level: features | waveform"},
      {"n_subjects", "300", "synthetic subjects"},
      {"segments_min", "8", "segments per subject, lower bound"},
      {"segments_max", "12", "segments per subject, upper bound"},
      {"true_staleness_rate", "0.15", "generative staleness rate per day"},
      {"staleness_family", "linear", "generative decay family"},
      {"class_separation", "1.0", "class-mean difference per informative feature"},
      {"feature_noise_std", "1.0", "feature noise standard deviation"},
      {"n_informative", "4", "features carrying the class signal"},
      {"waveform_recordings", "3", "recordings per subject (waveform level)"},
      {"waveform_seconds", "30", "recording length in seconds (waveform level)"},
      {"waveform_noise_std", "0.02", "additive noise (waveform level)"},
      // preprocessing
      {"sqi_threshold", "0.5", "minimum signal-quality index"},
      {"window_days", "30", "maximum segment-to-lab gap in days"},
      {"lower_quantile", "0.25", "negative class: lab values at or below this quantile"},
      {"upper_quantile", "0.75", "positive class: lab values at or above this quantile"},
      {"biomarker", "all", "biomarker name, comma list, or all"},
      // training
      {"method", "ours", "ours | rf | ablation_fixed_alpha | ablation_no_decay"},
      {"family", "linear", "decay family: linear | exponential | inverse | cosine"},
      {"fixed_rate", "0.5", "decay rate per day for ablation_fixed_alpha"},
      {"initial_rate", "0.1", "initial learned decay rate per day"},
      {"epochs", "200", "maximum training epochs"},
      {"batch_size", "256", "mini-batch size"},
      {"learning_rate", "0.001", "Adam learning rate for network weights"},
      {"alpha_learning_rate", "0.01", "Adam learning rate for the raw decay parameter"},
      {"patience", "20", "early-stopping patience in epochs"},
      {"lambda", "0.5", "mean-weight bonus coefficient"},
      {"unsafe_tune_lambda", "false", "allow lambda other than 0.5"},
      {"valid_fraction", "0.15", "training subjects held out per class for early stopping"},
      // evaluation
      {"k", "5", "cross-validation folds"},
      // random forest
      {"n_trees", "100", "trees"},
      {"max_depth", "12", "maximum tree depth"},
      {"min_leaf", "5", "minimum samples per leaf"},
      {"features_per_split", "5", "features sampled at each split"},
      {"bootstrap", "true", "bootstrap each tree's sample"},
  };
  return keys;
}

namespace {

const KeySpec* find_key(std::string_view name) {
  for (const auto& k : config_keys()) {
    if (k.name == name) return &k;
  }
  return nullptr;
}

[[noreturn]] void config_error(const std::string& message) { throw Error(ErrorKind::Config, message); }

}  // namespace

Config Config::parse(std::string_view text, std::string_view source) {
  Config c;
  std::istringstream is{std::string(text)};
  std::string line;
  int n = 0;
  while (std::getline(is, line)) {
    ++n;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    if (trim(line).empty()) continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      config_error(std::string(source) + ":" + std::to_string(n) + ": expected 'key = value'");
    }
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

void Config::set(const std::string& key, const std::string& value) {
  if (!find_key(key)) config_error("unknown config key '" + key + "'");
  values_[key] = value;
}

bool Config::has(const std::string& key) const { return values_.count(key) > 0; }

std::string Config::get(const std::string& key) const {
  if (auto it = values_.find(key); it != values_.end()) return it->second;
  const KeySpec* spec = find_key(key);
  if (!spec || spec->default_value.empty()) config_error("missing required field '" + key + "'");
  return std::string(spec->default_value);
}

std::string Config::require(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) config_error("missing required field '" + key + "'");
  return it->second;
}

long long Config::get_int(const std::string& key) const {
  auto v = parse_int(get(key));
  if (!v) config_error("field '" + key + "' must be an integer, got '" + get(key) + "'");
  return *v;
}

double Config::get_double(const std::string& key) const {
  auto v = parse_double(get(key));
  if (!v || !std::isfinite(*v)) config_error("field '" + key + "' must be a finite number, got '" + get(key) + "'");
  return *v;
}

bool Config::get_bool(const std::string& key) const {
  const std::string v = to_lower(get(key));
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  config_error("field '" + key + "' must be true or false, got '" + get(key) + "'");
}

std::uint64_t Config::get_seed() const {
  const std::string text = require("seed");
  auto v = parse_int(text);
  if (!v || *v < 0) config_error("field 'seed' must be a non-negative integer, got '" + text + "'");
  return static_cast<std::uint64_t>(*v);
}

decay::DecayFamily Config::get_family(const std::string& key) const {
  auto f = decay::parse_family(get(key));
  if (!f) config_error("unknown decay family '" + get(key) + "' for '" + key + "'; valid names: " + decay::valid_family_names());
  return *f;
}

std::map<std::string, std::string> Config::resolved() const {
  std::map<std::string, std::string> out;
  for (const auto& k : config_keys()) {
    if (!k.default_value.empty()) out[std::string(k.name)] = std::string(k.default_value);
  }
  for (const auto& [k, v] : values_) out[k] = v;
  return out;
}

std::uint64_t Config::digest() const {
  std::string canon;
  for (const auto& [k, v] : resolved()) {
    if (k == "out") continue;
    canon += k + "=" + v + "\n";
  }
  return fnv1a64(canon);
}

synth::SynthCohortConfig synth_config(const Config& c) {
  synth::SynthCohortConfig s;
  s.seed = c.get_seed();
  s.n_subjects = static_cast<int>(c.get_int("n_subjects"));
  s.segments_min = static_cast<int>(c.get_int("segments_min"));
  s.segments_max = static_cast<int>(c.get_int("segments_max"));
  s.true_staleness_rate = c.get_double("true_staleness_rate");
  s.staleness_family = c.get_family("staleness_family");
  s.window_days = c.get_double("window_days");
  s.class_separation = c.get_double("class_separation");
  s.feature_noise_std = c.get_double("feature_noise_std");
  s.n_informative = static_cast<int>(c.get_int("n_informative"));
  const std::string b = c.get("biomarker");
  if (to_lower(b) != "all") {
    auto parsed = cohort::parse_biomarker(b);
    if (!parsed) config_error("unknown biomarker '" + b + "'");
    s.biomarker = *parsed;
  }
  synth::validate(s);
  return s;
}

eval::CvOptions cv_options(const Config& c) {
  eval::CvOptions o;
  o.seed = c.get_seed();
  o.k = static_cast<int>(c.get_int("k"));
  if (o.k < 2) config_error("field 'k' must be >= 2");
  o.jobs = static_cast<int>(c.get_int("jobs"));
  if (o.jobs < 1) config_error("field 'jobs' must be >= 1");
  o.valid_fraction = c.get_double("valid_fraction");
  if (o.valid_fraction < 0.0 || o.valid_fraction >= 1.0) config_error("field 'valid_fraction' must be in [0, 1)");

  auto& t = o.train;
  t.epochs = static_cast<int>(c.get_int("epochs"));
  t.batch_size = static_cast<int>(c.get_int("batch_size"));
  t.learning_rate = c.get_double("learning_rate");
  t.alpha_learning_rate = c.get_double("alpha_learning_rate");
  t.early_stop_patience = static_cast<int>(c.get_int("patience"));
  t.initial_rate_per_day = c.get_double("initial_rate");
  t.family = c.get_family("family");
  if (t.epochs < 1) config_error("field 'epochs' must be >= 1");
  if (t.batch_size < 1) config_error("field 'batch_size' must be >= 1");
  if (!(t.learning_rate > 0.0)) config_error("field 'learning_rate' must be positive");
  if (!(t.alpha_learning_rate >= 0.0)) config_error("field 'alpha_learning_rate' must be >= 0");
  if (t.early_stop_patience < 1) config_error("field 'patience' must be >= 1");
  if (!(t.initial_rate_per_day > 0.0)) config_error("field 'initial_rate' must be positive");

  o.hp.lambda = c.get_double("lambda");
  if (o.hp.lambda != objective::kDefaultLambda && !c.get_bool("unsafe_tune_lambda")) {
    config_error("field 'lambda' is fixed at 0.5; set unsafe_tune_lambda = true to override");
  }

  auto& f = o.forest;
  f.n_trees = static_cast<int>(c.get_int("n_trees"));
  f.max_depth = static_cast<int>(c.get_int("max_depth"));
  f.min_leaf = static_cast<int>(c.get_int("min_leaf"));
  f.features_per_split = static_cast<int>(c.get_int("features_per_split"));
  f.bootstrap = c.get_bool("bootstrap");
  if (f.n_trees < 1) config_error("field 'n_trees' must be >= 1");
  if (f.max_depth < 0) config_error("field 'max_depth' must be >= 0");
  if (f.min_leaf < 1) config_error("field 'min_leaf' must be >= 1");
  if (f.features_per_split < 1 || f.features_per_split > static_cast<int>(features::kNumFeatures)) {
    config_error("field 'features_per_split' must be in [1, 34]");
  }
  return o;
}

std::vector<cohort::Biomarker> selected_biomarkers(const Config& c, std::span<const features::FeatureRow> rows) {
  const std::string spec = c.get("biomarker");
  std::vector<cohort::Biomarker> out;
  if (to_lower(trim(spec)) == "all") {
    std::set<cohort::Biomarker> present;
    for (const auto& r : rows) present.insert(r.biomarker);
    for (auto b : cohort::kAllBiomarkers) {
      if (present.count(b)) out.push_back(b);
    }
  } else {
    for (const auto& name : split(spec, ',')) {
      auto b = cohort::parse_biomarker(name);
      if (!b) config_error("unknown biomarker '" + trim(name) + "'");
      out.push_back(*b);
    }
  }
  if (out.empty()) throw Error(ErrorKind::EmptyResult, "no biomarkers to process");
  return out;
}

namespace {

std::string iso_now() {
  auto now = std::chrono::system_clock::now();
  std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

// Collects outputs of one command and writes its single manifest.
class Run {
 public:
  Run(std::string command, const Config& config, std::ostream& out)
      : command_(std::move(command)), config_(config), out_(out), started_(iso_now()) {}

  fs::path out_dir() {
    if (!dir_) {
      dir_ = fs::path(config_.require("out"));
      io::ensure_dir(*dir_);
    }
    return *dir_;
  }

  void input(const std::string& key) {
    const fs::path p = config_.require(key);
    if (!fs::exists(p)) throw Error(ErrorKind::Io, "input '" + key + "' not found: " + p.string());
    json entry = {{"key", key}, {"path", p.string()}};
    if (fs::is_regular_file(p)) {
      entry["fnv1a64"] = hex64(io::file_digest(p));
    } else {
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(p)) {
        if (e.is_regular_file()) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      std::string combined;
      for (const auto& f : files) combined += f.filename().string() + ":" + hex64(io::file_digest(f)) + "\n";
      entry["fnv1a64"] = hex64(fnv1a64(combined));
    }
    inputs_.push_back(std::move(entry));
  }

  void write(const std::string& name, const std::string& contents) {
    const fs::path p = out_dir() / name;
    if (p.has_parent_path()) io::ensure_dir(p.parent_path());
    io::write_file(p, contents);
    outputs_.push_back(p.string());
  }

  void note(const std::string& key, json value) { extra_[key] = std::move(value); }

  void finish() {
    json m;
    m["command"] = command_;
    m["tool_version"] = std::string(kToolVersion);
    m["kernel_isa"] = std::string(kernels::isa_name(kernels::active_isa()));
    m["config"] = config_.resolved();
    m["config_digest"] = hex64(config_.digest());
    m["seeds"] = {{"seed", config_.has("seed") ? config_.get("seed") : std::string()}};
    m["inputs"] = inputs_;
    m["outputs"] = outputs_;
    m["started_at"] = started_;
    m["finished_at"] = iso_now();
    for (auto& [k, v] : extra_.items()) m[k] = v;
    const fs::path p = out_dir() / "manifest.json";
    io::write_file(p, m.dump(2) + "\n");
    out_ << "wrote " << outputs_.size() << " file(s) and " << p.string() << "\n";
  }

 private:
  std::string command_;
  const Config& config_;
  std::ostream& out_;
  std::string started_;
  std::optional<fs::path> dir_;
  json inputs_ = json::array();
  json outputs_ = json::array();
  json extra_ = json::object();
};

json synth_manifest(const synth::SynthCohortConfig& s) {
  return {{"n_subjects", s.n_subjects},
          {"segments_min", s.segments_min},
          {"segments_max", s.segments_max},
          {"true_staleness_rate", s.true_staleness_rate},
          {"staleness_family", std::string(decay::to_string(s.staleness_family))},
          {"window_days", s.window_days},
          {"class_separation", s.class_separation},
          {"feature_noise_std", s.feature_noise_std},
          {"n_informative", s.n_informative},
          {"biomarker", std::string(cohort::to_string(s.biomarker))},
          {"base_timestamp", s.base_timestamp},
          {"seed", s.seed}};
}

void cmd_synth(const Config& c, std::ostream& out) {
  const auto s = synth_config(c);
  const std::string level = to_lower(c.get("level"));
  if (level != "features" && level != "waveform") config_error("field 'level' must be features or waveform");
  Run run("synth", c, out);
  run.out_dir();
  run.note("synth", synth_manifest(s));
  if (level == "features") {
    const auto cohort = synth::gen_cohort(s);
    std::vector<cohort::SegmentMeta> metas;
    std::string truth = "segment_id,delta_t_days,fresh,feature_class,label\n";
    for (std::size_t i = 0; i < cohort.segments.size(); ++i) {
      metas.push_back(cohort.segments[i].meta);
      truth += cohort.rows[i].segment_id + "," + format_double(cohort.rows[i].delta_t_days) + "," +
               (cohort.fresh[i] ? "1" : "0") + "," + std::to_string(cohort.feature_class[i]) + "," +
               std::to_string(cohort.rows[i].label) + "\n";
    }
    run.write("labs.csv", io::labs_csv(cohort.labs));
    run.write("segments.csv", io::segment_meta_csv(metas));
    run.write("labeled.jsonl", io::labeled_jsonl(cohort.segments));
    run.write("features.csv", io::features_csv(cohort.rows));
    run.write("truth.csv", truth);
    run.note("counts", {{"subjects", s.n_subjects}, {"segments", cohort.segments.size()}});
    out << "synth: " << s.n_subjects << " subjects, " << cohort.segments.size() << " segments\n";
  } else {
    synth::WaveformCohortConfig w;
    w.recordings_per_subject = static_cast<int>(c.get_int("waveform_recordings"));
    w.recording_seconds = c.get_double("waveform_seconds");
    w.noise_std = c.get_double("waveform_noise_std");
    if (w.noise_std < 0.0) config_error("field 'waveform_noise_std' must be >= 0");
    const auto cohort = synth::gen_waveform_cohort(s, w);
    std::string truth = "stream,subject_id,start_ts_unix,fresh\n";
    for (std::size_t i = 0; i < cohort.streams.size(); ++i) {
      truth += std::to_string(i) + "," + cohort.streams[i].subject_id + "," +
               format_double(cohort.streams[i].start_timestamp) + "," + (cohort.fresh[i] ? "1" : "0") + "\n";
    }
    run.write("labs.csv", io::labs_csv(cohort.labs));
    run.write("raw/streams.csv", io::raw_csv(cohort.streams));
    run.write("truth.csv", truth);
    run.note("counts", {{"subjects", s.n_subjects}, {"streams", cohort.streams.size()}});
    out << "synth: " << s.n_subjects << " subjects, " << cohort.streams.size() << " raw streams\n";
  }
  run.finish();
}

struct StageRow {
  std::string stage;
  std::size_t input = 0;
  std::size_t retained = 0;
};

std::string stage_table(const std::vector<StageRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "stage" << std::right << std::setw(10) << "input" << std::setw(10) << "retained"
     << std::setw(10) << "dropped" << "\n";
  for (const auto& r : rows) {
    os << std::left << std::setw(28) << r.stage << std::right << std::setw(10) << r.input << std::setw(10) << r.retained
       << std::setw(10) << (r.input - r.retained) << "\n";
  }
  return os.str();
}

void cmd_preprocess(const Config& c, std::ostream& out) {
  const double sqi_threshold = c.get_double("sqi_threshold");
  const double window = c.get_double("window_days");
  const double lo_q = c.get_double("lower_quantile");
  const double hi_q = c.get_double("upper_quantile");
  if (!(window >= 0.0)) config_error("field 'window_days' must be >= 0");
  if (!(0.0 <= lo_q && lo_q < hi_q && hi_q <= 1.0)) config_error("quantiles must satisfy 0 <= lower < upper <= 1");
  const std::uint64_t seed = c.get_seed();

  Run run("preprocess", c, out);
  run.input("raw");
  run.input("labs");
  const auto streams = io::read_raw(c.require("raw"));
  const auto labs = io::read_labs(c.require("labs"));

  std::vector<StageRow> stages;
  std::vector<signal::Segment> processed;
  std::size_t n_segments = 0;
  for (const auto& stream : streams) {
    signal::PreprocessCounts counts;
    auto segs = signal::preprocess_stream(stream, sqi_threshold, &counts);
    n_segments += counts.segments;
    std::move(segs.begin(), segs.end(), std::back_inserter(processed));
  }
  stages.push_back({"sqi", n_segments, processed.size()});

  std::vector<cohort::SegmentMeta> metas;
  for (const auto& s : processed) metas.push_back(s.meta);

  std::vector<cohort::Biomarker> biomarkers;
  {
    std::vector<features::FeatureRow> probe;
    for (const auto& l : labs) {
      features::FeatureRow r;
      r.biomarker = l.biomarker;
      probe.push_back(r);
    }
    biomarkers = selected_biomarkers(c, probe);
  }

  std::vector<cohort::LabeledSegment> labeled;
  for (auto b : biomarkers) {
    const std::string name(cohort::to_string(b));
    auto attached = cohort::attach_labels(metas, labs, b, window);
    stages.push_back({name + " window", metas.size(), attached.size()});
    std::vector<double> values;
    for (const auto& l : labs) {
      if (l.biomarker == b) values.push_back(l.value);
    }
    if (values.size() < 4) {
      stages.push_back({name + " quantile", attached.size(), 0});
      continue;
    }
    auto thresholds = cohort::quantile_thresholds(values, lo_q, hi_q);
    auto kept = cohort::assign_labels(attached, thresholds);
    stages.push_back({name + " quantile", attached.size(), kept.size()});
    auto capped = cohort::cap_segments(kept, seed);
    stages.push_back({name + " cap", kept.size(), capped.size()});
    std::move(capped.begin(), capped.end(), std::back_inserter(labeled));
  }
  const std::string table = stage_table(stages);
  if (labeled.empty()) throw Error(ErrorKind::EmptyResult, "no eligible segments\n" + table);
  out << table;

  run.write("segments.jsonl", io::segments_jsonl(processed));
  run.write("labeled.jsonl", io::labeled_jsonl(labeled));
  std::string counts_csv = "stage,input,retained,dropped\n";
  for (const auto& s : stages) {
    counts_csv += s.stage + "," + std::to_string(s.input) + "," + std::to_string(s.retained) + "," +
                  std::to_string(s.input - s.retained) + "\n";
  }
  run.write("stage_counts.csv", counts_csv);
  run.finish();
}

void cmd_featurize(const Config& c, std::ostream& out) {
  Run run("featurize", c, out);
  run.input("segments");
  run.input("labeled");
  const auto segments = io::read_segments_jsonl(c.require("segments"));
  const auto labeled = io::read_labeled_jsonl(c.require("labeled"));
  std::map<std::string, const signal::Segment*> by_id;
  for (const auto& s : segments) by_id[s.meta.segment_id] = &s;

  std::map<std::string, features::FeatureVector> cache;
  std::vector<features::FeatureRow> rows;
  std::size_t failed = 0, missing = 0;
  for (const auto& l : labeled) {
    auto it = by_id.find(l.meta.segment_id);
    if (it == by_id.end()) {
      ++missing;
      continue;
    }
    auto [cached, inserted] = cache.try_emplace(l.meta.segment_id);
    if (inserted) {
      auto f = features::extract_features(*it->second);
      cached->second = f ? *f : features::failed_features();
    }
    features::FeatureRow r;
    r.subject_id = l.meta.subject_id;
    r.segment_id = l.meta.segment_id;
    r.biomarker = l.biomarker;
    r.delta_t_days = l.delta_t_days;
    r.label = l.label;
    r.features = cached->second;
    if (!features::is_finite(r.features)) ++failed;
    rows.push_back(std::move(r));
  }
  out << "featurize: " << rows.size() << " rows, " << failed << " failed extractions, " << missing
      << " labeled segments without samples\n";
  if (rows.empty()) throw Error(ErrorKind::EmptyResult, "no labeled segment has processed samples");
  run.write("features.csv", io::features_csv(rows));
  run.note("counts", {{"rows", rows.size()}, {"failed", failed}, {"missing", missing}});
  run.finish();
}

eval::Method method_from(const Config& c) {
  const std::string name = c.get("method");
  auto kind = eval::parse_method(name);
  if (!kind) config_error("unknown method '" + name + "'; valid: ours, rf, ablation_fixed_alpha, ablation_no_decay");
  const auto family = c.get_family("family");
  switch (*kind) {
    case eval::MethodKind::Ours:
      return eval::Method::ours(family);
    case eval::MethodKind::RandomForest:
      return eval::Method::random_forest();
    case eval::MethodKind::FixedAlpha: {
      const double rate = c.get_double("fixed_rate");
      if (!(rate > 0.0)) config_error("field 'fixed_rate' must be positive");
      return eval::Method::fixed_alpha(family, rate);
    }
    case eval::MethodKind::NoDecay:
      return eval::Method::no_decay();
  }
  return eval::Method::ours(family);
}

std::vector<features::FeatureRow> load_features(const Config& c, Run& run) {
  run.input("features");
  auto rows = io::read_features_csv(c.require("features"));
  if (rows.empty()) throw Error(ErrorKind::EmptyResult, "feature table is empty");
  return rows;
}

void cmd_train(const Config& c, std::ostream& out) {
  const auto options = cv_options(c);
  const auto method = method_from(c);
  Run run("train", c, out);
  const auto rows = load_features(c, run);
  json trained = json::array();
  for (auto b : selected_biomarkers(c, rows)) {
    const std::string name(cohort::to_string(b));
    const auto subset = eval::rows_for(rows, b);
    const auto split = eval::holdout_split(subset, options.seed, options.valid_fraction);
    const auto fm = eval::train_fold(subset, split, method, options, b);
    if (fm.forest) {
      run.write("forest_" + name + ".json", io::forest_json(*fm.forest));
      trained.push_back({{"biomarker", name}, {"method", "rf"}});
      out << name << ": forest with " << fm.forest->trees.size() << " trees\n";
      continue;
    }
    io::Checkpoint ck;
    ck.scorer = fm.network->scorer;
    ck.raw_alpha = fm.network->raw_alpha;
    ck.family = method.family;
    ck.biomarker = name;
    ck.imputer_medians = fm.imputer.medians();
    model::TrainConfig cfg = options.train;
    cfg.family = method.family;
    ck.config_hash = model::config_digest(cfg, options.hp);
    switch (method.kind) {
      case eval::MethodKind::FixedAlpha:
        ck.mode = model::TrainMode::FixedAlpha;
        break;
      case eval::MethodKind::NoDecay:
        ck.mode = model::TrainMode::NoDecay;
        break;
      default:
        ck.mode = model::TrainMode::Full;
    }
    run.write("checkpoint_" + name + ".json", io::checkpoint_json(ck));
    run.write("loss_trace_" + name + ".csv", io::loss_trace_csv(fm.network->loss_trace));
    trained.push_back({{"biomarker", name},
                       {"method", eval::method_name(method.kind)},
                       {"best_epoch", fm.network->best_epoch},
                       {"alpha_hat", fm.network->learned_rate_per_day}});
    out << name << ": best epoch " << fm.network->best_epoch << ", alpha_hat "
        << format_double(fm.network->learned_rate_per_day) << " /day\n";
  }
  run.note("trained", trained);
  run.finish();
}

void finish_reports(Run& run, const std::vector<eval::MetricReport>& reports, const std::string& csv_name,
                    std::ostream& out) {
  run.write(csv_name, eval::report_csv(reports));
  run.write("weight_curves.csv", eval::weight_curve_csv(reports));
  const std::string summary = eval::summary_table(reports);
  run.write("summary.txt", summary);
  json folds = json::array();
  for (const auto& r : reports) {
    folds.push_back({{"biomarker", std::string(cohort::to_string(r.biomarker))},
                     {"method", eval::method_name(r.method.kind)},
                     {"family", eval::family_label(r.method)},
                     {"fold_digest", hex64(r.fold_digest)},
                     {"config_hash", hex64(r.config_hash)}});
  }
  run.note("reports", folds);
  out << summary;
}

void cmd_eval(const Config& c, std::ostream& out) {
  const auto options = cv_options(c);
  const auto method = method_from(c);
  Run run("eval", c, out);
  const auto rows = load_features(c, run);
  std::vector<eval::MetricReport> reports;
  for (auto b : selected_biomarkers(c, rows)) reports.push_back(eval::run_cv(rows, b, method, options));
  finish_reports(run, reports, "report.csv", out);
  run.finish();
}

void cmd_compare_decays(const Config& c, std::ostream& out) {
  const auto options = cv_options(c);
  Run run("compare-decays", c, out);
  const auto rows = load_features(c, run);
  std::vector<eval::MetricReport> reports;
  for (auto b : selected_biomarkers(c, rows)) {
    auto r = eval::compare_decays(rows, b, options);
    std::move(r.begin(), r.end(), std::back_inserter(reports));
  }
  finish_reports(run, reports, "compare_decays.csv", out);
  run.finish();
}

void cmd_ablate(const Config& c, std::ostream& out) {
  const auto options = cv_options(c);
  const auto family = c.get_family("family");
  const double fixed_rate = c.get_double("fixed_rate");
  if (!(fixed_rate > 0.0)) config_error("field 'fixed_rate' must be positive");
  Run run("ablate", c, out);
  const auto rows = load_features(c, run);
  std::vector<eval::MetricReport> reports;
  std::string table = "biomarker,variant,family,auroc,auprc,alpha_hat\n";
  static constexpr std::array<std::string_view, 3> kVariants{"full", "w/o learnable alpha", "w/o time-aware loss"};
  for (auto b : selected_biomarkers(c, rows)) {
    auto r = eval::ablate(rows, b, family, fixed_rate, options);
    for (std::size_t i = 0; i < r.size(); ++i) {
      table += std::string(cohort::to_string(b)) + "," + std::string(kVariants[i]) + "," + eval::family_label(r[i].method) +
               "," + format_double(r[i].mean_auroc) + "," + format_double(r[i].mean_auprc) + "," +
               (r[i].mean_learned_rate ? format_double(*r[i].mean_learned_rate) : std::string()) + "\n";
    }
    std::move(r.begin(), r.end(), std::back_inserter(reports));
  }
  run.write("ablation_table.csv", table);
  finish_reports(run, reports, "ablation.csv", out);
  run.finish();
}

void cmd_report(const Config& c, const std::vector<std::string>& inputs, std::ostream& out) {
  if (inputs.empty()) config_error("report needs at least one report CSV");
  std::vector<std::string> texts;
  for (const auto& p : inputs) texts.push_back(io::read_file(p));
  const std::string table = render_report(texts);
  out << table;
  if (c.has("out")) {
    Run run("report", c, out);
    json ins = json::array();
    for (const auto& p : inputs) ins.push_back({{"path", p}, {"fnv1a64", hex64(io::file_digest(p))}});
    run.note("report_inputs", ins);
    run.write("report.txt", table);
    run.finish();
  }
}

}  // namespace

std::string render_report(const std::vector<std::string>& csv_texts) {
  struct Cell {
    double auroc, auprc;
  };
  std::vector<std::string> columns, rows;
  std::map<std::pair<std::string, std::string>, Cell> cells;
  const std::string header = "biomarker,method,family,fold,auroc,auprc,alpha_hat";
  for (const auto& text : csv_texts) {
    std::istringstream is(text);
    std::string line;
    bool first = true;
    while (std::getline(is, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (first) {
        if (trim(line) != header) throw Error(ErrorKind::Io, "report input lacks header '" + header + "'");
        first = false;
        continue;
      }
      auto f = split(line, ',');
      if (f.size() != 7 || f[3] != "mean") continue;
      const std::string col = f[1] == "ours" ? "ours/" + f[2] : f[1];
      auto auroc = parse_double(f[4]), auprc = parse_double(f[5]);
      if (!auroc || !auprc) throw Error(ErrorKind::Io, "bad metric in report row: " + line);
      if (std::find(columns.begin(), columns.end(), col) == columns.end()) columns.push_back(col);
      if (std::find(rows.begin(), rows.end(), f[0]) == rows.end()) rows.push_back(f[0]);
      cells[{f[0], col}] = {*auroc, *auprc};
    }
  }
  if (rows.empty()) throw Error(ErrorKind::EmptyResult, "no mean rows in report inputs");

  std::ostringstream os;
  const int name_w = 14, cell_w = 24;
  os << std::left << std::setw(name_w) << "Biomarker";
  for (const auto& col : columns) os << std::right << std::setw(cell_w) << col;
  os << "\n" << std::left << std::setw(name_w) << "";
  for (std::size_t i = 0; i < columns.size(); ++i) os << std::right << std::setw(cell_w) << "AUROC / AUPRC";
  os << "\n";
  auto cell_text = [](double a, double p) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f / %.3f", a, p);
    return std::string(buf);
  };
  std::vector<CompensatedSum> sum_a(columns.size()), sum_p(columns.size());
  std::vector<int> count(columns.size(), 0);
  for (const auto& r : rows) {
    os << std::left << std::setw(name_w) << r;
    for (std::size_t i = 0; i < columns.size(); ++i) {
      auto it = cells.find({r, columns[i]});
      if (it == cells.end()) {
        os << std::right << std::setw(cell_w) << "-";
        continue;
      }
      sum_a[i].add(it->second.auroc);
      sum_p[i].add(it->second.auprc);
      ++count[i];
      os << std::right << std::setw(cell_w) << cell_text(it->second.auroc, it->second.auprc);
    }
    os << "\n";
  }
  if (rows.size() > 1) {
    os << std::left << std::setw(name_w) << "Average";
    for (std::size_t i = 0; i < columns.size(); ++i) {
      os << std::right << std::setw(cell_w) << (count[i] ? cell_text(sum_a[i].value() / count[i], sum_p[i].value() / count[i]) : "-");
    }
    os << "\n";
  }
  return os.str();
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Time-gap-aware biomarker classification from PPG"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(kToolVersion));

  struct Common {
    std::string config_path, manifest_path;
    std::vector<std::string> sets;
    std::map<std::string, std::string> flags;
  };
  Common common;
  std::vector<std::string> report_inputs;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config_path, "flat key = value config file");
    sub->add_option("--from-manifest", common.manifest_path, "rerun with the config recorded in a manifest");
    sub->add_option("--set", common.sets, "override a config key: KEY=VALUE (repeatable)");
  };
  auto flag = [&](CLI::App* sub, const std::string& name, const std::string& key, const std::string& help) {
    sub->add_option_function<std::string>(
        name, [&common, key](const std::string& v) { common.flags[key] = v; }, help);
  };

  struct Sub {
    std::string name;
    std::string help;
  };
  const std::vector<Sub> subs = {
      {"synth", "generate a synthetic cohort"},
      {"preprocess", "segment, gate, filter and label raw streams"},
      {"featurize", "extract the 34 handcrafted features"},
      {"train", "fit one model per biomarker on all subjects"},
      {"eval", "subject-stratified cross-validation of one method"},
      {"compare-decays", "cross-validate every decay family on shared folds"},
      {"ablate", "full model vs fixed decay rate vs no time-aware loss"},
      {"report", "render report CSVs as an aligned table"},
  };
  std::map<std::string, CLI::App*> apps;
  for (const auto& s : subs) {
    auto* sub = app.add_subcommand(s.name, s.help);
    apps[s.name] = sub;
    add_common(sub);
    flag(sub, "--out", "out", "output directory");
    flag(sub, "--seed", "seed", "run seed");
    if (s.name != "synth" && s.name != "report") flag(sub, "--jobs", "jobs", "parallel folds");
  }
  flag(apps["synth"], "--level", "level", "features | waveform");
  flag(apps["synth"], "--n-subjects", "n_subjects", "synthetic subjects");
  flag(apps["synth"], "--rate", "true_staleness_rate", "generative staleness rate per day");
  flag(apps["preprocess"], "--raw", "raw", "raw stream file or directory");
  flag(apps["preprocess"], "--labs", "labs", "lab records CSV");
  flag(apps["preprocess"], "--sqi-threshold", "sqi_threshold", "minimum signal-quality index");
  flag(apps["preprocess"], "--window-days", "window_days", "maximum segment-to-lab gap in days");
  flag(apps["preprocess"], "--biomarker", "biomarker", "biomarker name, comma list, or all");
  flag(apps["featurize"], "--segments", "segments", "processed segments JSON-lines");
  flag(apps["featurize"], "--labeled", "labeled", "labeled segments JSON-lines");
  for (const char* name : {"train", "eval", "compare-decays", "ablate"}) {
    flag(apps[name], "--features", "features", "feature table CSV");
    flag(apps[name], "--biomarker", "biomarker", "biomarker name, comma list, or all");
    flag(apps[name], "--k", "k", "cross-validation folds");
    flag(apps[name], "--epochs", "epochs", "maximum training epochs");
    if (std::string(name) != "compare-decays") flag(apps[name], "--family", "family", "decay family");
  }
  flag(apps["train"], "--method", "method", "ours | rf | ablation_fixed_alpha | ablation_no_decay");
  flag(apps["eval"], "--method", "method", "ours | rf | ablation_fixed_alpha | ablation_no_decay");
  flag(apps["ablate"], "--fixed-rate", "fixed_rate", "decay rate per day for the fixed-rate arm");
  apps["report"]->add_option("inputs", report_inputs, "report CSV files (default: those recorded in --from-manifest)");

  std::vector<std::string> argv_tail(args.begin() + (args.empty() ? 0 : 1), args.end());
  std::reverse(argv_tail.begin(), argv_tail.end());
  try {
    app.parse(argv_tail);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::CallForVersion&) {
    out << kToolVersion << "\n";
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }

  std::string command;
  for (const auto& [name, sub] : apps) {
    if (sub->parsed()) command = name;
  }
  try {
    Config c;
    if (!common.manifest_path.empty()) {
      json m;
      try {
        m = json::parse(io::read_file(common.manifest_path));
      } catch (const json::exception& e) {
        throw Error(ErrorKind::Io, common.manifest_path + ": invalid manifest: " + e.what());
      }
      if (!m.contains("config") || !m.contains("command")) {
        throw Error(ErrorKind::Io, common.manifest_path + ": manifest lacks command or config");
      }
      if (m["command"].get<std::string>() != command) {
        config_error("manifest was written by '" + m["command"].get<std::string>() + "', not '" + command + "'");
      }
      for (auto& [k, v] : m["config"].items()) c.set(k, v.get<std::string>());
      if (command == "report" && report_inputs.empty() && m.contains("report_inputs")) {
        for (const auto& in : m["report_inputs"]) report_inputs.push_back(in.at("path").get<std::string>());
      }
    }
    if (!common.config_path.empty()) {
      Config file = Config::parse(io::read_file(common.config_path), common.config_path);
      for (const auto& [k, v] : file.explicit_values()) c.set(k, v);
    }
    for (const auto& s : common.sets) {
      auto eq = s.find('=');
      if (eq == std::string::npos) config_error("--set expects KEY=VALUE, got '" + s + "'");
      c.set(trim(s.substr(0, eq)), trim(s.substr(eq + 1)));
    }
    for (const auto& [k, v] : common.flags) c.set(k, v);

    if (command == "synth") {
      cmd_synth(c, out);
    } else if (command == "preprocess") {
      cmd_preprocess(c, out);
    } else if (command == "featurize") {
      cmd_featurize(c, out);
    } else if (command == "train") {
      cmd_train(c, out);
    } else if (command == "eval") {
      cmd_eval(c, out);
    } else if (command == "compare-decays") {
      cmd_compare_decays(c, out);
    } else if (command == "ablate") {
      cmd_ablate(c, out);
    } else if (command == "report") {
      cmd_report(c, report_inputs, out);
    }
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.kind());
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace tdl::cli
