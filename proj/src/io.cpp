#include "tdl/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "tdl/common.hpp"

namespace tdl::io {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const fs::path& path, std::size_t line, const std::string& what) {
  std::string where = path.string();
  if (line > 0) where += ":" + std::to_string(line);
  throw Error(ErrorKind::Io, where + ": " + what);
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    out.push_back(std::move(line));
  }
  return out;
}

double field_double(const std::string& text, const fs::path& path, std::size_t line, const char* name) {
  auto v = parse_double(text);
  if (!v) fail(path, line, std::string("bad number in ") + name + ": '" + text + "'");
  return *v;
}

void expect_header(const std::vector<std::string>& lines, const std::string& header, const fs::path& path) {
  if (lines.empty() || trim(lines[0]) != header) fail(path, 1, "expected header '" + header + "'");
}

cohort::Biomarker field_biomarker(const std::string& text, const fs::path& path, std::size_t line) {
  auto b = cohort::parse_biomarker(text);
  if (!b) fail(path, line, "unknown biomarker '" + text + "'");
  return *b;
}

json parse_json_line(const std::string& text, const fs::path& path, std::size_t line) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    fail(path, line, std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << contents;
  out.flush();
  if (!out) throw Error(ErrorKind::Io, "write failed for " + path.string());
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw Error(ErrorKind::Io, "cannot create directory " + dir.string());
  const fs::path probe = dir / ".tdl_write_probe";
  {
    std::ofstream out(probe);
    if (!out) throw Error(ErrorKind::Io, "directory not writable: " + dir.string());
  }
  fs::remove(probe, ec);
}

std::uint64_t file_digest(const fs::path& path) { return fnv1a64(read_file(path)); }

std::vector<cohort::LabRecord> read_labs(const fs::path& path) {
  const auto lines = lines_of(read_file(path));
  expect_header(lines, "subject_id,biomarker,value,drawn_at_unix", path);
  std::vector<cohort::LabRecord> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto f = split(lines[i], ',');
    if (f.size() != 4) fail(path, i + 1, "expected 4 fields");
    out.push_back({trim(f[0]), field_biomarker(f[1], path, i + 1), field_double(f[2], path, i + 1, "value"),
                   field_double(f[3], path, i + 1, "drawn_at_unix")});
  }
  return out;
}

std::string labs_csv(const std::vector<cohort::LabRecord>& labs) {
  std::string out = "subject_id,biomarker,value,drawn_at_unix\n";
  for (const auto& l : labs) {
    out += l.subject_id + "," + std::string(cohort::to_string(l.biomarker)) + "," + format_double(l.value) + "," +
           format_double(l.drawn_at) + "\n";
  }
  return out;
}

std::vector<cohort::SegmentMeta> read_segment_meta(const fs::path& path) {
  const auto lines = lines_of(read_file(path));
  expect_header(lines, "subject_id,segment_id,median_ts_unix", path);
  std::vector<cohort::SegmentMeta> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto f = split(lines[i], ',');
    if (f.size() != 3) fail(path, i + 1, "expected 3 fields");
    out.push_back({trim(f[0]), trim(f[1]), field_double(f[2], path, i + 1, "median_ts_unix")});
  }
  return out;
}

std::string segment_meta_csv(const std::vector<cohort::SegmentMeta>& segments) {
  std::string out = "subject_id,segment_id,median_ts_unix\n";
  for (const auto& s : segments) out += s.subject_id + "," + s.segment_id + "," + format_double(s.median_timestamp) + "\n";
  return out;
}

std::vector<signal::RawPpgStream> read_raw_csv(const fs::path& path) {
  const auto lines = lines_of(read_file(path));
  std::vector<signal::RawPpgStream> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty() || lines[i].rfind("subject_id,", 0) == 0) continue;
    auto f = split(lines[i], ',');
    if (f.size() < 4) fail(path, i + 1, "expected subject_id,start_ts_unix,sample_rate,values...");
    signal::RawPpgStream s;
    s.subject_id = trim(f[0]);
    s.start_timestamp = field_double(f[1], path, i + 1, "start_ts_unix");
    s.sample_rate_hz = field_double(f[2], path, i + 1, "sample_rate");
    if (!(s.sample_rate_hz > 0.0)) fail(path, i + 1, "sample_rate must be positive");
    s.samples.reserve(f.size() - 3);
    for (std::size_t k = 3; k < f.size(); ++k) s.samples.push_back(field_double(f[k], path, i + 1, "values"));
    out.push_back(std::move(s));
  }
  return out;
}

std::string raw_csv(const std::vector<signal::RawPpgStream>& streams) {
  std::string out = "subject_id,start_ts_unix,sample_rate,values...\n";
  for (const auto& s : streams) {
    out += s.subject_id + "," + format_double(s.start_timestamp) + "," + format_double(s.sample_rate_hz);
    for (double v : s.samples) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

signal::RawPpgStream read_raw_binary(const fs::path& sidecar) {
  json header = parse_json_line(read_file(sidecar), sidecar, 0);
  signal::RawPpgStream s;
  std::size_t n = 0;
  fs::path payload;
  try {
    s.subject_id = header.at("subject_id").get<std::string>();
    s.start_timestamp = header.at("start_ts_unix").get<double>();
    s.sample_rate_hz = header.at("sample_rate").get<double>();
    n = header.at("n_samples").get<std::size_t>();
    payload = sidecar.parent_path() / header.at("payload").get<std::string>();
  } catch (const json::exception& e) {
    fail(sidecar, 0, std::string("bad sidecar: ") + e.what());
  }
  const std::string bytes = read_file(payload);
  if (bytes.size() != 4 * n) fail(payload, 0, "expected " + std::to_string(4 * n) + " bytes");
  s.samples.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::uint32_t bits = 0;
    for (int b = 3; b >= 0; --b) bits = (bits << 8) | static_cast<unsigned char>(bytes[4 * i + static_cast<std::size_t>(b)]);
    s.samples[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return s;
}

void write_raw_binary(const fs::path& sidecar, const signal::RawPpgStream& stream) {
  fs::path payload = sidecar;
  payload.replace_extension(".f32");
  std::string bytes(4 * stream.samples.size(), '\0');
  for (std::size_t i = 0; i < stream.samples.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(stream.samples[i]));
    for (int b = 0; b < 4; ++b) bytes[4 * i + static_cast<std::size_t>(b)] = static_cast<char>((bits >> (8 * b)) & 0xffu);
  }
  write_file(payload, bytes);
  json header = {{"subject_id", stream.subject_id},
                 {"start_ts_unix", stream.start_timestamp},
                 {"sample_rate", stream.sample_rate_hz},
                 {"n_samples", stream.samples.size()},
                 {"payload", payload.filename().string()}};
  write_file(sidecar, header.dump(2) + "\n");
}

std::vector<signal::RawPpgStream> read_raw(const fs::path& path) {
  if (!fs::exists(path)) throw Error(ErrorKind::Io, "no such file or directory: " + path.string());
  if (!fs::is_directory(path)) return read_raw_csv(path);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path)) {
    if (!e.is_regular_file()) continue;
    auto ext = e.path().extension();
    if (ext == ".csv" || ext == ".json") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<signal::RawPpgStream> out;
  for (const auto& f : files) {
    if (f.extension() == ".csv") {
      auto streams = read_raw_csv(f);
      std::move(streams.begin(), streams.end(), std::back_inserter(out));
    } else {
      out.push_back(read_raw_binary(f));
    }
  }
  return out;
}

std::string labeled_jsonl(const std::vector<cohort::LabeledSegment>& segments) {
  std::string out;
  for (const auto& s : segments) {
    json j = {{"meta",
               {{"subject_id", s.meta.subject_id},
                {"segment_id", s.meta.segment_id},
                {"median_timestamp", s.meta.median_timestamp}}},
              {"biomarker", std::string(cohort::to_string(s.biomarker))},
              {"delta_t_days", s.delta_t_days},
              {"label", s.label},
              {"lab_value", s.lab_value}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<cohort::LabeledSegment> read_labeled_jsonl(const fs::path& path) {
  const auto lines = lines_of(read_file(path));
  std::vector<cohort::LabeledSegment> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    json j = parse_json_line(lines[i], path, i + 1);
    cohort::LabeledSegment s;
    try {
      const auto& m = j.at("meta");
      s.meta.subject_id = m.at("subject_id").get<std::string>();
      s.meta.segment_id = m.at("segment_id").get<std::string>();
      s.meta.median_timestamp = m.at("median_timestamp").get<double>();
      s.biomarker = field_biomarker(j.at("biomarker").get<std::string>(), path, i + 1);
      s.delta_t_days = j.at("delta_t_days").get<double>();
      s.label = j.at("label").get<int>();
      s.lab_value = j.at("lab_value").get<double>();
    } catch (const json::exception& e) {
      fail(path, i + 1, e.what());
    }
    if (s.label != 0 && s.label != 1) fail(path, i + 1, "label must be 0 or 1");
    out.push_back(std::move(s));
  }
  return out;
}

std::string segments_jsonl(const std::vector<signal::Segment>& segments) {
  std::string out;
  for (const auto& s : segments) {
    json j = {{"subject_id", s.meta.subject_id},
              {"segment_id", s.meta.segment_id},
              {"median_timestamp", s.meta.median_timestamp},
              {"sample_rate_hz", s.sample_rate_hz},
              {"samples", s.samples}};
    out += j.dump() + "\n";
  }
  return out;
}

std::vector<signal::Segment> read_segments_jsonl(const fs::path& path) {
  const auto lines = lines_of(read_file(path));
  std::vector<signal::Segment> out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    json j = parse_json_line(lines[i], path, i + 1);
    signal::Segment s;
    try {
      s.meta.subject_id = j.at("subject_id").get<std::string>();
      s.meta.segment_id = j.at("segment_id").get<std::string>();
      s.meta.median_timestamp = j.at("median_timestamp").get<double>();
      s.sample_rate_hz = j.at("sample_rate_hz").get<double>();
      s.samples = j.at("samples").get<std::vector<double>>();
    } catch (const json::exception& e) {
      fail(path, i + 1, e.what());
    }
    out.push_back(std::move(s));
  }
  return out;
}

namespace {
std::string features_header() {
  std::string h = "subject_id,segment_id,biomarker,delta_t_days,label";
  for (auto name : features::feature_names()) h += "," + std::string(name);
  return h;
}
}  // namespace

std::string features_csv(const std::vector<features::FeatureRow>& rows) {
  std::string out = features_header() + "\n";
  for (const auto& r : rows) {
    out += r.subject_id + "," + r.segment_id + "," + std::string(cohort::to_string(r.biomarker)) + "," +
           format_double(r.delta_t_days) + "," + std::to_string(r.label);
    for (double v : r.features) out += "," + format_double(v);
    out += "\n";
  }
  return out;
}

std::vector<features::FeatureRow> read_features_csv(const fs::path& path) {
  const auto lines = lines_of(read_file(path));
  expect_header(lines, features_header(), path);
  std::vector<features::FeatureRow> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (trim(lines[i]).empty()) continue;
    auto f = split(lines[i], ',');
    if (f.size() != 5 + features::kNumFeatures) fail(path, i + 1, "expected " + std::to_string(5 + features::kNumFeatures) + " fields");
    features::FeatureRow r;
    r.subject_id = trim(f[0]);
    r.segment_id = trim(f[1]);
    r.biomarker = field_biomarker(f[2], path, i + 1);
    r.delta_t_days = field_double(f[3], path, i + 1, "delta_t_days");
    auto label = parse_int(f[4]);
    if (!label || (*label != 0 && *label != 1)) fail(path, i + 1, "label must be 0 or 1");
    r.label = static_cast<int>(*label);
    for (std::size_t k = 0; k < features::kNumFeatures; ++k) {
      r.features[k] = field_double(f[5 + k], path, i + 1, features::feature_names()[k].data());
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string loss_trace_csv(const std::vector<model::EpochTrace>& trace) {
  std::string out = "epoch,weighted_bce,mean_weight,total,alpha_hat\n";
  for (const auto& t : trace) {
    out += std::to_string(t.epoch) + "," + format_double(t.weighted_bce) + "," + format_double(t.mean_weight) + "," +
           format_double(t.total) + "," + format_double(t.alpha_hat) + "\n";
  }
  return out;
}

std::string checkpoint_json(const Checkpoint& c) {
  using model::ScorerParams;
  const auto& v = c.scorer.params.values;
  auto slice = [&](std::size_t from, std::size_t to) {
    return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(from), v.begin() + static_cast<std::ptrdiff_t>(to));
  };
  json j;
  j["format"] = "tdl-checkpoint-1";
  j["biomarker"] = c.biomarker;
  j["family"] = std::string(decay::to_string(c.family));
  j["mode"] = std::string(model::to_string(c.mode));
  j["raw_alpha"] = c.raw_alpha;
  j["rate_per_day"] = decay::softplus(c.raw_alpha);
  j["config_hash"] = hex64(c.config_hash);
  j["imputer_medians"] = c.imputer_medians;
  j["standardizer"] = {{"mean", c.scorer.standardizer.mean}, {"scale", c.scorer.standardizer.scale}};
  j["layers"] = json::array({
      {{"name", "hidden"},
       {"shape", {model::kHidden, model::kInputs}},
       {"weights", slice(ScorerParams::kW1, ScorerParams::kB1)},
       {"bias", slice(ScorerParams::kB1, ScorerParams::kW2)}},
      {{"name", "output"},
       {"shape", {1, model::kHidden}},
       {"weights", slice(ScorerParams::kW2, ScorerParams::kB2)},
       {"bias", slice(ScorerParams::kB2, ScorerParams::kSize)}},
  });
  return j.dump(2) + "\n";
}

Checkpoint read_checkpoint(const fs::path& path) {
  using model::ScorerParams;
  json j = parse_json_line(read_file(path), path, 0);
  Checkpoint c;
  try {
    if (j.at("format").get<std::string>() != "tdl-checkpoint-1") fail(path, 0, "unknown checkpoint format");
    c.biomarker = j.at("biomarker").get<std::string>();
    auto fam = decay::parse_family(j.at("family").get<std::string>());
    if (!fam) fail(path, 0, "unknown decay family");
    c.family = *fam;
    const auto mode = j.at("mode").get<std::string>();
    for (auto m : {model::TrainMode::Full, model::TrainMode::FixedAlpha, model::TrainMode::NoDecay}) {
      if (model::to_string(m) == mode) c.mode = m;
    }
    c.raw_alpha = j.at("raw_alpha").get<double>();
    c.config_hash = std::stoull(j.at("config_hash").get<std::string>(), nullptr, 16);
    c.imputer_medians = j.at("imputer_medians").get<features::FeatureVector>();
    c.scorer.standardizer.mean = j.at("standardizer").at("mean").get<features::FeatureVector>();
    c.scorer.standardizer.scale = j.at("standardizer").at("scale").get<features::FeatureVector>();
    const auto& layers = j.at("layers");
    if (layers.size() != 2) fail(path, 0, "expected 2 layers");
    std::vector<double> flat;
    for (const auto& layer : layers) {
      auto w = layer.at("weights").get<std::vector<double>>();
      flat.insert(flat.end(), w.begin(), w.end());
      auto b = layer.at("bias").get<std::vector<double>>();
      flat.insert(flat.end(), b.begin(), b.end());
    }
    if (flat.size() != ScorerParams::kSize) fail(path, 0, "parameter count mismatch");
    c.scorer.params.values = std::move(flat);
  } catch (const json::exception& e) {
    fail(path, 0, e.what());
  }
  return c;
}

std::string forest_json(const baseline::Forest& forest) {
  json trees = json::array();
  for (const auto& t : forest.trees) {
    json nodes = json::array();
    for (const auto& n : t.nodes) {
      nodes.push_back({{"feature", n.feature},
                       {"threshold", n.threshold},
                       {"left", n.left},
                       {"right", n.right},
                       {"positive_fraction", n.positive_fraction}});
    }
    trees.push_back(std::move(nodes));
  }
  return trees.dump() + "\n";
}

baseline::Forest parse_forest_json(const std::string& text) {
  baseline::Forest forest;
  try {
    json trees = json::parse(text);
    for (const auto& nodes : trees) {
      baseline::DecisionTree t;
      for (const auto& n : nodes) {
        baseline::TreeNode node;
        node.feature = n.at("feature").get<int>();
        node.threshold = n.at("threshold").get<double>();
        node.left = n.at("left").get<int>();
        node.right = n.at("right").get<int>();
        node.positive_fraction = n.at("positive_fraction").get<double>();
        t.nodes.push_back(node);
      }
      forest.trees.push_back(std::move(t));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::Io, std::string("invalid forest JSON: ") + e.what());
  }
  return forest;
}

}  // namespace tdl::io
