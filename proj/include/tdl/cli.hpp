#pragma once

// Command-line orchestration: flat key = value configs with flag overrides,
// one JSON manifest per artifact-producing command, and the exit-code contract
// 0 ok, 2 config, 3 I/O, 4 empty result, 5 numeric failure.

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "tdl/cohort.hpp"
#include "tdl/decay.hpp"
#include "tdl/eval.hpp"
#include "tdl/synth.hpp"

namespace tdl::cli {

inline constexpr std::string_view kToolVersion = "0.3.0";

struct KeySpec {
  std::string_view name;
  std::string_view default_value;  // empty: no default
  std::string_view help;
};

// Every recognised config key with its default, in documentation order.
const std::vector<KeySpec>& config_keys();

class Config {
 public:
  // Lines of `key = value`; '#' starts a comment. Unknown keys are Error(Config).
  static Config parse(std::string_view text, std::string_view source = "config");

  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const;
  // Explicit value or the table default; Error(Config) naming the key if neither exists.
  std::string get(const std::string& key) const;
  std::string require(const std::string& key) const;  // explicit values only

  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::uint64_t get_seed() const;
  decay::DecayFamily get_family(const std::string& key) const;

  // Explicit values merged over defaults, sorted by key.
  std::map<std::string, std::string> resolved() const;
  const std::map<std::string, std::string>& explicit_values() const { return values_; }
  // Digest of the resolved config; the output location is excluded.
  std::uint64_t digest() const;

 private:
  std::map<std::string, std::string> values_;
};

synth::SynthCohortConfig synth_config(const Config& c);
eval::CvOptions cv_options(const Config& c);

// Biomarkers named by the `biomarker` key ("all" = every biomarker in the rows).
std::vector<cohort::Biomarker> selected_biomarkers(const Config& c, std::span<const features::FeatureRow> rows);

// Mean rows of report CSVs as an aligned Biomarker x Method table with an Average row.
std::string render_report(const std::vector<std::string>& csv_texts);

// Entry point; returns the process exit code. args[0] is the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace tdl::cli
