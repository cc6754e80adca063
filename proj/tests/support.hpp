#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "tdl/common.hpp"
#include "tdl/features.hpp"
#include "tdl/signal.hpp"

namespace test_support {

// Fresh scratch directory under the build tree.
inline std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::path(TDL_TEST_TMP) / name;
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline tdl::signal::Segment make_segment(std::vector<double> samples, double fs = 25.0) {
  tdl::signal::Segment s;
  s.meta.subject_id = "T";
  s.meta.segment_id = "T-0";
  s.meta.median_timestamp = 5.0;
  s.sample_rate_hz = fs;
  s.samples = std::move(samples);
  return s;
}

inline tdl::features::FeatureVector random_features(tdl::Rng& rng) {
  tdl::features::FeatureVector x;
  for (auto& v : x) v = rng.normal();
  return x;
}

}  // namespace test_support
