#pragma once

// Small feed-forward scorer (34 -> 32 ReLU -> 1 logit) trained jointly with the
// per-biomarker decay parameter under the weighted temporal decay loss.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tdl/decay.hpp"
#include "tdl/features.hpp"
#include "tdl/objective.hpp"

namespace tdl::model {

inline constexpr std::size_t kInputs = features::kNumFeatures;
inline constexpr std::size_t kHidden = 32;

/// Flat parameter vector: [W1 (hidden x inputs, row-major) | b1 | w2 | b2].
struct ScorerParams {
  static constexpr std::size_t kW1 = 0;
  static constexpr std::size_t kB1 = kW1 + kHidden * kInputs;
  static constexpr std::size_t kW2 = kB1 + kHidden;
  static constexpr std::size_t kB2 = kW2 + kHidden;
  static constexpr std::size_t kSize = kB2 + 1;

  std::vector<double> values = std::vector<double>(kSize, 0.0);

  std::span<const double> w1_row(std::size_t j) const { return {values.data() + kW1 + j * kInputs, kInputs}; }
  std::span<const double> b1() const { return {values.data() + kB1, kHidden}; }
  std::span<const double> w2() const { return {values.data() + kW2, kHidden}; }
  double b2() const { return values[kB2]; }

  bool all_finite() const;
  bool operator==(const ScorerParams&) const = default;
};

inline constexpr double kInitialRatePerDay = 0.1;

// Glorot-uniform weights from a seeded stream, zero biases.
ScorerParams init(std::uint64_t seed);
// Raw decay parameter whose softplus is `rate` (0.1/day by default).
double initial_raw_alpha(double rate = kInitialRatePerDay);

/// Per-feature standardization fitted on a training split only.
struct Standardizer {
  features::FeatureVector mean{};
  features::FeatureVector scale{};  // 1 / std, or 1 when std < 1e-12

  static Standardizer fit(std::span<const features::FeatureVector> rows);
  features::FeatureVector apply(const features::FeatureVector& x) const;
  bool operator==(const Standardizer&) const = default;
};

struct ForwardCache {
  std::array<double, kHidden> pre{};
  std::array<double, kHidden> hidden{};
  double logit = 0.0;
};

// Input must already be standardized. Throws Error(InvalidArgument) on non-finite input.
double forward(const ScorerParams& params, const features::FeatureVector& x, ForwardCache* cache = nullptr);
std::vector<double> forward_batch(const ScorerParams& params, std::span<const features::FeatureVector> x);

/// Gradients of the loss w.r.t. every parameter given d loss / d logit per
/// sample. The caller supplies the decay-parameter gradient separately.
std::vector<double> backward(const ScorerParams& params, std::span<const features::FeatureVector> x,
                             std::span<const ForwardCache> caches, std::span<const double> d_logits);

/// Inference bundle: standardization plus network. Scoring never sees time
/// gaps, so the decay weights cannot leak into predictions.
struct Scorer {
  Standardizer standardizer;
  ScorerParams params;
};

double predict_logit(const Scorer& scorer, const features::FeatureVector& raw_features);
std::vector<double> predict_logits(const Scorer& scorer, std::span<const features::FeatureVector> raw_features);

enum class TrainMode { Full, FixedAlpha, NoDecay };
std::string_view to_string(TrainMode mode);

struct TrainConfig {
  int epochs = 200;
  int batch_size = 256;
  double learning_rate = 1e-3;
  double alpha_learning_rate = 1e-2;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  int early_stop_patience = 20;
  decay::DecayFamily family = decay::DecayFamily::Linear;
  TrainMode mode = TrainMode::Full;
  double initial_rate_per_day = kInitialRatePerDay;
  std::string context;  // e.g. "Potassium fold 2", used in error messages
};

std::uint64_t config_digest(const TrainConfig& cfg, const objective::Hyperparams& hp);

struct Dataset {
  std::vector<features::FeatureVector> x;
  std::vector<int> y;
  std::vector<double> delta_t_days;

  std::size_t size() const { return x.size(); }
  void push_back(const features::FeatureVector& row, int label, double dt) {
    x.push_back(row);
    y.push_back(label);
    delta_t_days.push_back(dt);
  }
};

struct EpochTrace {
  int epoch = 0;
  double weighted_bce = 0.0;
  double mean_weight = 0.0;
  double total = 0.0;
  double alpha_hat = 0.0;
  double valid_total = 0.0;  // NaN without a validation split
};

struct TrainResult {
  Scorer scorer;
  double raw_alpha = 0.0;
  double learned_rate_per_day = 0.0;
  int best_epoch = 0;
  std::vector<EpochTrace> loss_trace;
};

// Loss of a (standardized) dataset under the current network and decay parameter.
objective::LossBreakdown evaluate_loss(const ScorerParams& params, const Dataset& standardized,
                                       const decay::DecayParam& param, const objective::Hyperparams& hp,
                                       TrainMode mode);

/// Adam over shuffled mini-batches; the decay parameter has its own learning
/// rate and is frozen in FixedAlpha mode. Early stopping on the validation
/// total restores the best epoch. Throws Error(InsufficientData) naming
/// cfg.context when the training split lacks a class.
TrainResult train_biomarker(const Dataset& train, const Dataset& valid, const TrainConfig& cfg,
                            const objective::Hyperparams& hp);

}  // namespace tdl::model
