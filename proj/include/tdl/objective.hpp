#pragma once

// Weighted temporal decay loss:
//
//   total = (1/N) sum_i w_i BCE(p_i, y_i) - lambda * (1/N) sum_i w_i,   w_i = g(rate * dt_i)
//
// Weights are constants with respect to the logits and differentiable with
// respect to the raw decay parameter.

#include <span>
#include <vector>

#include "tdl/decay.hpp"

namespace tdl::objective {

inline constexpr double kDefaultLambda = 0.5;
inline constexpr double kDefaultBceEpsilon = 1e-7;

struct Hyperparams {
  double lambda = kDefaultLambda;
  double bce_epsilon = kDefaultBceEpsilon;
};

// Decay: w_i from the decay parameter. Uniform: w_i = 1 and no alpha gradient.
enum class Weighting { Decay, Uniform };

struct LossBreakdown {
  double weighted_bce = 0.0;
  double mean_weight = 0.0;
  double total = 0.0;
  double d_total_d_raw_alpha = 0.0;
  std::vector<double> d_total_d_logits;
};

double logistic(double logit);
// -[y ln p + (1-y) ln(1-p)] with p clamped to [eps, 1-eps].
double bce(double p, int y, double epsilon = kDefaultBceEpsilon);

/// Throws Error(InvalidArgument) on length mismatch or an empty batch.
LossBreakdown weighted_loss(std::span<const double> logits, std::span<const int> labels,
                            std::span<const double> delta_ts, const decay::DecayParam& param, const Hyperparams& hp,
                            Weighting weighting = Weighting::Decay);

// d total / d raw alpha if every sample had the given BCE.
double alpha_gradient_at_constant_bce(const decay::DecayParam& param, std::span<const double> delta_ts,
                                      double bce_value, const Hyperparams& hp);

// Self-test: with BCE == lambda for every sample the bonus cancels the weighted
// term's pressure on alpha exactly, so the alpha gradient is zero.
bool bonus_interpretation_check(const decay::DecayParam& param, std::span<const double> delta_ts,
                                const Hyperparams& hp);

}  // namespace tdl::objective
