#include "tdl/objective.hpp"

#include <algorithm>
#include <cmath>

#include "tdl/common.hpp"

namespace tdl::objective {

double logistic(double logit) { return decay::sigmoid(logit); }

double bce(double p, int y, double epsilon) {
  double q = std::clamp(p, epsilon, 1.0 - epsilon);
  return y ? -std::log(q) : -std::log1p(-q);
}

LossBreakdown weighted_loss(std::span<const double> logits, std::span<const int> labels,
                            std::span<const double> delta_ts, const decay::DecayParam& param, const Hyperparams& hp,
                            Weighting weighting) {
  const std::size_t n = logits.size();
  if (n == 0) throw Error(ErrorKind::InvalidArgument, "weighted_loss: empty batch");
  if (labels.size() != n || delta_ts.size() != n) {
    throw Error(ErrorKind::InvalidArgument, "weighted_loss: logits, labels and delta_ts differ in length");
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  LossBreakdown out;
  out.d_total_d_logits.resize(n);
  CompensatedSum wbce, wsum, galpha;
  for (std::size_t i = 0; i < n; ++i) {
    double p = logistic(logits[i]);
    double loss = bce(p, labels[i], hp.bce_epsilon);
    double w = 1.0;
    if (weighting == Weighting::Decay) {
      w = decay::weight(param, delta_ts[i]);
      galpha.add((loss - hp.lambda) * decay::dweight_draw(param, delta_ts[i]));
    }
    wbce.add(w * loss);
    wsum.add(w);
    out.d_total_d_logits[i] = w * (p - static_cast<double>(labels[i])) * inv_n;
  }
  out.weighted_bce = wbce.value() * inv_n;
  out.mean_weight = wsum.value() * inv_n;
  out.total = out.weighted_bce - hp.lambda * out.mean_weight;
  out.d_total_d_raw_alpha = galpha.value() * inv_n;
  return out;
}

double alpha_gradient_at_constant_bce(const decay::DecayParam& param, std::span<const double> delta_ts,
                                      double bce_value, const Hyperparams& hp) {
  if (delta_ts.empty()) return 0.0;
  CompensatedSum acc;
  for (double dt : delta_ts) acc.add((bce_value - hp.lambda) * decay::dweight_draw(param, dt));
  return acc.value() / static_cast<double>(delta_ts.size());
}

bool bonus_interpretation_check(const decay::DecayParam& param, std::span<const double> delta_ts,
                                const Hyperparams& hp) {
  return alpha_gradient_at_constant_bce(param, delta_ts, hp.lambda, hp) == 0.0;
}

}  // namespace tdl::objective
