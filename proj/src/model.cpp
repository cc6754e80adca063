#include "tdl/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "tdl/common.hpp"
#include "tdl/kernels.hpp"

namespace tdl::model {

bool ScorerParams::all_finite() const {
  return std::all_of(values.begin(), values.end(), [](double v) { return std::isfinite(v); });
}

ScorerParams init(std::uint64_t seed) {
  Rng rng(derive_seed(seed, "init"));
  ScorerParams p;
  const double limit1 = std::sqrt(6.0 / static_cast<double>(kInputs + kHidden));
  for (std::size_t i = 0; i < kHidden * kInputs; ++i) p.values[ScorerParams::kW1 + i] = rng.uniform(-limit1, limit1);
  const double limit2 = std::sqrt(6.0 / static_cast<double>(kHidden + 1));
  for (std::size_t j = 0; j < kHidden; ++j) p.values[ScorerParams::kW2 + j] = rng.uniform(-limit2, limit2);
  return p;
}

double initial_raw_alpha(double rate) { return decay::inverse_softplus(rate); }

Standardizer Standardizer::fit(std::span<const features::FeatureVector> rows) {
  Standardizer s;
  s.scale.fill(1.0);
  if (rows.empty()) return s;
  const double n = static_cast<double>(rows.size());
  for (std::size_t j = 0; j < kInputs; ++j) {
    CompensatedSum sum;
    for (const auto& r : rows) sum.add(r[j]);
    double mean = sum.value() / n;
    CompensatedSum ss;
    for (const auto& r : rows) ss.add((r[j] - mean) * (r[j] - mean));
    double sd = std::sqrt(ss.value() / n);
    s.mean[j] = mean;
    s.scale[j] = sd < 1e-12 ? 1.0 : 1.0 / sd;
  }
  return s;
}

features::FeatureVector Standardizer::apply(const features::FeatureVector& x) const {
  features::FeatureVector out;
  for (std::size_t j = 0; j < kInputs; ++j) out[j] = (x[j] - mean[j]) * scale[j];
  return out;
}

double forward(const ScorerParams& params, const features::FeatureVector& x, ForwardCache* cache) {
  for (double v : x) {
    if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "forward: non-finite input feature");
  }
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  const auto b1 = params.b1();
  for (std::size_t j = 0; j < kHidden; ++j) {
    c.pre[j] = kernels::dot(params.w1_row(j), x) + b1[j];
    c.hidden[j] = c.pre[j] > 0.0 ? c.pre[j] : 0.0;
  }
  c.logit = kernels::dot(params.w2(), c.hidden) + params.b2();
  return c.logit;
}

std::vector<double> forward_batch(const ScorerParams& params, std::span<const features::FeatureVector> x) {
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = forward(params, x[i]);
  return out;
}

std::vector<double> backward(const ScorerParams& params, std::span<const features::FeatureVector> x,
                             std::span<const ForwardCache> caches, std::span<const double> d_logits) {
  if (x.size() != caches.size() || x.size() != d_logits.size()) {
    throw Error(ErrorKind::InvalidArgument, "backward: batch size mismatch");
  }
  std::vector<double> grad(ScorerParams::kSize, 0.0);
  std::span<double> g_w2(grad.data() + ScorerParams::kW2, kHidden);
  const auto w2 = params.w2();
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dz = d_logits[i];
    if (dz == 0.0) continue;
    kernels::axpy(dz, caches[i].hidden, g_w2);
    grad[ScorerParams::kB2] += dz;
    for (std::size_t j = 0; j < kHidden; ++j) {
      if (!(caches[i].pre[j] > 0.0)) continue;
      const double dpre = dz * w2[j];
      kernels::axpy(dpre, x[i], std::span<double>(grad.data() + ScorerParams::kW1 + j * kInputs, kInputs));
      grad[ScorerParams::kB1 + j] += dpre;
    }
  }
  return grad;
}

double predict_logit(const Scorer& scorer, const features::FeatureVector& raw_features) {
  return forward(scorer.params, scorer.standardizer.apply(raw_features));
}

std::vector<double> predict_logits(const Scorer& scorer, std::span<const features::FeatureVector> raw_features) {
  std::vector<double> out(raw_features.size());
  for (std::size_t i = 0; i < raw_features.size(); ++i) out[i] = predict_logit(scorer, raw_features[i]);
  return out;
}

std::string_view to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::Full:
      return "full";
    case TrainMode::FixedAlpha:
      return "fixed_alpha";
    case TrainMode::NoDecay:
      return "no_decay";
  }
  return "full";
}

std::uint64_t config_digest(const TrainConfig& cfg, const objective::Hyperparams& hp) {
  std::string canon;
  auto put = [&](std::string_view k, const std::string& v) {
    canon += k;
    canon += '=';
    canon += v;
    canon += '\n';
  };
  put("epochs", std::to_string(cfg.epochs));
  put("batch_size", std::to_string(cfg.batch_size));
  put("learning_rate", format_double(cfg.learning_rate));
  put("alpha_learning_rate", format_double(cfg.alpha_learning_rate));
  put("adam", format_double(cfg.adam_beta1) + "," + format_double(cfg.adam_beta2) + "," + format_double(cfg.adam_epsilon));
  put("seed", std::to_string(cfg.seed));
  put("patience", std::to_string(cfg.early_stop_patience));
  put("family", std::string(decay::to_string(cfg.family)));
  put("mode", std::string(to_string(cfg.mode)));
  put("initial_rate", format_double(cfg.initial_rate_per_day));
  put("lambda", format_double(hp.lambda));
  put("bce_epsilon", format_double(hp.bce_epsilon));
  return fnv1a64(canon);
}

namespace {

objective::Weighting weighting_for(TrainMode mode) {
  return mode == TrainMode::NoDecay ? objective::Weighting::Uniform : objective::Weighting::Decay;
}

Dataset standardized(const Dataset& d, const Standardizer& s) {
  Dataset out;
  out.x.reserve(d.size());
  for (const auto& row : d.x) out.x.push_back(s.apply(row));
  out.y = d.y;
  out.delta_t_days = d.delta_t_days;
  return out;
}

void check_dataset(const Dataset& d, const char* what) {
  if (d.y.size() != d.size() || d.delta_t_days.size() != d.size()) {
    throw Error(ErrorKind::InvalidArgument, std::string(what) + ": ragged dataset");
  }
}

}  // namespace

objective::LossBreakdown evaluate_loss(const ScorerParams& params, const Dataset& data, const decay::DecayParam& param,
                                       const objective::Hyperparams& hp, TrainMode mode) {
  auto logits = forward_batch(params, data.x);
  return objective::weighted_loss(logits, data.y, data.delta_t_days, param, hp, weighting_for(mode));
}

TrainResult train_biomarker(const Dataset& train, const Dataset& valid, const TrainConfig& cfg,
                            const objective::Hyperparams& hp) {
  check_dataset(train, "train_biomarker(train)");
  check_dataset(valid, "train_biomarker(valid)");
  const std::string where = cfg.context.empty() ? std::string("training") : cfg.context;
  if (train.size() == 0) throw Error(ErrorKind::InsufficientData, where + ": empty training split");
  const auto positives = std::count(train.y.begin(), train.y.end(), 1);
  if (positives == 0 || positives == static_cast<std::ptrdiff_t>(train.size())) {
    throw Error(ErrorKind::InsufficientData, where + ": single-class training split");
  }
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw Error(ErrorKind::Config, "train_biomarker: epochs and batch_size must be >= 1");

  TrainResult result;
  result.scorer.standardizer = Standardizer::fit(train.x);
  const Dataset tr = standardized(train, result.scorer.standardizer);
  const Dataset va = standardized(valid, result.scorer.standardizer);

  ScorerParams params = init(cfg.seed);
  decay::DecayParam alpha{initial_raw_alpha(cfg.initial_rate_per_day), cfg.family};
  const auto weighting = weighting_for(cfg.mode);

  std::vector<double> m(ScorerParams::kSize, 0.0), v(ScorerParams::kSize, 0.0);
  std::vector<double> alpha_m(1, 0.0), alpha_v(1, 0.0);
  std::vector<double> alpha_value(1, alpha.raw), alpha_grad(1, 0.0);

  Rng shuffle_rng(derive_seed(cfg.seed, "shuffle"));
  std::vector<std::size_t> order(tr.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  const std::size_t batch = static_cast<std::size_t>(cfg.batch_size);
  std::vector<features::FeatureVector> bx;
  std::vector<int> by;
  std::vector<double> bdt;
  std::vector<ForwardCache> caches;
  std::vector<double> logits;
  double beta1_pow = 1.0, beta2_pow = 1.0;

  ScorerParams best_params = params;
  double best_raw = alpha.raw;
  double best_valid = std::numeric_limits<double>::infinity();
  int best_epoch = 0;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += batch) {
      const std::size_t end = std::min(order.size(), start + batch);
      bx.clear();
      by.clear();
      bdt.clear();
      for (std::size_t k = start; k < end; ++k) {
        bx.push_back(tr.x[order[k]]);
        by.push_back(tr.y[order[k]]);
        bdt.push_back(tr.delta_t_days[order[k]]);
      }
      caches.assign(bx.size(), ForwardCache{});
      logits.resize(bx.size());
      for (std::size_t i = 0; i < bx.size(); ++i) logits[i] = forward(params, bx[i], &caches[i]);
      auto loss = objective::weighted_loss(logits, by, bdt, alpha, hp, weighting);
      auto grad = backward(params, bx, caches, loss.d_total_d_logits);

      beta1_pow *= cfg.adam_beta1;
      beta2_pow *= cfg.adam_beta2;
      kernels::AdamCoeffs coeffs{cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_epsilon,
                                 1.0 - beta1_pow, 1.0 - beta2_pow};
      kernels::adam_step(params.values, grad, m, v, coeffs);
      if (cfg.mode == TrainMode::Full) {
        coeffs.learning_rate = cfg.alpha_learning_rate;
        alpha_grad[0] = loss.d_total_d_raw_alpha;
        alpha_value[0] = alpha.raw;
        kernels::scalar::adam_step(alpha_value.data(), alpha_grad.data(), alpha_m.data(), alpha_v.data(), 1, coeffs);
        alpha.raw = alpha_value[0];
      }
    }
    if (!params.all_finite() || !std::isfinite(alpha.raw)) {
      throw Error(ErrorKind::Numeric, where + ": non-finite parameters at epoch " + std::to_string(epoch));
    }

    auto train_loss = evaluate_loss(params, tr, alpha, hp, cfg.mode);
    EpochTrace t;
    t.epoch = epoch;
    t.weighted_bce = train_loss.weighted_bce;
    t.mean_weight = train_loss.mean_weight;
    t.total = train_loss.total;
    t.alpha_hat = alpha.rate();
    t.valid_total = std::numeric_limits<double>::quiet_NaN();

    if (va.size() > 0) {
      t.valid_total = evaluate_loss(params, va, alpha, hp, cfg.mode).total;
      if (t.valid_total < best_valid) {
        best_valid = t.valid_total;
        best_params = params;
        best_raw = alpha.raw;
        best_epoch = epoch;
      }
    } else {
      best_params = params;
      best_raw = alpha.raw;
      best_epoch = epoch;
    }
    result.loss_trace.push_back(t);
    if (va.size() > 0 && epoch - best_epoch >= cfg.early_stop_patience) break;
  }

  result.scorer.params = std::move(best_params);
  result.raw_alpha = best_raw;
  result.learned_rate_per_day = decay::softplus(best_raw);
  result.best_epoch = best_epoch;
  return result;
}

}  // namespace tdl::model
