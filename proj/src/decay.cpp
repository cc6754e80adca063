#include "tdl/decay.hpp"

#include <cmath>
#include <numbers>

#include "tdl/common.hpp"

namespace tdl::decay {

std::string_view to_string(DecayFamily f) {
  switch (f) {
    case DecayFamily::Linear:
      return "linear";
    case DecayFamily::Exponential:
      return "exponential";
    case DecayFamily::Inverse:
      return "inverse";
    case DecayFamily::CosineAnnealing:
      return "cosine";
  }
  return "linear";
}

std::optional<DecayFamily> parse_family(std::string_view name) {
  std::string n = to_lower(trim(name));
  for (DecayFamily f : kAllFamilies) {
    if (n == to_string(f)) return f;
  }
  return std::nullopt;
}

std::string valid_family_names() { return "linear | exponential | inverse | cosine"; }

double softplus(double raw) { return std::max(raw, 0.0) + std::log1p(std::exp(-std::abs(raw))); }

double sigmoid(double raw) {
  if (raw >= 0.0) return 1.0 / (1.0 + std::exp(-raw));
  double e = std::exp(raw);
  return e / (1.0 + e);
}

double inverse_softplus(double rate) {
  if (!(rate > 0.0)) throw Error(ErrorKind::InvalidArgument, "inverse_softplus: rate must be > 0");
  // log(e^r - 1) = r + log(1 - e^-r)
  return rate + std::log(-std::expm1(-rate));
}

DecayParam DecayParam::from_rate(double rate_per_day, DecayFamily family) {
  return DecayParam{inverse_softplus(rate_per_day), family};
}

double g(DecayFamily family, double x) {
  switch (family) {
    case DecayFamily::Linear:
      return std::max(0.0, 1.0 - x);
    case DecayFamily::Exponential:
      return std::exp(-x);
    case DecayFamily::Inverse:
      return 1.0 / (1.0 + x);
    case DecayFamily::CosineAnnealing:
      return x <= 1.0 ? 0.5 * (1.0 + std::cos(std::numbers::pi * x)) : 0.0;
  }
  return 0.0;
}

double g_prime(DecayFamily family, double x) {
  switch (family) {
    case DecayFamily::Linear:
      return x < 1.0 ? -1.0 : 0.0;
    case DecayFamily::Exponential:
      return -std::exp(-x);
    case DecayFamily::Inverse:
      return -1.0 / ((1.0 + x) * (1.0 + x));
    case DecayFamily::CosineAnnealing:
      return x < 1.0 ? -0.5 * std::numbers::pi * std::sin(std::numbers::pi * x) : 0.0;
  }
  return 0.0;
}

bool has_kink(DecayFamily family) {
  return family == DecayFamily::Linear || family == DecayFamily::CosineAnnealing;
}

namespace {
void check_gap(double delta_t_days) {
  if (!(delta_t_days >= 0.0)) throw Error(ErrorKind::InvalidArgument, "decay weight: delta_t must be >= 0");
}
}  // namespace

double weight(const DecayParam& param, double delta_t_days) {
  check_gap(delta_t_days);
  return g(param.family, param.rate() * delta_t_days);
}

double dweight_draw(const DecayParam& param, double delta_t_days) {
  check_gap(delta_t_days);
  if (delta_t_days == 0.0) return 0.0;
  double x = param.rate() * delta_t_days;
  return g_prime(param.family, x) * delta_t_days * sigmoid(param.raw);
}

}  // namespace tdl::decay
