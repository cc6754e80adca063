#pragma once

// Decay families g(x), x = rate * delta_t, with g(0) = 1, non-increasing and in [0, 1].
// The rate is parameterized through softplus so it stays non-negative under
// unconstrained updates of the raw parameter.

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace tdl::decay {

enum class DecayFamily { Linear, Exponential, Inverse, CosineAnnealing };

inline constexpr std::array<DecayFamily, 4> kAllFamilies{
    DecayFamily::Linear, DecayFamily::Exponential, DecayFamily::Inverse, DecayFamily::CosineAnnealing};

// Config names: linear | exponential | inverse | cosine.
std::string_view to_string(DecayFamily f);
std::optional<DecayFamily> parse_family(std::string_view name);
std::string valid_family_names();

// ln(1 + e^raw), overflow-safe.
double softplus(double raw);
// d softplus / d raw
double sigmoid(double raw);
// raw such that softplus(raw) == rate; rate > 0.
double inverse_softplus(double rate);

struct DecayParam {
  double raw = 0.0;
  DecayFamily family = DecayFamily::Linear;

  double rate() const { return softplus(raw); }  // per day
  static DecayParam from_rate(double rate_per_day, DecayFamily family);
};

// g(x) for x >= 0.
double g(DecayFamily family, double x);
// g'(x); the flat-side value 0 at the Linear and Cosine kink x = 1.
double g_prime(DecayFamily family, double x);
// Only Linear and CosineAnnealing have a kink (at x = 1).
bool has_kink(DecayFamily family);

// w = g(rate * delta_t). Throws Error(InvalidArgument) for negative delta_t.
double weight(const DecayParam& param, double delta_t_days);
// dw / d raw = g'(x) * delta_t * sigmoid(raw).
double dweight_draw(const DecayParam& param, double delta_t_days);

}  // namespace tdl::decay
