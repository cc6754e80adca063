#include <doctest.h>

#include <cmath>

#include "tdl/common.hpp"
#include "tdl/objective.hpp"

using namespace tdl;
using namespace tdl::objective;
using decay::DecayFamily;
using decay::DecayParam;

namespace {

// Direct evaluation of the loss, no shared code with weighted_loss.
double oracle_total(const std::vector<double>& logits, const std::vector<int>& y, const std::vector<double>& dt,
                    const DecayParam& p, double lambda) {
  double s = 0.0, w_sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    double prob = 1.0 / (1.0 + std::exp(-logits[i]));
    prob = std::min(std::max(prob, 1e-7), 1.0 - 1e-7);
    double l = y[i] ? -std::log(prob) : -std::log(1.0 - prob);
    double w = decay::g(p.family, p.rate() * dt[i]);
    s += w * l;
    w_sum += w;
  }
  double n = static_cast<double>(logits.size());
  return s / n - lambda * w_sum / n;
}

}  // namespace

TEST_SUITE("objective") {
  TEST_CASE("bce values") {
    CHECK(bce(1.0, 1) < 1e-6);
    CHECK(bce(0.0, 0) < 1e-6);
    CHECK(bce(0.5, 1) == doctest::Approx(std::log(2.0)));
    CHECK(bce(0.5, 0) == doctest::Approx(std::log(2.0)));
    CHECK(bce(1e-7, 1) == doctest::Approx(-std::log(1e-7)));
    CHECK(std::isfinite(bce(0.0, 1)));
  }

  TEST_CASE("two-sample worked example") {
    std::vector<double> logits{0.0, 0.0}, dt{0.0, 5.0};
    std::vector<int> y{1, 0};
    auto r = weighted_loss(logits, y, dt, DecayParam::from_rate(0.1, DecayFamily::Linear), {});
    CHECK(r.weighted_bce == doctest::Approx(0.75 * std::log(2.0)).epsilon(1e-12));
    CHECK(r.weighted_bce == doctest::Approx(0.5199).epsilon(1e-4));
    CHECK(r.mean_weight == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(r.total == doctest::Approx(0.1449).epsilon(1e-3));
    CHECK(r.total == doctest::Approx(0.75 * std::log(2.0) - 0.375).epsilon(1e-12));
  }

  TEST_CASE("uniform weights and no bonus reduce to mean BCE") {
    Rng rng(2);
    std::vector<double> logits(20), dt(20);
    std::vector<int> y(20);
    double plain = 0.0;
    for (std::size_t i = 0; i < 20; ++i) {
      logits[i] = rng.normal();
      y[i] = rng.bernoulli(0.5);
      dt[i] = rng.uniform(0, 30);
      plain += bce(logistic(logits[i]), y[i]);
    }
    auto r = weighted_loss(logits, y, dt, DecayParam{-60.0, DecayFamily::Linear}, {0.0, kDefaultBceEpsilon});
    CHECK(r.total == doctest::Approx(plain / 20).epsilon(1e-12));
    auto u = weighted_loss(logits, y, dt, DecayParam{0.3, DecayFamily::Linear}, {0.0, kDefaultBceEpsilon}, Weighting::Uniform);
    CHECK(u.total == doctest::Approx(plain / 20).epsilon(1e-12));
    CHECK(u.d_total_d_raw_alpha == 0.0);
  }

  TEST_CASE("fully down-weighted batch") {
    std::vector<double> logits{1.0, -2.0}, dt{20.0, 25.0};
    std::vector<int> y{0, 1};
    auto r = weighted_loss(logits, y, dt, DecayParam::from_rate(0.1, DecayFamily::Linear), {});
    CHECK(r.total == 0.0);
    for (double d : r.d_total_d_logits) CHECK(d == 0.0);
  }

  TEST_CASE("malformed batches") {
    std::vector<double> one{0.0}, two{0.0, 1.0};
    std::vector<int> y1{1};
    CHECK_THROWS_AS(weighted_loss(two, y1, two, DecayParam{}, {}), Error);
    CHECK_THROWS_AS(weighted_loss({}, {}, {}, DecayParam{}, {}), Error);
  }

  TEST_CASE("bonus sign checks") {
    DecayParam p{0.2, DecayFamily::Exponential};
    std::vector<double> dt{1.0, 3.0, 7.0, 12.0};
    Hyperparams hp;
    CHECK(bonus_interpretation_check(p, dt, hp));
    CHECK(alpha_gradient_at_constant_bce(p, dt, hp.lambda, hp) == doctest::Approx(0.0).scale(1.0));
    // Gradient descent on raw alpha: positive gradient lowers the rate, raising the weights.
    CHECK(alpha_gradient_at_constant_bce(p, dt, 2.0 * hp.lambda, hp) < 0.0);
    CHECK(alpha_gradient_at_constant_bce(p, dt, 0.0, hp) > 0.0);
  }

  TEST_CASE("gradients match central differences") {
    Rng rng(43);
    const double h = 1e-5;
    for (int t = 0; t < 200; ++t) {
      std::size_t n = 1 + rng.below(40);
      auto fam = decay::kAllFamilies[rng.below(4)];
      DecayParam p{rng.uniform(-3.0, 0.5), fam};
      std::vector<double> logits(n), dt(n);
      std::vector<int> y(n);
      bool near_kink = false;
      for (std::size_t i = 0; i < n; ++i) {
        logits[i] = rng.normal() * 2.0;
        y[i] = rng.bernoulli(0.5);
        dt[i] = rng.uniform(0, 30);
        if (decay::has_kink(fam) && std::abs(p.rate() * dt[i] - 1.0) < 1e-3) near_kink = true;
      }
      if (near_kink) continue;
      Hyperparams hp;
      auto r = weighted_loss(logits, y, dt, p, hp);
      CHECK(r.total == doctest::Approx(oracle_total(logits, y, dt, p, hp.lambda)).epsilon(1e-12));
      double fd_a = (oracle_total(logits, y, dt, {p.raw + h, fam}, hp.lambda) -
                     oracle_total(logits, y, dt, {p.raw - h, fam}, hp.lambda)) / (2 * h);
      CHECK(std::abs(fd_a - r.d_total_d_raw_alpha) <= 1e-6 * std::max(1.0, std::abs(fd_a)));
      std::size_t i = rng.below(n);
      auto up = logits, dn = logits;
      up[i] += h;
      dn[i] -= h;
      double fd_l = (oracle_total(up, y, dt, p, hp.lambda) - oracle_total(dn, y, dt, p, hp.lambda)) / (2 * h);
      CHECK(std::abs(fd_l - r.d_total_d_logits[i]) <= 1e-6 * std::max(1.0, std::abs(fd_l)));
    }
  }

  TEST_CASE("total decomposes into weighted BCE minus the bonus") {
    Rng rng(47);
    for (int t = 0; t < 50; ++t) {
      std::vector<double> logits(16), dt(16);
      std::vector<int> y(16);
      for (std::size_t i = 0; i < 16; ++i) {
        logits[i] = rng.normal();
        y[i] = rng.bernoulli(0.3);
        dt[i] = rng.uniform(0, 30);
      }
      Hyperparams hp{rng.uniform(0.0, 1.0), kDefaultBceEpsilon};
      auto r = weighted_loss(logits, y, dt, DecayParam{rng.normal(), decay::DecayFamily::Inverse}, hp);
      CHECK(r.total == doctest::Approx(r.weighted_bce - hp.lambda * r.mean_weight).epsilon(1e-12));
      CHECK(r.mean_weight >= 0.0);
      CHECK(r.mean_weight <= 1.0);
    }
  }

  TEST_CASE("staler batches weigh less") {
    std::vector<double> logits(10, 0.3);
    std::vector<int> y(10, 1);
    DecayParam p = DecayParam::from_rate(0.05, DecayFamily::Exponential);
    double prev = 2.0;
    for (double shift = 0.0; shift <= 30.0; shift += 3.0) {
      std::vector<double> dt(10, shift);
      auto r = weighted_loss(logits, y, dt, p, {});
      CHECK(r.mean_weight < prev);
      prev = r.mean_weight;
    }
  }
}
