#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "tdl/common.hpp"
#include "tdl/kernels.hpp"

using namespace tdl;
using kernels::Isa;

namespace {

std::vector<double> random_vec(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal() * 3.0;
  return v;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_SUITE("kernels") {
  TEST_CASE("scalar reference values") {
    std::vector<double> a{1, 2, 3}, b{4, 5, 6};
    CHECK(kernels::scalar::dot(a.data(), b.data(), 3) == 32.0);
    CHECK(kernels::scalar::sum(a.data(), 3) == 6.0);
    CHECK(kernels::scalar::sum_sq_dev(a.data(), 3, 2.0) == 2.0);
    kernels::scalar::axpy(2.0, a.data(), b.data(), 3);
    CHECK(b == std::vector<double>{6, 9, 12});
    std::vector<double> out(3);
    kernels::scalar::scale_shift(a.data(), out.data(), 3, 2.0, 0.5);
    CHECK(out == std::vector<double>{-0.5, 0.0, 0.5});
  }

  TEST_CASE("scalar adam step matches the textbook update") {
    std::vector<double> p{1.0}, g{0.5}, m{0.0}, v{0.0};
    kernels::AdamCoeffs c{0.1, 0.9, 0.999, 1e-8, 0.1, 0.001};
    kernels::scalar::adam_step(p.data(), g.data(), m.data(), v.data(), 1, c);
    // First step moves by about lr in the gradient's direction.
    CHECK(m[0] == doctest::Approx(0.05));
    CHECK(v[0] == doctest::Approx(0.00025));
    CHECK(p[0] == doctest::Approx(0.9).epsilon(1e-6));
  }

  TEST_CASE("force_isa pins the scalar table") {
    auto before = kernels::active_isa();
    CHECK(kernels::force_isa(Isa::Scalar));
    CHECK(kernels::active_isa() == Isa::Scalar);
    kernels::force_isa(before);
    CHECK(kernels::isa_name(Isa::Scalar) == "scalar");
  }

  TEST_CASE("avx2 variant agrees with the scalar reference") {
    if (!kernels::isa_supported(Isa::Avx2)) {
      MESSAGE("AVX2 unavailable; equivalence not exercised");
      return;
    }
    const auto& s = kernels::table_for(Isa::Scalar);
    const auto& v = kernels::table_for(Isa::Avx2);
    Rng rng(2024);
    for (std::size_t n : {0u, 1u, 3u, 4u, 5u, 7u, 8u, 33u, 34u, 257u}) {
      auto a = random_vec(rng, n), b = random_vec(rng, n);
      double abs_dot = 0.0, abs_sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        abs_dot += std::abs(a[i] * b[i]);
        abs_sum += std::abs(a[i]);
      }
      const double eps = 1e-15 * static_cast<double>(n + 1);
      CHECK(std::abs(s.dot(a.data(), b.data(), n) - v.dot(a.data(), b.data(), n)) <= eps * abs_dot + 1e-300);
      CHECK(std::abs(s.sum(a.data(), n) - v.sum(a.data(), n)) <= eps * abs_sum + 1e-300);
      double sq = s.sum_sq_dev(a.data(), n, 0.3);
      CHECK(std::abs(sq - v.sum_sq_dev(a.data(), n, 0.3)) <= eps * sq + 1e-300);

      auto y1 = b, y2 = b;
      s.axpy(-0.7, a.data(), y1.data(), n);
      v.axpy(-0.7, a.data(), y2.data(), n);
      CHECK(bits_equal(y1, y2));

      std::vector<double> o1(n), o2(n);
      s.scale_shift(a.data(), o1.data(), n, 0.25, 1.7);
      v.scale_shift(a.data(), o2.data(), n, 0.25, 1.7);
      CHECK(bits_equal(o1, o2));

      auto p1 = a, p2 = a, m1 = b, m2 = b;
      std::vector<double> v1(n), v2(n);
      for (std::size_t i = 0; i < n; ++i) v1[i] = v2[i] = std::abs(b[i]);
      auto grad = random_vec(rng, n);
      kernels::AdamCoeffs c{1e-3, 0.9, 0.999, 1e-8, 1 - 0.9 * 0.9, 1 - 0.999 * 0.999};
      s.adam_step(p1.data(), grad.data(), m1.data(), v1.data(), n, c);
      v.adam_step(p2.data(), grad.data(), m2.data(), v2.data(), n, c);
      CHECK(bits_equal(p1, p2));
      CHECK(bits_equal(m1, m2));
      CHECK(bits_equal(v1, v2));
    }
  }

  TEST_CASE("scale_shift may alias") {
    std::vector<double> x{2.0, 4.0};
    kernels::scale_shift(x, x, 2.0, 0.5);
    CHECK(x == std::vector<double>{0.0, 1.0});
  }
}
