#include <atomic>
#include <cstdlib>
#include <string>

#include "tdl/common.hpp"
#include "tdl/kernels.hpp"

namespace tdl::kernels {

namespace {

constexpr KernelTable kScalarTable{
    scalar::dot, scalar::axpy, scalar::sum, scalar::sum_sq_dev, scalar::scale_shift, scalar::adam_step,
};

#if defined(TDL_BUILD_AVX2)
constexpr KernelTable kAvx2Table{
    avx2::dot, avx2::axpy, avx2::sum, avx2::sum_sq_dev, avx2::scale_shift, avx2::adam_step,
};
#endif

bool cpu_has_avx2() {
#if defined(TDL_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa detect_default() {
  if (const char* env = std::getenv("TDL_ISA")) {
    if (to_lower(env) == "scalar") return Isa::Scalar;
  }
  return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detect_default()};
  return isa;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

bool isa_supported(Isa isa) {
  if (isa == Isa::Scalar) return true;
  return cpu_has_avx2();
}

Isa active_isa() { return active().load(std::memory_order_relaxed); }

bool force_isa(Isa isa) {
  if (!isa_supported(isa)) return false;
  active().store(isa, std::memory_order_relaxed);
  return true;
}

const KernelTable& table_for(Isa isa) {
#if defined(TDL_BUILD_AVX2)
  if (isa == Isa::Avx2 && cpu_has_avx2()) return kAvx2Table;
#endif
  (void)isa;
  return kScalarTable;
}

namespace {
const KernelTable& current() { return table_for(active_isa()); }

void require_same_size(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw Error(ErrorKind::InvalidArgument, std::string(what) + ": length mismatch");
}
}  // namespace

double dot(std::span<const double> a, std::span<const double> b) {
  require_same_size(a.size(), b.size(), "dot");
  return current().dot(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  require_same_size(x.size(), y.size(), "axpy");
  current().axpy(alpha, x.data(), y.data(), x.size());
}

double sum(std::span<const double> x) { return current().sum(x.data(), x.size()); }

double sum_sq_dev(std::span<const double> x, double center) { return current().sum_sq_dev(x.data(), x.size(), center); }

void scale_shift(std::span<const double> x, std::span<double> out, double shift, double scale) {
  require_same_size(x.size(), out.size(), "scale_shift");
  current().scale_shift(x.data(), out.data(), x.size(), shift, scale);
}

void adam_step(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
               const AdamCoeffs& c) {
  require_same_size(param.size(), grad.size(), "adam_step");
  require_same_size(param.size(), m.size(), "adam_step");
  require_same_size(param.size(), v.size(), "adam_step");
  current().adam_step(param.data(), grad.data(), m.data(), v.data(), param.size(), c);
}

}  // namespace tdl::kernels
