#pragma once

// Data-parallel inner loops used by the signal, feature and model code.
//
// Every kernel has a scalar reference implementation and, on x86-64 builds, an
// AVX2/FMA variant. The variant is chosen once at startup from CPUID; setting
// TDL_ISA=scalar in the environment (or calling force_isa) pins the reference.
//
// Elementwise kernels (axpy, scale_shift, adam_step) perform the same IEEE
// operations in the same order in both variants and are bit-identical.
// Reductions (dot, sum, sum_sq_dev) use 4-lane partial sums in AVX2 and agree
// with the reference to rounding only.

#include <cstddef>
#include <span>
#include <string_view>

namespace tdl::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);
bool isa_supported(Isa isa);
Isa active_isa();
// Returns false (and changes nothing) if the ISA is unsupported on this CPU/build.
bool force_isa(Isa isa);

struct AdamCoeffs {
  double learning_rate;
  double beta1;
  double beta2;
  double epsilon;
  double bias_correction1;  // 1 - beta1^t
  double bias_correction2;  // 1 - beta2^t
};

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  double (*sum)(const double* x, std::size_t n);
  double (*sum_sq_dev)(const double* x, std::size_t n, double center);
  void (*scale_shift)(const double* x, double* out, std::size_t n, double shift, double scale);
  void (*adam_step)(double* param, const double* grad, double* m, double* v, std::size_t n, const AdamCoeffs& c);
};

const KernelTable& table_for(Isa isa);

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double sum_sq_dev(const double* x, std::size_t n, double center);
void scale_shift(const double* x, double* out, std::size_t n, double shift, double scale);
void adam_step(double* param, const double* grad, double* m, double* v, std::size_t n, const AdamCoeffs& c);
}  // namespace scalar

#if defined(TDL_BUILD_AVX2)
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double sum_sq_dev(const double* x, std::size_t n, double center);
void scale_shift(const double* x, double* out, std::size_t n, double shift, double scale);
void adam_step(double* param, const double* grad, double* m, double* v, std::size_t n, const AdamCoeffs& c);
}  // namespace avx2
#endif

// Dispatched entry points.
double dot(std::span<const double> a, std::span<const double> b);
// y += alpha * x
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double sum(std::span<const double> x);
// sum of (x - center)^2
double sum_sq_dev(std::span<const double> x, double center);
// out = (x - shift) * scale; out may alias x
void scale_shift(std::span<const double> x, std::span<double> out, double shift, double scale);
void adam_step(std::span<double> param, std::span<const double> grad, std::span<double> m, std::span<double> v,
               const AdamCoeffs& c);

}  // namespace tdl::kernels
