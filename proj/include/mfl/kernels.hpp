#pragma once

// Dense double-precision kernels used by the model inner loops.
//
// Every kernel has a scalar reference implementation and, on x86-64, an
// AVX2+FMA variant. The active table is chosen once at startup from CPUID;
// set MFL_SIMD=scalar in the environment to force the reference path.

#include <cstddef>
#include <span>
#include <string_view>

namespace mfl::kernels {

enum class Isa { Scalar, Avx2 };

struct KernelTable {
  Isa isa;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[r] = bias[r] + W[r, :] . x   for a row-major rows x cols matrix
  void (*gemv)(const double* w, const double* bias, const double* x, double* out,
               std::size_t rows, std::size_t cols);
  // W[r, :] += coeff[r] * x
  void (*rank1)(const double* coeff, const double* x, double* w, std::size_t rows,
                std::size_t cols);
  // sum_i (a_i - b_i)^2
  double (*sq_dist)(const double* a, const double* b, std::size_t n);
};

const KernelTable& scalar_table();
// Null when the binary was built without AVX2 support.
const KernelTable* avx2_table();

bool cpu_has_avx2();

// Table selected for this process (CPUID + MFL_SIMD override).
const KernelTable& active();

std::string_view isa_name(Isa isa);

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}
inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  return active().sq_dist(a.data(), b.data(), a.size());
}
inline double sq_norm(std::span<const double> a) { return dot(a, a); }

}  // namespace mfl::kernels
