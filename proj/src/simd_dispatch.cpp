// simd_dispatch.cpp — lane detection/selection and the dispatching entry
// points declared in kernels.hpp.

#include "splicer/kernels/simd.hpp"

#include <atomic>

#include "splicer/error.hpp"
#include "splicer/kernels/kernels.hpp"

namespace splicer::kernels {

namespace {

bool cpu_has_avx2_fma() {
#if defined(SPLICER_BUILD_AVX2) && (defined(__x86_64__) || defined(__i386__))
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

std::atomic<SimdLevel>& active_level() {
  static std::atomic<SimdLevel> level{detect_simd()};
  return level;
}

}  // namespace

SimdLevel detect_simd() {
  return cpu_has_avx2_fma() ? SimdLevel::avx2 : SimdLevel::scalar;
}

SimdLevel active_simd() { return active_level().load(std::memory_order_relaxed); }

void set_simd(SimdLevel level) {
  if (level == SimdLevel::avx2 && !cpu_has_avx2_fma()) {
    throw ConfigError("simd lane 'avx2' is not available on this CPU/build");
  }
  active_level().store(level, std::memory_order_relaxed);
}

SimdLevel parse_simd(const std::string& name) {
  if (name == "auto") return detect_simd();
  if (name == "scalar") return SimdLevel::scalar;
  if (name == "avx2") return SimdLevel::avx2;
  throw ConfigError(msg("unknown simd lane '", name, "' (auto|scalar|avx2)"));
}

std::string simd_name(SimdLevel level) {
  return level == SimdLevel::avx2 ? "avx2" : "scalar";
}

#if defined(SPLICER_BUILD_AVX2)
#define SPLICER_DISPATCH(avx2_call, scalar_call) \
  if (active_simd() == SimdLevel::avx2) {        \
    return avx2_call;                            \
  }                                              \
  return scalar_call
#else
#define SPLICER_DISPATCH(avx2_call, scalar_call) return scalar_call
#endif

void gemm(std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb,
          float beta, float* c, std::size_t ldc) {
  SPLICER_DISPATCH(avx2::gemm_f32(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc),
                   scalar::gemm_f32(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc));
}
void gemm(std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double beta, double* c, std::size_t ldc) {
  SPLICER_DISPATCH(avx2::gemm_f64(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc),
                   scalar::gemm_f64(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc));
}

void add(const float* a, const float* b, float* out, std::size_t n) {
  SPLICER_DISPATCH(avx2::add_f32(a, b, out, n), scalar::add(a, b, out, n));
}
void add(const double* a, const double* b, double* out, std::size_t n) {
  SPLICER_DISPATCH(avx2::add_f64(a, b, out, n), scalar::add(a, b, out, n));
}
void sub(const float* a, const float* b, float* out, std::size_t n) {
  SPLICER_DISPATCH(avx2::sub_f32(a, b, out, n), scalar::sub(a, b, out, n));
}
void sub(const double* a, const double* b, double* out, std::size_t n) {
  SPLICER_DISPATCH(avx2::sub_f64(a, b, out, n), scalar::sub(a, b, out, n));
}
void mul(const float* a, const float* b, float* out, std::size_t n) {
  SPLICER_DISPATCH(avx2::mul_f32(a, b, out, n), scalar::mul(a, b, out, n));
}
void mul(const double* a, const double* b, double* out, std::size_t n) {
  SPLICER_DISPATCH(avx2::mul_f64(a, b, out, n), scalar::mul(a, b, out, n));
}
void axpy(float alpha, const float* x, float* y, std::size_t n) {
  SPLICER_DISPATCH(avx2::axpy_f32(alpha, x, y, n), scalar::axpy(alpha, x, y, n));
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  SPLICER_DISPATCH(avx2::axpy_f64(alpha, x, y, n), scalar::axpy(alpha, x, y, n));
}
void scale(float alpha, const float* x, float* out, std::size_t n) {
  SPLICER_DISPATCH(avx2::scale_f32(alpha, x, out, n),
                   scalar::scale(alpha, x, out, n));
}
void scale(double alpha, const double* x, double* out, std::size_t n) {
  SPLICER_DISPATCH(avx2::scale_f64(alpha, x, out, n),
                   scalar::scale(alpha, x, out, n));
}
void relu(const float* x, float* out, std::size_t n) {
  SPLICER_DISPATCH(avx2::relu_f32(x, out, n), scalar::relu(x, out, n));
}
void relu(const double* x, double* out, std::size_t n) {
  SPLICER_DISPATCH(avx2::relu_f64(x, out, n), scalar::relu(x, out, n));
}
void relu_backward(const float* x, const float* g, float* dx, std::size_t n) {
  SPLICER_DISPATCH(avx2::relu_backward_f32(x, g, dx, n),
                   scalar::relu_backward(x, g, dx, n));
}
void relu_backward(const double* x, const double* g, double* dx, std::size_t n) {
  SPLICER_DISPATCH(avx2::relu_backward_f64(x, g, dx, n),
                   scalar::relu_backward(x, g, dx, n));
}
float sum(const float* x, std::size_t n) {
  SPLICER_DISPATCH(avx2::sum_f32(x, n), scalar::sum(x, n));
}
double sum(const double* x, std::size_t n) {
  SPLICER_DISPATCH(avx2::sum_f64(x, n), scalar::sum(x, n));
}
float dot(const float* a, const float* b, std::size_t n) {
  SPLICER_DISPATCH(avx2::dot_f32(a, b, n), scalar::dot(a, b, n));
}
double dot(const double* a, const double* b, std::size_t n) {
  SPLICER_DISPATCH(avx2::dot_f64(a, b, n), scalar::dot(a, b, n));
}
float sumsq(const float* x, std::size_t n) {
  SPLICER_DISPATCH(avx2::sumsq_f32(x, n), scalar::sumsq(x, n));
}
double sumsq(const double* x, std::size_t n) {
  SPLICER_DISPATCH(avx2::sumsq_f64(x, n), scalar::sumsq(x, n));
}

#undef SPLICER_DISPATCH

namespace {
template <typename T>
void transpose_impl(const T* x, T* out, std::size_t m, std::size_t n) {
  constexpr std::size_t kBlock = 32;
  for (std::size_t i0 = 0; i0 < m; i0 += kBlock) {
    const std::size_t i1 = std::min(m, i0 + kBlock);
    for (std::size_t j0 = 0; j0 < n; j0 += kBlock) {
      const std::size_t j1 = std::min(n, j0 + kBlock);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) {
          out[j * m + i] = x[i * n + j];
        }
      }
    }
  }
}
}  // namespace

void transpose(const float* x, float* out, std::size_t m, std::size_t n) {
  transpose_impl(x, out, m, n);
}
void transpose(const double* x, double* out, std::size_t m, std::size_t n) {
  transpose_impl(x, out, m, n);
}

}  // namespace splicer::kernels
