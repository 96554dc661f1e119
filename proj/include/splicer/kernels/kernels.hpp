// kernels.hpp — dense arithmetic kernels behind the tensor ops.
//
// Every kernel has a scalar reference implementation and may have an AVX2
// variant; the lane is chosen at runtime (see simd.hpp). Elementwise kernels
// are bit-identical across lanes; gemm and the reductions use per-lane
// accumulation orders and agree to floating-point tolerance (equivalence is
// enforced by tests/test_kernels.cpp). Within one lane and thread count all
// kernels are bitwise deterministic.
#pragma once

#include <cstddef>

namespace splicer::kernels {

// C[m x n] = alpha * A[m x k] * B[k x n] + beta * C, row-major, beta in {0,1}.
void gemm(std::size_t m, std::size_t n, std::size_t k, float alpha,
          const float* a, std::size_t lda, const float* b, std::size_t ldb,
          float beta, float* c, std::size_t ldc);
void gemm(std::size_t m, std::size_t n, std::size_t k, double alpha,
          const double* a, std::size_t lda, const double* b, std::size_t ldb,
          double beta, double* c, std::size_t ldc);

// out[i] = a[i] (+,-,*) b[i]
void add(const float* a, const float* b, float* out, std::size_t n);
void add(const double* a, const double* b, double* out, std::size_t n);
void sub(const float* a, const float* b, float* out, std::size_t n);
void sub(const double* a, const double* b, double* out, std::size_t n);
void mul(const float* a, const float* b, float* out, std::size_t n);
void mul(const double* a, const double* b, double* out, std::size_t n);

// y[i] += alpha * x[i]
void axpy(float alpha, const float* x, float* y, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);

// out[i] = alpha * x[i]
void scale(float alpha, const float* x, float* out, std::size_t n);
void scale(double alpha, const double* x, double* out, std::size_t n);

// out[i] = max(x[i], 0)
void relu(const float* x, float* out, std::size_t n);
void relu(const double* x, double* out, std::size_t n);

// dx[i] += g[i] * (x[i] > 0)
void relu_backward(const float* x, const float* g, float* dx, std::size_t n);
void relu_backward(const double* x, const double* g, double* dx, std::size_t n);

// reductions (fixed accumulation order per lane)
float sum(const float* x, std::size_t n);
double sum(const double* x, std::size_t n);
float dot(const float* a, const float* b, std::size_t n);
double dot(const double* a, const double* b, std::size_t n);
float sumsq(const float* x, std::size_t n);
double sumsq(const double* x, std::size_t n);

// out[n x m] = transpose of x[m x n], row-major. Plain blocked copy; shared by
// both lanes.
void transpose(const float* x, float* out, std::size_t m, std::size_t n);
void transpose(const double* x, double* out, std::size_t m, std::size_t n);

namespace scalar {
void gemm_f32(std::size_t m, std::size_t n, std::size_t k, float alpha,
              const float* a, std::size_t lda, const float* b, std::size_t ldb,
              float beta, float* c, std::size_t ldc);
void gemm_f64(std::size_t m, std::size_t n, std::size_t k, double alpha,
              const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double beta, double* c, std::size_t ldc);
template <typename T> void add(const T* a, const T* b, T* out, std::size_t n);
template <typename T> void sub(const T* a, const T* b, T* out, std::size_t n);
template <typename T> void mul(const T* a, const T* b, T* out, std::size_t n);
template <typename T> void axpy(T alpha, const T* x, T* y, std::size_t n);
template <typename T> void scale(T alpha, const T* x, T* out, std::size_t n);
template <typename T> void relu(const T* x, T* out, std::size_t n);
template <typename T>
void relu_backward(const T* x, const T* g, T* dx, std::size_t n);
template <typename T> T sum(const T* x, std::size_t n);
template <typename T> T dot(const T* a, const T* b, std::size_t n);
template <typename T> T sumsq(const T* x, std::size_t n);
}  // namespace scalar

#if defined(SPLICER_BUILD_AVX2)
namespace avx2 {
void gemm_f32(std::size_t m, std::size_t n, std::size_t k, float alpha,
              const float* a, std::size_t lda, const float* b, std::size_t ldb,
              float beta, float* c, std::size_t ldc);
void gemm_f64(std::size_t m, std::size_t n, std::size_t k, double alpha,
              const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double beta, double* c, std::size_t ldc);
void add_f32(const float* a, const float* b, float* out, std::size_t n);
void add_f64(const double* a, const double* b, double* out, std::size_t n);
void sub_f32(const float* a, const float* b, float* out, std::size_t n);
void sub_f64(const double* a, const double* b, double* out, std::size_t n);
void mul_f32(const float* a, const float* b, float* out, std::size_t n);
void mul_f64(const double* a, const double* b, double* out, std::size_t n);
void axpy_f32(float alpha, const float* x, float* y, std::size_t n);
void axpy_f64(double alpha, const double* x, double* y, std::size_t n);
void scale_f32(float alpha, const float* x, float* out, std::size_t n);
void scale_f64(double alpha, const double* x, double* out, std::size_t n);
void relu_f32(const float* x, float* out, std::size_t n);
void relu_f64(const double* x, double* out, std::size_t n);
void relu_backward_f32(const float* x, const float* g, float* dx,
                       std::size_t n);
void relu_backward_f64(const double* x, const double* g, double* dx,
                       std::size_t n);
float sum_f32(const float* x, std::size_t n);
double sum_f64(const double* x, std::size_t n);
float dot_f32(const float* a, const float* b, std::size_t n);
double dot_f64(const double* a, const double* b, std::size_t n);
float sumsq_f32(const float* x, std::size_t n);
double sumsq_f64(const double* x, std::size_t n);
}  // namespace avx2
#endif

}  // namespace splicer::kernels
