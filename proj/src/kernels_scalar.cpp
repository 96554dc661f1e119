// kernels_scalar.cpp — portable reference lane.
//
// These loops are the semantic definition of every kernel; the AVX2 lane is
// validated against them. gemm parallelizes over row blocks (disjoint output
// rows), so the summation order of each C entry never depends on the thread
// count.

#include <algorithm>
#include <cstddef>

#include "splicer/kernels/kernels.hpp"
#include "splicer/parallel.hpp"

namespace splicer::kernels::scalar {

namespace {

template <typename T>
void gemm_rows(std::size_t row_begin, std::size_t row_end, std::size_t n,
               std::size_t k, T alpha, const T* a, std::size_t lda, const T* b,
               std::size_t ldb, T beta, T* c, std::size_t ldc) {
  for (std::size_t i = row_begin; i < row_end; ++i) {
    T* crow = c + i * ldc;
    if (beta == T(0)) {
      std::fill(crow, crow + n, T(0));
    }
    const T* arow = a + i * lda;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const T av = alpha * arow[kk];
      const T* brow = b + kk * ldb;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += av * brow[j];
      }
    }
  }
}

template <typename T>
void gemm_impl(std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
               std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
               std::size_t ldc) {
  parallel_for(m, [&](std::size_t begin, std::size_t end) {
    gemm_rows(begin, end, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
  });
}

}  // namespace

void gemm_f32(std::size_t m, std::size_t n, std::size_t k, float alpha,
              const float* a, std::size_t lda, const float* b, std::size_t ldb,
              float beta, float* c, std::size_t ldc) {
  gemm_impl(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}
void gemm_f64(std::size_t m, std::size_t n, std::size_t k, double alpha,
              const double* a, std::size_t lda, const double* b,
              std::size_t ldb, double beta, double* c, std::size_t ldc) {
  gemm_impl(m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

template <typename T>
void add(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}
template <typename T>
void sub(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}
template <typename T>
void mul(const T* a, const T* b, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}
template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}
template <typename T>
void scale(T alpha, const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = alpha * x[i];
}
template <typename T>
void relu(const T* x, T* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
}
template <typename T>
void relu_backward(const T* x, const T* g, T* dx, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) {
    if (x[i] > T(0)) dx[i] += g[i];
  }
}

// Reductions use 4 independent accumulators (matching the unroll the AVX2
// lane uses across its vector slots at a coarser granularity) purely for
// speed; the order is fixed.
template <typename T>
T sum(const T* x, std::size_t n) {
  T acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 += x[i];
    acc1 += x[i + 1];
    acc2 += x[i + 2];
    acc3 += x[i + 3];
  }
  T acc = (acc0 + acc1) + (acc2 + acc3);
  for (; i < n; ++i) acc += x[i];
  return acc;
}
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T acc0 = 0, acc1 = 0, acc2 = 0, acc3 = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 += a[i] * b[i];
    acc1 += a[i + 1] * b[i + 1];
    acc2 += a[i + 2] * b[i + 2];
    acc3 += a[i + 3] * b[i + 3];
  }
  T acc = (acc0 + acc1) + (acc2 + acc3);
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}
template <typename T>
T sumsq(const T* x, std::size_t n) {
  return dot(x, x, n);
}

template void add<float>(const float*, const float*, float*, std::size_t);
template void add<double>(const double*, const double*, double*, std::size_t);
template void sub<float>(const float*, const float*, float*, std::size_t);
template void sub<double>(const double*, const double*, double*, std::size_t);
template void mul<float>(const float*, const float*, float*, std::size_t);
template void mul<double>(const double*, const double*, double*, std::size_t);
template void axpy<float>(float, const float*, float*, std::size_t);
template void axpy<double>(double, const double*, double*, std::size_t);
template void scale<float>(float, const float*, float*, std::size_t);
template void scale<double>(double, const double*, double*, std::size_t);
template void relu<float>(const float*, float*, std::size_t);
template void relu<double>(const double*, double*, std::size_t);
template void relu_backward<float>(const float*, const float*, float*,
                                   std::size_t);
template void relu_backward<double>(const double*, const double*, double*,
                                    std::size_t);
template float sum<float>(const float*, std::size_t);
template double sum<double>(const double*, std::size_t);
template float dot<float>(const float*, const float*, std::size_t);
template double dot<double>(const double*, const double*, std::size_t);
template float sumsq<float>(const float*, std::size_t);
template double sumsq<double>(const double*, std::size_t);

}  // namespace splicer::kernels::scalar
