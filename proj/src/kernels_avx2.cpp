// kernels_avx2.cpp — AVX2+FMA lane.
//
// gemm uses broadcast-A register-blocked microkernels (6x16 f32, 4x8 f64)
// with zero-padded scratch panels for edge tiles. Elementwise kernels use
// mul+add rather than fused ops so they stay bit-identical to the scalar
// lane; gemm and the reductions keep FMA and are equivalence-tested to
// tolerance instead.

#if defined(SPLICER_BUILD_AVX2)

#include <immintrin.h>

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

#include "splicer/kernels/kernels.hpp"
#include "splicer/parallel.hpp"

namespace splicer::kernels::avx2 {

namespace {

// ---------------------------------------------------------------- f32 gemm

// C[6 x 16] tile: c += alpha * A[6 x k] * B[k x 16]
inline void mk6x16_f32(std::size_t k, float alpha, const float* a,
                       std::size_t lda, const float* b, std::size_t ldb,
                       float beta, float* c, std::size_t ldc) {
  __m256 acc00 = _mm256_setzero_ps(), acc01 = _mm256_setzero_ps();
  __m256 acc10 = _mm256_setzero_ps(), acc11 = _mm256_setzero_ps();
  __m256 acc20 = _mm256_setzero_ps(), acc21 = _mm256_setzero_ps();
  __m256 acc30 = _mm256_setzero_ps(), acc31 = _mm256_setzero_ps();
  __m256 acc40 = _mm256_setzero_ps(), acc41 = _mm256_setzero_ps();
  __m256 acc50 = _mm256_setzero_ps(), acc51 = _mm256_setzero_ps();
  for (std::size_t kk = 0; kk < k; ++kk) {
    const float* brow = b + kk * ldb;
    const __m256 b0 = _mm256_loadu_ps(brow);
    const __m256 b1 = _mm256_loadu_ps(brow + 8);
    __m256 av;
    av = _mm256_set1_ps(a[0 * lda + kk]);
    acc00 = _mm256_fmadd_ps(av, b0, acc00);
    acc01 = _mm256_fmadd_ps(av, b1, acc01);
    av = _mm256_set1_ps(a[1 * lda + kk]);
    acc10 = _mm256_fmadd_ps(av, b0, acc10);
    acc11 = _mm256_fmadd_ps(av, b1, acc11);
    av = _mm256_set1_ps(a[2 * lda + kk]);
    acc20 = _mm256_fmadd_ps(av, b0, acc20);
    acc21 = _mm256_fmadd_ps(av, b1, acc21);
    av = _mm256_set1_ps(a[3 * lda + kk]);
    acc30 = _mm256_fmadd_ps(av, b0, acc30);
    acc31 = _mm256_fmadd_ps(av, b1, acc31);
    av = _mm256_set1_ps(a[4 * lda + kk]);
    acc40 = _mm256_fmadd_ps(av, b0, acc40);
    acc41 = _mm256_fmadd_ps(av, b1, acc41);
    av = _mm256_set1_ps(a[5 * lda + kk]);
    acc50 = _mm256_fmadd_ps(av, b0, acc50);
    acc51 = _mm256_fmadd_ps(av, b1, acc51);
  }
  const __m256 va = _mm256_set1_ps(alpha);
  auto store_row = [&](float* crow, __m256 lo, __m256 hi) {
    __m256 r0 = _mm256_mul_ps(va, lo);
    __m256 r1 = _mm256_mul_ps(va, hi);
    if (beta != 0.0f) {
      r0 = _mm256_add_ps(r0, _mm256_loadu_ps(crow));
      r1 = _mm256_add_ps(r1, _mm256_loadu_ps(crow + 8));
    }
    _mm256_storeu_ps(crow, r0);
    _mm256_storeu_ps(crow + 8, r1);
  };
  store_row(c + 0 * ldc, acc00, acc01);
  store_row(c + 1 * ldc, acc10, acc11);
  store_row(c + 2 * ldc, acc20, acc21);
  store_row(c + 3 * ldc, acc30, acc31);
  store_row(c + 4 * ldc, acc40, acc41);
  store_row(c + 5 * ldc, acc50, acc51);
}

// ---------------------------------------------------------------- f64 gemm

// C[4 x 8] tile
inline void mk4x8_f64(std::size_t k, double alpha, const double* a,
                      std::size_t lda, const double* b, std::size_t ldb,
                      double beta, double* c, std::size_t ldc) {
  __m256d acc00 = _mm256_setzero_pd(), acc01 = _mm256_setzero_pd();
  __m256d acc10 = _mm256_setzero_pd(), acc11 = _mm256_setzero_pd();
  __m256d acc20 = _mm256_setzero_pd(), acc21 = _mm256_setzero_pd();
  __m256d acc30 = _mm256_setzero_pd(), acc31 = _mm256_setzero_pd();
  for (std::size_t kk = 0; kk < k; ++kk) {
    const double* brow = b + kk * ldb;
    const __m256d b0 = _mm256_loadu_pd(brow);
    const __m256d b1 = _mm256_loadu_pd(brow + 4);
    __m256d av;
    av = _mm256_set1_pd(a[0 * lda + kk]);
    acc00 = _mm256_fmadd_pd(av, b0, acc00);
    acc01 = _mm256_fmadd_pd(av, b1, acc01);
    av = _mm256_set1_pd(a[1 * lda + kk]);
    acc10 = _mm256_fmadd_pd(av, b0, acc10);
    acc11 = _mm256_fmadd_pd(av, b1, acc11);
    av = _mm256_set1_pd(a[2 * lda + kk]);
    acc20 = _mm256_fmadd_pd(av, b0, acc20);
    acc21 = _mm256_fmadd_pd(av, b1, acc21);
    av = _mm256_set1_pd(a[3 * lda + kk]);
    acc30 = _mm256_fmadd_pd(av, b0, acc30);
    acc31 = _mm256_fmadd_pd(av, b1, acc31);
  }
  const __m256d va = _mm256_set1_pd(alpha);
  auto store_row = [&](double* crow, __m256d lo, __m256d hi) {
    __m256d r0 = _mm256_mul_pd(va, lo);
    __m256d r1 = _mm256_mul_pd(va, hi);
    if (beta != 0.0) {
      r0 = _mm256_add_pd(r0, _mm256_loadu_pd(crow));
      r1 = _mm256_add_pd(r1, _mm256_loadu_pd(crow + 4));
    }
    _mm256_storeu_pd(crow, r0);
    _mm256_storeu_pd(crow + 4, r1);
  };
  store_row(c + 0 * ldc, acc00, acc01);
  store_row(c + 1 * ldc, acc10, acc11);
  store_row(c + 2 * ldc, acc20, acc21);
  store_row(c + 3 * ldc, acc30, acc31);
}

template <typename T>
struct GemmTraits;
template <>
struct GemmTraits<float> {
  static constexpr std::size_t MR = 6;
  static constexpr std::size_t NR = 16;
  static constexpr auto kernel = mk6x16_f32;
};
template <>
struct GemmTraits<double> {
  static constexpr std::size_t MR = 4;
  static constexpr std::size_t NR = 8;
  static constexpr auto kernel = mk4x8_f64;
};

// Row-range worker. Edge tiles run through zero-padded scratch panels so the
// microkernel never reads or writes out of bounds.
template <typename T>
void gemm_rows(std::size_t row_begin, std::size_t row_end, std::size_t n,
               std::size_t k, T alpha, const T* a, std::size_t lda, const T* b,
               std::size_t ldb, T beta, T* c, std::size_t ldc,
               const T* btail,  // k x NR zero-padded tail panel (may be null)
               std::size_t jtail) {
  using Traits = GemmTraits<T>;
  constexpr std::size_t MR = Traits::MR;
  constexpr std::size_t NR = Traits::NR;
  std::vector<T> apad;  // MR x k, allocated on first edge use
  T cpad[MR * NR];
  for (std::size_t i0 = row_begin; i0 < row_end; i0 += MR) {
    const std::size_t rows = std::min(MR, row_end - i0);
    const T* atile = a + i0 * lda;
    std::size_t atile_ld = lda;
    if (rows < MR) {
      apad.assign(MR * k, T(0));
      for (std::size_t r = 0; r < rows; ++r) {
        std::memcpy(apad.data() + r * k, a + (i0 + r) * lda, k * sizeof(T));
      }
      atile = apad.data();
      atile_ld = k;
    }
    std::size_t j0 = 0;
    for (; j0 + NR <= n; j0 += NR) {
      if (rows == MR) {
        Traits::kernel(k, alpha, atile, atile_ld, b + j0, ldb, beta,
                       c + i0 * ldc + j0, ldc);
      } else {
        for (std::size_t r = 0; r < rows; ++r) {
          if (beta != T(0)) {
            std::memcpy(cpad + r * NR, c + (i0 + r) * ldc + j0, NR * sizeof(T));
          }
        }
        if (beta == T(0)) std::memset(cpad, 0, sizeof(cpad));
        Traits::kernel(k, alpha, atile, atile_ld, b + j0, ldb, beta, cpad, NR);
        for (std::size_t r = 0; r < rows; ++r) {
          std::memcpy(c + (i0 + r) * ldc + j0, cpad + r * NR, NR * sizeof(T));
        }
      }
    }
    if (j0 < n) {
      // tail columns via the padded B panel
      std::memset(cpad, 0, sizeof(cpad));
      if (beta != T(0)) {
        for (std::size_t r = 0; r < rows; ++r) {
          std::memcpy(cpad + r * NR, c + (i0 + r) * ldc + j0,
                      jtail * sizeof(T));
        }
      }
      Traits::kernel(k, alpha, atile, atile_ld, btail, NR, beta, cpad, NR);
      for (std::size_t r = 0; r < rows; ++r) {
        std::memcpy(c + (i0 + r) * ldc + j0, cpad + r * NR, jtail * sizeof(T));
      }
    }
  }
}

template <typename T>
void gemm_impl(std::size_t m, std::size_t n, std::size_t k, T alpha, const T* a,
               std::size_t lda, const T* b, std::size_t ldb, T beta, T* c,
               std::size_t ldc) {
  constexpr std::size_t NR = GemmTraits<T>::NR;
  const std::size_t jtail = n % NR;
  std::vector<T> btail;
  if (jtail != 0) {
    const std::size_t j0 = n - jtail;
    btail.assign(k * NR, T(0));
    for (std::size_t kk = 0; kk < k; ++kk) {
      std::memcpy(btail.data() + kk * NR, b + kk * ldb + j0, jtail * sizeof(T));
    }
  }
  parallel_for(m, [&](std::size_t begin, std::size_t end) {
    gemm_rows(begin, end, n, k, alpha, a, lda, b, ldb, beta, c, ldc,
              btail.empty() ? nullptr : btail.data(), jtail);
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

// ---------------------------------------------------------------- elementwise

void add_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_add_ps(_mm256_loadu_ps(a + i),
                                            _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}
void add_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] + b[i];
}
void sub_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_sub_ps(_mm256_loadu_ps(a + i),
                                            _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}
void sub_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] - b[i];
}
void mul_f32(const float* a, const float* b, float* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_mul_ps(_mm256_loadu_ps(a + i),
                                            _mm256_loadu_ps(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}
void mul_f64(const double* a, const double* b, double* out, std::size_t n) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                            _mm256_loadu_pd(b + i)));
  }
  for (; i < n; ++i) out[i] = a[i] * b[i];
}
void axpy_f32(float alpha, const float* x, float* y, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 prod = _mm256_mul_ps(va, _mm256_loadu_ps(x + i));
    _mm256_storeu_ps(y + i, _mm256_add_ps(_mm256_loadu_ps(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}
void axpy_f64(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}
void scale_f32(float alpha, const float* x, float* out, std::size_t n) {
  const __m256 va = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_mul_ps(va, _mm256_loadu_ps(x + i)));
  }
  for (; i < n; ++i) out[i] = alpha * x[i];
}
void scale_f64(double alpha, const double* x, double* out, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
  }
  for (; i < n; ++i) out[i] = alpha * x[i];
}
void relu_f32(const float* x, float* out, std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    _mm256_storeu_ps(out + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0f ? x[i] : 0.0f;
}
void relu_f64(const double* x, double* out, std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
  }
  for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}
void relu_backward_f32(const float* x, const float* g, float* dx,
                       std::size_t n) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 mask = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    const __m256 gmask = _mm256_and_ps(_mm256_loadu_ps(g + i), mask);
    _mm256_storeu_ps(dx + i, _mm256_add_ps(_mm256_loadu_ps(dx + i), gmask));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0f) dx[i] += g[i];
  }
}
void relu_backward_f64(const double* x, const double* g, double* dx,
                       std::size_t n) {
  const __m256d zero = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d mask =
        _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
    const __m256d gmask = _mm256_and_pd(_mm256_loadu_pd(g + i), mask);
    _mm256_storeu_pd(dx + i, _mm256_add_pd(_mm256_loadu_pd(dx + i), gmask));
  }
  for (; i < n; ++i) {
    if (x[i] > 0.0) dx[i] += g[i];
  }
}

// ---------------------------------------------------------------- reductions

namespace {
inline float hsum(__m256 v) {
  alignas(32) float lanes[8];
  _mm256_store_ps(lanes, v);
  return ((lanes[0] + lanes[1]) + (lanes[2] + lanes[3])) +
         ((lanes[4] + lanes[5]) + (lanes[6] + lanes[7]));
}
inline double hsum(__m256d v) {
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, v);
  return (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
}
}  // namespace

float sum_f32(const float* x, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_add_ps(acc0, _mm256_loadu_ps(x + i));
    acc1 = _mm256_add_ps(acc1, _mm256_loadu_ps(x + i + 8));
  }
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}
double sum_f64(const double* x, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += x[i];
  return acc;
}
float dot_f32(const float* a, const float* b, std::size_t n) {
  __m256 acc0 = _mm256_setzero_ps(), acc1 = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 16 <= n; i += 16) {
    acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8),
                           _mm256_loadu_ps(b + i + 8), acc1);
  }
  float acc = hsum(_mm256_add_ps(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}
double dot_f64(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                           _mm256_loadu_pd(b + i + 4), acc1);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += a[i] * b[i];
  return acc;
}
float sumsq_f32(const float* x, std::size_t n) { return dot_f32(x, x, n); }
double sumsq_f64(const double* x, std::size_t n) { return dot_f64(x, x, n); }

}  // namespace splicer::kernels::avx2

#endif  // SPLICER_BUILD_AVX2
