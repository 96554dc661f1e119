// test_kernels.cpp — scalar/AVX2 lane equivalence and kernel oracles.

#include <cstring>
#include <vector>

#include "doctest.h"
#include "splicer/kernels/kernels.hpp"
#include "splicer/kernels/simd.hpp"
#include "splicer/parallel.hpp"
#include "splicer/rng.hpp"
#include "test_util.hpp"

using namespace splicer;

namespace {

struct LaneGuard {
  kernels::SimdLevel prev;
  explicit LaneGuard(kernels::SimdLevel lane) : prev(kernels::active_simd()) {
    kernels::set_simd(lane);
  }
  ~LaneGuard() { kernels::set_simd(prev); }
};

struct ThreadGuard {
  int prev;
  explicit ThreadGuard(int n) : prev(num_threads()) { set_num_threads(n); }
  ~ThreadGuard() { set_num_threads(prev); }
};

template <typename T>
std::vector<T> random_vec(std::size_t n, Rng& rng) {
  std::vector<T> v(n);
  for (auto& x : v) x = static_cast<T>(rng.gaussian());
  return v;
}

// independent triple-loop reference, accumulation in long double
template <typename T>
std::vector<T> gemm_oracle(std::size_t m, std::size_t n, std::size_t k,
                           const std::vector<T>& a, const std::vector<T>& b) {
  std::vector<T> c(m * n, T(0));
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      long double acc = 0;
      for (std::size_t kk = 0; kk < k; ++kk) {
        acc += static_cast<long double>(a[i * k + kk]) *
               static_cast<long double>(b[kk * n + j]);
      }
      c[i * n + j] = static_cast<T>(acc);
    }
  }
  return c;
}

const bool kHasAvx2 = kernels::detect_simd() == kernels::SimdLevel::avx2;

}  // namespace

TEST_CASE("gemm matches the triple-loop oracle on both lanes") {
  Rng rng(7);
  const std::size_t sizes[][3] = {
      {1, 1, 1}, {2, 3, 4}, {5, 7, 3}, {6, 16, 27}, {13, 33, 65}, {40, 50, 60}};
  for (auto [m, n, k] : sizes) {
    auto a = random_vec<double>(m * k, rng);
    auto b = random_vec<double>(k * n, rng);
    auto ref = gemm_oracle(m, n, k, a, b);
    for (auto lane : {kernels::SimdLevel::scalar, kernels::SimdLevel::avx2}) {
      if (lane == kernels::SimdLevel::avx2 && !kHasAvx2) continue;
      LaneGuard guard(lane);
      std::vector<double> c(m * n, -1.0);
      kernels::gemm(m, n, k, 1.0, a.data(), k, b.data(), n, 0.0, c.data(), n);
      CHECK(testutil::max_abs_diff(c, ref) < 1e-12);
    }
  }
}

TEST_CASE("gemm beta=1 accumulates") {
  Rng rng(8);
  const std::size_t m = 9, n = 21, k = 17;
  auto a = random_vec<double>(m * k, rng);
  auto b = random_vec<double>(k * n, rng);
  auto base = random_vec<double>(m * n, rng);
  auto ref = gemm_oracle(m, n, k, a, b);
  for (std::size_t i = 0; i < ref.size(); ++i) ref[i] += base[i];
  for (auto lane : {kernels::SimdLevel::scalar, kernels::SimdLevel::avx2}) {
    if (lane == kernels::SimdLevel::avx2 && !kHasAvx2) continue;
    LaneGuard guard(lane);
    auto c = base;
    kernels::gemm(m, n, k, 1.0, a.data(), k, b.data(), n, 1.0, c.data(), n);
    CHECK(testutil::max_abs_diff(c, ref) < 1e-12);
  }
}

TEST_CASE("gemm f32 lanes agree within accumulation tolerance") {
  if (!kHasAvx2) return;
  Rng rng(9);
  for (auto [m, n, k] : {std::array<std::size_t, 3>{17, 19, 128},
                         std::array<std::size_t, 3>{64, 96, 288},
                         std::array<std::size_t, 3>{6, 16, 1}}) {
    auto a = random_vec<float>(m * k, rng);
    auto b = random_vec<float>(k * n, rng);
    std::vector<float> c_scalar(m * n), c_avx(m * n);
    {
      LaneGuard guard(kernels::SimdLevel::scalar);
      kernels::gemm(m, n, k, 1.0f, a.data(), k, b.data(), n, 0.0f,
                    c_scalar.data(), n);
    }
    {
      LaneGuard guard(kernels::SimdLevel::avx2);
      kernels::gemm(m, n, k, 1.0f, a.data(), k, b.data(), n, 0.0f,
                    c_avx.data(), n);
    }
    const float tol = 1e-5f * static_cast<float>(k);
    CHECK(testutil::max_abs_diff(c_scalar, c_avx) < tol);
  }
}

TEST_CASE("elementwise kernels are bit-identical across lanes") {
  if (!kHasAvx2) return;
  Rng rng(10);
  for (std::size_t n : {1u, 7u, 8u, 9u, 64u, 1001u}) {
    auto a = random_vec<float>(n, rng);
    auto b = random_vec<float>(n, rng);
    std::vector<float> r_scalar(n), r_avx(n);
    auto both = [&](auto&& fn) {
      {
        LaneGuard g(kernels::SimdLevel::scalar);
        fn(r_scalar);
      }
      {
        LaneGuard g(kernels::SimdLevel::avx2);
        fn(r_avx);
      }
      CHECK(testutil::bitwise_equal_f(r_scalar, r_avx));
    };
    both([&](std::vector<float>& out) {
      kernels::add(a.data(), b.data(), out.data(), n);
    });
    both([&](std::vector<float>& out) {
      kernels::sub(a.data(), b.data(), out.data(), n);
    });
    both([&](std::vector<float>& out) {
      kernels::mul(a.data(), b.data(), out.data(), n);
    });
    both([&](std::vector<float>& out) {
      kernels::scale(1.7f, a.data(), out.data(), n);
    });
    both([&](std::vector<float>& out) {
      kernels::relu(a.data(), out.data(), n);
    });
    both([&](std::vector<float>& out) {
      out = b;
      kernels::axpy(0.3f, a.data(), out.data(), n);
    });
    both([&](std::vector<float>& out) {
      out.assign(n, 0.5f);
      kernels::relu_backward(a.data(), b.data(), out.data(), n);
    });
  }
}

TEST_CASE("reduction kernels agree across lanes to tolerance") {
  if (!kHasAvx2) return;
  Rng rng(11);
  for (std::size_t n : {1u, 15u, 16u, 17u, 513u, 4096u}) {
    auto a = random_vec<double>(n, rng);
    auto b = random_vec<double>(n, rng);
    double s0, s1, d0, d1, q0, q1;
    {
      LaneGuard g(kernels::SimdLevel::scalar);
      s0 = kernels::sum(a.data(), n);
      d0 = kernels::dot(a.data(), b.data(), n);
      q0 = kernels::sumsq(a.data(), n);
    }
    {
      LaneGuard g(kernels::SimdLevel::avx2);
      s1 = kernels::sum(a.data(), n);
      d1 = kernels::dot(a.data(), b.data(), n);
      q1 = kernels::sumsq(a.data(), n);
    }
    const double tol = 1e-12 * static_cast<double>(n);
    CHECK(std::abs(s0 - s1) < tol);
    CHECK(std::abs(d0 - d1) < tol);
    CHECK(std::abs(q0 - q1) < tol);
  }
}

TEST_CASE("transpose round-trips") {
  Rng rng(12);
  const std::size_t m = 13, n = 37;
  auto x = random_vec<double>(m * n, rng);
  std::vector<double> xt(m * n), back(m * n);
  kernels::transpose(x.data(), xt.data(), m, n);
  kernels::transpose(xt.data(), back.data(), n, m);
  CHECK(testutil::bitwise_equal_d(x, back));
}

TEST_CASE("gemm output is bitwise independent of the thread count") {
  Rng rng(13);
  const std::size_t m = 37, n = 33, k = 129;
  auto a = random_vec<float>(m * k, rng);
  auto b = random_vec<float>(k * n, rng);
  std::vector<std::vector<float>> results;
  for (int threads : {1, 2, 3}) {
    ThreadGuard tg(threads);
    std::vector<float> c(m * n);
    kernels::gemm(m, n, k, 1.0f, a.data(), k, b.data(), n, 0.0f, c.data(), n);
    results.push_back(std::move(c));
  }
  CHECK(testutil::bitwise_equal_f(results[0], results[1]));
  CHECK(testutil::bitwise_equal_f(results[0], results[2]));
}
