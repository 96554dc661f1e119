// test_ops_grad.cpp — finite-difference property sweep over every
// differentiable op. The acceptance suite reruns this at 100 trials; here a
// handful of trials per op keeps the unit run quick.

#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "splicer/gradcheck.hpp"
#include "splicer/nn_ops.hpp"
#include "splicer/ops.hpp"
#include "splicer/rng.hpp"
#include "test_util.hpp"

using namespace splicer;

namespace {

// Gaussian shifted away from zero, for ops with a kink or domain edge there.
template <typename T>
Tensor<T> rand_away_from_zero(Shape shape, Rng& rng, T margin) {
  std::vector<T> vals(static_cast<std::size_t>(numel(shape)));
  for (auto& v : vals) {
    const T g = static_cast<T>(rng.gaussian());
    v = g + (g >= 0 ? margin : -margin);
  }
  return Tensor<T>::from(std::move(shape), std::move(vals));
}

template <typename T>
Tensor<T> rand_positive(Shape shape, Rng& rng, T floor) {
  std::vector<T> vals(static_cast<std::size_t>(numel(shape)));
  for (auto& v : vals) v = std::abs(static_cast<T>(rng.gaussian())) + floor;
  return Tensor<T>::from(std::move(shape), std::move(vals));
}

using Fn = std::function<Tensor<double>(const Tensor<double>&)>;

void check_op(const std::string& name, const Fn& f, const Tensor<double>& x,
              int trials_done, double tol = 1e-6) {
  (void)trials_done;
  const double err = finite_diff_check<double>(f, x, 1e-6);
  INFO("op: " << name);
  CHECK(err < tol);
}

}  // namespace

TEST_CASE("gradcheck: elementwise and scalar ops") {
  Rng rng(40);
  for (int t = 0; t < 5; ++t) {
    auto x = testutil::random_tensor<double>({4, 6}, rng);
    auto other = testutil::random_tensor<double>({4, 6}, rng);
    check_op("add", [&](const Tensor<double>& v) {
      return sum_all(mul(add(v, other), other));
    }, x, t);
    check_op("sub", [&](const Tensor<double>& v) {
      return sum_all(mul(sub(other, v), other));
    }, x, t);
    check_op("mul", [&](const Tensor<double>& v) {
      return sum_all(mul(mul(v, other), other));
    }, x, t);
    check_op("scale", [&](const Tensor<double>& v) {
      return sum_all(mul(scale(v, 1.7), other));
    }, x, t);
    check_op("add_scalar", [&](const Tensor<double>& v) {
      return sum_all(mul(add_scalar(v, 0.3), other));
    }, x, t);
    check_op("sub_from_scalar", [&](const Tensor<double>& v) {
      return sum_all(mul(sub_from_scalar(0.9, v), other));
    }, x, t);

    auto xk = rand_away_from_zero<double>({4, 6}, rng, 0.2);
    check_op("relu", [&](const Tensor<double>& v) {
      return sum_all(mul(relu(v), other));
    }, xk, t);

    auto xp = rand_positive<double>({4, 6}, rng, 0.5);
    check_op("log", [&](const Tensor<double>& v) {
      return sum_all(mul(log(v), other));
    }, xp, t);
    check_op("sqrt", [&](const Tensor<double>& v) {
      return sum_all(mul(sqrt(v), other));
    }, xp, t);
    check_op("exp", [&](const Tensor<double>& v) {
      return sum_all(mul(exp(v), other));
    }, x, t);
  }
}

TEST_CASE("gradcheck: linear algebra ops") {
  Rng rng(41);
  for (int t = 0; t < 5; ++t) {
    auto x = testutil::random_tensor<double>({3, 5}, rng);
    auto m = testutil::random_tensor<double>({5, 4}, rng);
    auto weight = testutil::random_tensor<double>({4, 5}, rng, 1.0, true);
    auto bias = testutil::random_tensor<double>({4}, rng, 1.0, true);

    check_op("matmul_lhs", [&](const Tensor<double>& v) {
      return sum_all(mul(matmul(v, m), matmul(v, m)));
    }, x, t);
    check_op("matmul_rhs", [&](const Tensor<double>& v) {
      auto a = testutil::random_tensor<double>({1, 1}, rng);  // keep rng moving
      (void)a;
      return mean_all(mul(matmul(transpose(m), transpose(v)),
                          matmul(transpose(m), transpose(v))));
    }, x, t);
    check_op("transpose", [&](const Tensor<double>& v) {
      return sum_all(mul(transpose(v), transpose(v)));
    }, x, t);
    check_op("linear_input", [&](const Tensor<double>& v) {
      return mean_all(mul(linear(v, weight, bias), linear(v, weight, bias)));
    }, x, t);
    const double werr = finite_diff_check_param<double>(
        [&]() { return mean_all(mul(linear(x, weight, bias),
                                    linear(x, weight, bias))); },
        weight, 1e-6);
    CHECK(werr < 1e-6);
    const double berr = finite_diff_check_param<double>(
        [&]() { return mean_all(mul(linear(x, weight, bias),
                                    linear(x, weight, bias))); },
        bias, 1e-6);
    CHECK(berr < 1e-6);
  }
}

TEST_CASE("gradcheck: shape ops") {
  Rng rng(42);
  for (int t = 0; t < 5; ++t) {
    auto x = testutil::random_tensor<double>({3, 8}, rng);
    auto other = testutil::random_tensor<double>({3, 8}, rng);
    auto w3 = testutil::random_tensor<double>({3, 3}, rng);
    check_op("reshape", [&](const Tensor<double>& v) {
      return sum_all(mul(reshape(v, {8, 3}), reshape(other, {8, 3})));
    }, x, t);
    check_op("flatten", [&](const Tensor<double>& v) {
      return sum_all(mul(flatten(reshape(v, {3, 2, 2, 2})), other));
    }, x, t);
    check_op("slice_cols", [&](const Tensor<double>& v) {
      auto s = slice_cols(v, 2, 3);
      return sum_all(mul(s, mul(s, s)));
    }, x, t);
    check_op("concat_cols", [&](const Tensor<double>& v) {
      auto c = concat<double>({slice_cols(v, 0, 5), slice_cols(v, 5, 3)}, 1);
      return sum_all(mul(c, other));
    }, x, t);
    check_op("concat_rows", [&](const Tensor<double>& v) {
      auto c = concat<double>({v, mul(v, v)}, 0);
      return mean_all(mul(c, c));
    }, x, t);
    (void)w3;
  }
}

TEST_CASE("gradcheck: reductions and broadcasts") {
  Rng rng(43);
  for (int t = 0; t < 5; ++t) {
    auto x = testutil::random_tensor<double>({5, 4}, rng);
    auto vec = testutil::random_tensor<double>({4}, rng, 1.0, true);
    auto other = testutil::random_tensor<double>({5, 4}, rng);

    check_op("sum_all", [&](const Tensor<double>& v) {
      return sum_all(mul(v, other));
    }, x, t);
    check_op("mean_all", [&](const Tensor<double>& v) {
      return mean_all(mul(v, other));
    }, x, t);
    check_op("row_sum", [&](const Tensor<double>& v) {
      auto r = row_sum(v);
      return sum_all(mul(r, r));
    }, x, t);
    check_op("col_mean", [&](const Tensor<double>& v) {
      auto m = col_mean(v);
      return sum_all(mul(m, m));
    }, x, t);
    check_op("col_variance", [&](const Tensor<double>& v) {
      auto var = col_variance(v);
      return sum_all(mul(var, var));
    }, x, t);
    check_op("col_variance_biased", [&](const Tensor<double>& v) {
      return sum_all(col_variance(v, false));
    }, x, t);
    check_op("sub_rowvec", [&](const Tensor<double>& v) {
      auto y = sub_rowvec(v, vec);
      return sum_all(mul(y, y));
    }, x, t);
    check_op("add_rowvec", [&](const Tensor<double>& v) {
      auto y = add_rowvec(v, vec);
      return sum_all(mul(y, y));
    }, x, t);
    check_op("mul_rowvec", [&](const Tensor<double>& v) {
      auto y = mul_rowvec(v, vec);
      return sum_all(mul(y, y));
    }, x, t);
    const double verr = finite_diff_check_param<double>(
        [&]() {
          auto y = mul_rowvec(x, vec);
          return sum_all(mul(y, y));
        },
        vec, 1e-6);
    CHECK(verr < 1e-6);
  }
}

TEST_CASE("gradcheck: normalization and softmax family") {
  Rng rng(44);
  for (int t = 0; t < 5; ++t) {
    auto x = testutil::random_tensor<double>({4, 6}, rng);
    auto other = testutil::random_tensor<double>({4, 6}, rng);
    std::vector<int> labels = {0, 3, 5, 1};

    check_op("l2_normalize", [&](const Tensor<double>& v) {
      return sum_all(mul(l2_normalize(v), other));
    }, x, t);
    check_op("softmax", [&](const Tensor<double>& v) {
      return sum_all(mul(softmax(v), other));
    }, x, t);
    check_op("log_softmax", [&](const Tensor<double>& v) {
      return sum_all(mul(log_softmax(v), other));
    }, x, t);
    check_op("nll_loss", [&](const Tensor<double>& v) {
      return nll_loss(log_softmax(v), labels);
    }, x, t);
  }
}

TEST_CASE("gradcheck: conv, batchnorm, pooling") {
  Rng rng(45);
  for (int t = 0; t < 3; ++t) {
    auto x = testutil::random_tensor<double>({2, 2, 5, 5}, rng);
    auto w = testutil::random_tensor<double>({3, 2, 3, 3}, rng, 0.7, true);
    auto gamma = rand_away_from_zero<double>({2}, rng, 0.5);
    gamma.set_requires_grad(true);
    auto beta = testutil::random_tensor<double>({2}, rng, 0.5, true);

    check_op("conv2d_input", [&](const Tensor<double>& v) {
      auto y = conv2d(v, w, 2, 1);
      return mean_all(mul(y, y));
    }, x, t);
    const double werr = finite_diff_check_param<double>(
        [&]() {
          auto y = conv2d(x, w, 1, 1);
          return mean_all(mul(y, y));
        },
        w, 1e-6);
    CHECK(werr < 1e-6);

    check_op("batchnorm2d_input", [&](const Tensor<double>& v) {
      auto y = batchnorm2d<double>(v, gamma, beta, 1e-5, true, nullptr);
      return mean_all(mul(y, mul(y, y)));
    }, x, t);
    const double gerr = finite_diff_check_param<double>(
        [&]() {
          auto y = batchnorm2d<double>(x, gamma, beta, 1e-5, true, nullptr);
          return mean_all(mul(y, mul(y, y)));
        },
        gamma, 1e-6);
    CHECK(gerr < 1e-6);

    // eval mode: gradients flow through the frozen affine transform
    BatchNormState<double> state(2);
    state.mean = {0.3, -0.2};
    state.var = {1.4, 0.8};
    check_op("batchnorm2d_eval", [&](const Tensor<double>& v) {
      auto y = batchnorm2d<double>(v, gamma, beta, 1e-5, false, &state);
      return mean_all(mul(y, y));
    }, x, t);

    auto xbn = testutil::random_tensor<double>({6, 4}, rng);
    auto g1 = rand_away_from_zero<double>({4}, rng, 0.5);
    g1.set_requires_grad(true);
    auto b1 = testutil::random_tensor<double>({4}, rng, 0.5, true);
    check_op("batchnorm_input", [&](const Tensor<double>& v) {
      auto y = batchnorm<double>(v, g1, b1, 1e-5, true, nullptr);
      return mean_all(mul(y, mul(y, y)));
    }, xbn, t);

    check_op("max_pool2d", [&](const Tensor<double>& v) {
      auto y = max_pool2d(v, 2, 2);
      return mean_all(mul(y, y));
    }, x, t);
    check_op("spatial_mean", [&](const Tensor<double>& v) {
      auto y = spatial_mean(v);
      return mean_all(mul(y, y));
    }, x, t);
  }
}
