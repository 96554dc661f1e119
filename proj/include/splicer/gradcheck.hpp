// gradcheck.hpp — central finite-difference validation of reverse-mode
// gradients. Test/oracle utility; not used by training code.
#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "splicer/tensor.hpp"

namespace splicer {

// Max over coordinates of |analytic - central| / max(1, |central|) for the
// scalar function f evaluated at x. f must be a pure function of its input.
template <typename T>
T finite_diff_check(const std::function<Tensor<T>(const Tensor<T>&)>& f,
                    Tensor<T> x, T h) {
  x.set_requires_grad(true);
  x.zero_grad();
  Tensor<T> loss = f(x);
  check(loss.size() == 1, "finite_diff_check: f must return a scalar");
  backward(loss);
  std::vector<T> analytic =
      x.has_grad() ? x.grad() : std::vector<T>(x.values().size(), T(0));

  std::vector<T>& vals = x.leaf_values();
  T worst = T(0);
  {
    NoGradGuard ng;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const T orig = vals[i];
      vals[i] = orig + h;
      const T fp = f(x).item();
      vals[i] = orig - h;
      const T fm = f(x).item();
      vals[i] = orig;
      check<NumericError>(std::isfinite(fp) && std::isfinite(fm),
                          "finite_diff_check: non-finite evaluation at "
                          "coordinate ",
                          i);
      const T central = (fp - fm) / (T(2) * h);
      const T err = std::abs(analytic[i] - central) /
                    std::max(T(1), std::abs(central));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Same check against one parameter of a multi-input function: f() reads the
// parameter through its captured handle.
template <typename T>
T finite_diff_check_param(const std::function<Tensor<T>()>& f, Tensor<T> param,
                          T h) {
  param.zero_grad();
  Tensor<T> loss = f();
  check(loss.size() == 1, "finite_diff_check_param: f must return a scalar");
  backward(loss);
  std::vector<T> analytic = param.has_grad()
                                ? param.grad()
                                : std::vector<T>(param.values().size(), T(0));
  std::vector<T>& vals = param.leaf_values();
  T worst = T(0);
  {
    NoGradGuard ng;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const T orig = vals[i];
      vals[i] = orig + h;
      const T fp = f().item();
      vals[i] = orig - h;
      const T fm = f().item();
      vals[i] = orig;
      check<NumericError>(std::isfinite(fp) && std::isfinite(fm),
                          "finite_diff_check_param: non-finite evaluation at "
                          "coordinate ",
                          i);
      const T central = (fp - fm) / (T(2) * h);
      const T err = std::abs(analytic[i] - central) /
                    std::max(T(1), std::abs(central));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

}  // namespace splicer
