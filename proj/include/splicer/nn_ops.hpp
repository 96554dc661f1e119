// nn_ops.hpp — convolution, batch normalization and pooling ops.
//
// conv2d lowers to im2col + gemm so the inner loop runs on the kernel lanes;
// the column matrix is recomputed in backward instead of cached (activations
// stay small, im2col is memory-bound). Scatter passes parallelize over the
// batch axis only, which keeps results independent of the thread count.
#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "splicer/ops.hpp"
#include "splicer/parallel.hpp"
#include "splicer/tensor.hpp"

namespace splicer {

namespace detail {

struct Conv2dDims {
  std::int64_t batch, in_c, in_h, in_w;
  std::int64_t filters, kh, kw;
  std::int64_t stride, pad;
  std::int64_t out_h, out_w;
  std::size_t patch() const { return static_cast<std::size_t>(in_c * kh * kw); }
  std::size_t out_positions() const {
    return static_cast<std::size_t>(batch * out_h * out_w);
  }
};

template <typename T>
void im2col(const T* x, const Conv2dDims& d, T* cols) {
  const std::size_t K = d.patch();
  parallel_for(static_cast<std::size_t>(d.batch), [&](std::size_t b0,
                                                      std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      const T* img = x + b * d.in_c * d.in_h * d.in_w;
      T* crow = cols + b * d.out_h * d.out_w * K;
      for (std::int64_t oy = 0; oy < d.out_h; ++oy) {
        for (std::int64_t ox = 0; ox < d.out_w; ++ox) {
          for (std::int64_t c = 0; c < d.in_c; ++c) {
            const T* chan = img + c * d.in_h * d.in_w;
            for (std::int64_t ky = 0; ky < d.kh; ++ky) {
              const std::int64_t iy = oy * d.stride - d.pad + ky;
              for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                const std::int64_t ix = ox * d.stride - d.pad + kx;
                *crow++ = (iy >= 0 && iy < d.in_h && ix >= 0 && ix < d.in_w)
                              ? chan[iy * d.in_w + ix]
                              : T(0);
              }
            }
          }
        }
      }
    }
  });
}

template <typename T>
void col2im_add(const T* cols, const Conv2dDims& d, T* dx) {
  const std::size_t K = d.patch();
  parallel_for(static_cast<std::size_t>(d.batch), [&](std::size_t b0,
                                                      std::size_t b1) {
    for (std::size_t b = b0; b < b1; ++b) {
      T* img = dx + b * d.in_c * d.in_h * d.in_w;
      const T* crow = cols + b * d.out_h * d.out_w * K;
      for (std::int64_t oy = 0; oy < d.out_h; ++oy) {
        for (std::int64_t ox = 0; ox < d.out_w; ++ox) {
          for (std::int64_t c = 0; c < d.in_c; ++c) {
            T* chan = img + c * d.in_h * d.in_w;
            for (std::int64_t ky = 0; ky < d.kh; ++ky) {
              const std::int64_t iy = oy * d.stride - d.pad + ky;
              for (std::int64_t kx = 0; kx < d.kw; ++kx) {
                const std::int64_t ix = ox * d.stride - d.pad + kx;
                const T v = *crow++;
                if (iy >= 0 && iy < d.in_h && ix >= 0 && ix < d.in_w) {
                  chan[iy * d.in_w + ix] += v;
                }
              }
            }
          }
        }
      }
    }
  });
}

// [M x F] position-major matrix -> [B, F, OH, OW]
template <typename T>
void positions_to_bchw(const T* mat, const Conv2dDims& d, T* out) {
  parallel_for(static_cast<std::size_t>(d.batch), [&](std::size_t b0,
                                                      std::size_t b1) {
    const std::size_t hw = static_cast<std::size_t>(d.out_h * d.out_w);
    for (std::size_t b = b0; b < b1; ++b) {
      const T* src = mat + b * hw * d.filters;
      T* dst = out + b * d.filters * hw;
      for (std::size_t p = 0; p < hw; ++p) {
        for (std::int64_t f = 0; f < d.filters; ++f) {
          dst[f * hw + p] = src[p * d.filters + f];
        }
      }
    }
  });
}

template <typename T>
void bchw_to_positions(const T* x, const Conv2dDims& d, T* mat) {
  parallel_for(static_cast<std::size_t>(d.batch), [&](std::size_t b0,
                                                      std::size_t b1) {
    const std::size_t hw = static_cast<std::size_t>(d.out_h * d.out_w);
    for (std::size_t b = b0; b < b1; ++b) {
      const T* src = x + b * d.filters * hw;
      T* dst = mat + b * hw * d.filters;
      for (std::int64_t f = 0; f < d.filters; ++f) {
        for (std::size_t p = 0; p < hw; ++p) {
          dst[p * d.filters + f] = src[f * hw + p];
        }
      }
    }
  });
}

}  // namespace detail

// Cross-correlation convolution of x[B,C,H,W] with w[F,C,kh,kw].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, std::int64_t stride,
                 std::int64_t padding) {
  check(x.ndim() == 4, "conv2d: input must be [B,C,H,W], got ",
        shape_str(x.shape()));
  check(w.ndim() == 4, "conv2d: weight must be [F,C,kh,kw], got ",
        shape_str(w.shape()));
  check(x.dim(1) == w.dim(1), "conv2d: input has ", x.dim(1),
        " channels, weight expects ", w.dim(1));
  check(stride >= 1, "conv2d: stride must be >= 1");
  check(padding >= 0, "conv2d: padding must be >= 0");
  detail::Conv2dDims d;
  d.batch = x.dim(0); d.in_c = x.dim(1); d.in_h = x.dim(2); d.in_w = x.dim(3);
  d.filters = w.dim(0); d.kh = w.dim(2); d.kw = w.dim(3);
  d.stride = stride; d.pad = padding;
  check(d.kh <= d.in_h + 2 * padding && d.kw <= d.in_w + 2 * padding,
        "conv2d: kernel ", d.kh, "x", d.kw, " larger than padded input ",
        d.in_h + 2 * padding, "x", d.in_w + 2 * padding);
  d.out_h = (d.in_h + 2 * padding - d.kh) / stride + 1;
  d.out_w = (d.in_w + 2 * padding - d.kw) / stride + 1;

  const std::size_t M = d.out_positions();
  const std::size_t K = d.patch();
  const std::size_t F = static_cast<std::size_t>(d.filters);
  std::vector<T> cols(M * K);
  detail::im2col(x.values().data(), d, cols.data());
  std::vector<T> wt(K * F);
  kernels::transpose(w.values().data(), wt.data(), F, K);
  std::vector<T> outmat(M * F);
  kernels::gemm(M, F, K, T(1), cols.data(), K, wt.data(), F, T(0),
                outmat.data(), F);
  std::vector<T> out(static_cast<std::size_t>(d.batch) * F *
                     static_cast<std::size_t>(d.out_h * d.out_w));
  detail::positions_to_bchw(outmat.data(), d, out.data());

  return make_op_result<T>(
      {d.batch, d.filters, d.out_h, d.out_w}, std::move(out),
      grad_parents<T>(x, w),
      [xn = x.node(), wn = w.node(), d, M, K, F](const detail::Node<T>& o) {
        std::vector<T> gmat(M * F);
        detail::bchw_to_positions(o.grad.data(), d, gmat.data());
        if (wn->requires_grad) {
          std::vector<T> cols(M * K);
          detail::im2col(xn->value.data(), d, cols.data());
          std::vector<T> gt(F * M);
          kernels::transpose(gmat.data(), gt.data(), M, F);
          if (wn->grad.empty()) wn->grad.assign(wn->value.size(), T(0));
          kernels::gemm(F, K, M, T(1), gt.data(), M, cols.data(), K, T(1),
                        wn->grad.data(), K);
        }
        if (xn->requires_grad) {
          std::vector<T> dcols(M * K);
          kernels::gemm(M, K, F, T(1), gmat.data(), F, wn->value.data(), K,
                        T(0), dcols.data(), K);
          if (xn->grad.empty()) xn->grad.assign(xn->value.size(), T(0));
          detail::col2im_add(dcols.data(), d, xn->grad.data());
        }
      });
}

// ------------------------------------------------------------- batch norm

// Running statistics buffer owned by the layer that uses the op.
template <typename T>
struct BatchNormState {
  std::vector<T> mean;  // init 0
  std::vector<T> var;   // init 1
  explicit BatchNormState(std::size_t features)
      : mean(features, T(0)), var(features, T(1)) {}
};

namespace detail {

// Shared core: x is viewed as `groups` rows of `features` values where each
// feature j has `count` contributing entries addressed by an iteration
// callback. To keep the two layouts (B x D and B x C x HW) fast we just
// implement them separately below.

template <typename T>
void bn_check_affine(const Tensor<T>& gamma, const Tensor<T>& beta,
                     std::int64_t features) {
  check(gamma.ndim() == 1 && gamma.dim(0) == features,
        "batchnorm: gamma must be [", features, "], got ",
        shape_str(gamma.shape()));
  check(beta.ndim() == 1 && beta.dim(0) == features,
        "batchnorm: beta must be [", features, "], got ",
        shape_str(beta.shape()));
}

}  // namespace detail

// Per-feature batch normalization of x[B x D]. Train mode normalizes with
// batch statistics (biased variance) and folds them into the running buffers
// (unbiased variance, momentum update); eval mode normalizes with the
// running buffers.
template <typename T>
Tensor<T> batchnorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, T eps, bool train,
                    BatchNormState<T>* state, T momentum = T(0.1)) {
  detail::check_matrix("batchnorm", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  detail::bn_check_affine(gamma, beta, x.dim(1));
  std::vector<T> mean(cols), var(cols);
  if (train) {
    check<NumericError>(rows >= 2,
                        "batchnorm: train mode needs a batch of >= 2, got ",
                        rows);
    std::fill(mean.begin(), mean.end(), T(0));
    for (std::size_t r = 0; r < rows; ++r) {
      kernels::add(mean.data(), x.values().data() + r * cols, mean.data(),
                   cols);
    }
    kernels::scale(T(1) / static_cast<T>(rows), mean.data(), mean.data(), cols);
    std::fill(var.begin(), var.end(), T(0));
    for (std::size_t r = 0; r < rows; ++r) {
      const T* row = x.values().data() + r * cols;
      for (std::size_t j = 0; j < cols; ++j) {
        const T dv = row[j] - mean[j];
        var[j] += dv * dv;
      }
    }
    kernels::scale(T(1) / static_cast<T>(rows), var.data(), var.data(), cols);
    if (state) {
      check(state->mean.size() == cols, "batchnorm: running stats sized ",
            state->mean.size(), ", expected ", cols);
      const T unbias = static_cast<T>(rows) / static_cast<T>(rows - 1);
      for (std::size_t j = 0; j < cols; ++j) {
        state->mean[j] = (T(1) - momentum) * state->mean[j] + momentum * mean[j];
        state->var[j] =
            (T(1) - momentum) * state->var[j] + momentum * var[j] * unbias;
      }
    }
  } else {
    check(state != nullptr, "batchnorm: eval mode requires running stats");
    check(state->mean.size() == cols, "batchnorm: running stats sized ",
          state->mean.size(), ", expected ", cols);
    mean = state->mean;
    var = state->var;
  }
  std::vector<T> inv_std(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    inv_std[j] = T(1) / std::sqrt(var[j] + eps);
  }
  std::vector<T> xhat(rows * cols), out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.values().data() + r * cols;
    T* hrow = xhat.data() + r * cols;
    T* orow = out.data() + r * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      hrow[j] = (row[j] - mean[j]) * inv_std[j];
      orow[j] = gamma.values()[j] * hrow[j] + beta.values()[j];
    }
  }
  return make_op_result<T>(
      x.shape(), std::move(out), grad_parents<T>(x, gamma, beta),
      [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat = std::move(xhat),
       inv_std = std::move(inv_std), rows, cols, train](const detail::Node<T>& o) {
        std::vector<T> gsum(cols, T(0)), gxhat_sum(cols, T(0));
        for (std::size_t r = 0; r < rows; ++r) {
          const T* g = o.grad.data() + r * cols;
          const T* h = xhat.data() + r * cols;
          for (std::size_t j = 0; j < cols; ++j) {
            gsum[j] += g[j];
            gxhat_sum[j] += g[j] * h[j];
          }
        }
        if (bn->requires_grad) bn->accumulate_grad(gsum.data(), cols);
        if (gn->requires_grad) gn->accumulate_grad(gxhat_sum.data(), cols);
        if (xn->requires_grad) {
          std::vector<T> dx(rows * cols);
          if (train) {
            const T invb = T(1) / static_cast<T>(rows);
            for (std::size_t r = 0; r < rows; ++r) {
              const T* g = o.grad.data() + r * cols;
              const T* h = xhat.data() + r * cols;
              T* d = dx.data() + r * cols;
              for (std::size_t j = 0; j < cols; ++j) {
                d[j] = gn->value[j] * inv_std[j] *
                       (g[j] - gsum[j] * invb - h[j] * gxhat_sum[j] * invb);
              }
            }
          } else {
            for (std::size_t r = 0; r < rows; ++r) {
              const T* g = o.grad.data() + r * cols;
              T* d = dx.data() + r * cols;
              for (std::size_t j = 0; j < cols; ++j) {
                d[j] = gn->value[j] * inv_std[j] * g[j];
              }
            }
          }
          xn->accumulate_grad(dx.data(), dx.size());
        }
      });
}

// Channel-wise batch normalization of x[B,C,H,W] (statistics over B*H*W).
template <typename T>
Tensor<T> batchnorm2d(const Tensor<T>& x, const Tensor<T>& gamma,
                      const Tensor<T>& beta, T eps, bool train,
                      BatchNormState<T>* state, T momentum = T(0.1)) {
  check(x.ndim() == 4, "batchnorm2d: input must be [B,C,H,W], got ",
        shape_str(x.shape()));
  const std::size_t batch = x.dim(0), chans = x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2) * x.dim(3));
  detail::bn_check_affine(gamma, beta, x.dim(1));
  const std::size_t count = batch * hw;
  std::vector<T> mean(chans), var(chans);
  auto chan_ptr = [&](const std::vector<T>& buf, std::size_t b, std::size_t c) {
    return buf.data() + (b * chans + c) * hw;
  };
  if (train) {
    check<NumericError>(count >= 2,
                        "batchnorm2d: train mode needs >= 2 values per channel");
    for (std::size_t c = 0; c < chans; ++c) {
      T acc = T(0);
      for (std::size_t b = 0; b < batch; ++b) {
        acc += kernels::sum(chan_ptr(x.values(), b, c), hw);
      }
      mean[c] = acc / static_cast<T>(count);
      T vacc = T(0);
      for (std::size_t b = 0; b < batch; ++b) {
        const T* p = chan_ptr(x.values(), b, c);
        for (std::size_t i = 0; i < hw; ++i) {
          const T d = p[i] - mean[c];
          vacc += d * d;
        }
      }
      var[c] = vacc / static_cast<T>(count);
    }
    if (state) {
      check(state->mean.size() == chans, "batchnorm2d: running stats sized ",
            state->mean.size(), ", expected ", chans);
      const T unbias = static_cast<T>(count) / static_cast<T>(count - 1);
      for (std::size_t c = 0; c < chans; ++c) {
        state->mean[c] = (T(1) - momentum) * state->mean[c] + momentum * mean[c];
        state->var[c] =
            (T(1) - momentum) * state->var[c] + momentum * var[c] * unbias;
      }
    }
  } else {
    check(state != nullptr, "batchnorm2d: eval mode requires running stats");
    check(state->mean.size() == chans, "batchnorm2d: running stats sized ",
          state->mean.size(), ", expected ", chans);
    mean = state->mean;
    var = state->var;
  }
  std::vector<T> inv_std(chans);
  for (std::size_t c = 0; c < chans; ++c) {
    inv_std[c] = T(1) / std::sqrt(var[c] + eps);
  }
  std::vector<T> out(x.values().size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < chans; ++c) {
      const T* p = chan_ptr(x.values(), b, c);
      T* po = out.data() + (b * chans + c) * hw;
      const T g = gamma.values()[c], bb = beta.values()[c];
      const T mu = mean[c], is = inv_std[c];
      for (std::size_t i = 0; i < hw; ++i) {
        po[i] = g * (p[i] - mu) * is + bb;
      }
    }
  }
  return make_op_result<T>(
      x.shape(), std::move(out), grad_parents<T>(x, gamma, beta),
      [xn = x.node(), gn = gamma.node(), bn = beta.node(),
       mean = std::move(mean), inv_std = std::move(inv_std), batch, chans, hw,
       count, train](const detail::Node<T>& o) {
        std::vector<T> gsum(chans, T(0)), gxhat_sum(chans, T(0));
        for (std::size_t b = 0; b < batch; ++b) {
          for (std::size_t c = 0; c < chans; ++c) {
            const T* g = o.grad.data() + (b * chans + c) * hw;
            const T* p = xn->value.data() + (b * chans + c) * hw;
            T acc = T(0), hacc = T(0);
            for (std::size_t i = 0; i < hw; ++i) {
              acc += g[i];
              hacc += g[i] * (p[i] - mean[c]) * inv_std[c];
            }
            gsum[c] += acc;
            gxhat_sum[c] += hacc;
          }
        }
        if (bn->requires_grad) bn->accumulate_grad(gsum.data(), chans);
        if (gn->requires_grad) gn->accumulate_grad(gxhat_sum.data(), chans);
        if (xn->requires_grad) {
          std::vector<T> dx(xn->value.size());
          const T invn = T(1) / static_cast<T>(count);
          for (std::size_t b = 0; b < batch; ++b) {
            for (std::size_t c = 0; c < chans; ++c) {
              const T* g = o.grad.data() + (b * chans + c) * hw;
              const T* p = xn->value.data() + (b * chans + c) * hw;
              T* d = dx.data() + (b * chans + c) * hw;
              const T gv = gn->value[c], is = inv_std[c], mu = mean[c];
              if (train) {
                const T m1 = gsum[c] * invn, m2 = gxhat_sum[c] * invn;
                for (std::size_t i = 0; i < hw; ++i) {
                  const T h = (p[i] - mu) * is;
                  d[i] = gv * is * (g[i] - m1 - h * m2);
                }
              } else {
                for (std::size_t i = 0; i < hw; ++i) {
                  d[i] = gv * is * g[i];
                }
              }
            }
          }
          xn->accumulate_grad(dx.data(), dx.size());
        }
      });
}

// ------------------------------------------------------------- pooling

// Max pooling with square window, no padding. Ties resolve to the first
// element in scan order.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::int64_t window,
                     std::int64_t stride) {
  check(x.ndim() == 4, "max_pool2d: input must be [B,C,H,W], got ",
        shape_str(x.shape()));
  check(window >= 1 && stride >= 1, "max_pool2d: window/stride must be >= 1");
  const std::int64_t batch = x.dim(0), chans = x.dim(1), h = x.dim(2),
                     w = x.dim(3);
  check(window <= h && window <= w, "max_pool2d: window ", window,
        " larger than input ", h, "x", w);
  const std::int64_t oh = (h - window) / stride + 1;
  const std::int64_t ow = (w - window) / stride + 1;
  std::vector<T> out(static_cast<std::size_t>(batch * chans * oh * ow));
  auto argmax = std::make_shared<std::vector<std::int64_t>>(out.size());
  std::size_t oi = 0;
  for (std::int64_t b = 0; b < batch; ++b) {
    for (std::int64_t c = 0; c < chans; ++c) {
      const T* plane = x.values().data() + (b * chans + c) * h * w;
      for (std::int64_t oy = 0; oy < oh; ++oy) {
        for (std::int64_t ox = 0; ox < ow; ++ox, ++oi) {
          T best = plane[(oy * stride) * w + ox * stride];
          std::int64_t best_idx = (oy * stride) * w + ox * stride;
          for (std::int64_t ky = 0; ky < window; ++ky) {
            for (std::int64_t kx = 0; kx < window; ++kx) {
              const std::int64_t idx =
                  (oy * stride + ky) * w + (ox * stride + kx);
              if (plane[idx] > best) {
                best = plane[idx];
                best_idx = idx;
              }
            }
          }
          out[oi] = best;
          (*argmax)[oi] = (b * chans + c) * h * w + best_idx;
        }
      }
    }
  }
  return make_op_result<T>(
      {batch, chans, oh, ow}, std::move(out), grad_parents<T>(x),
      [xn = x.node(), argmax](const detail::Node<T>& o) {
        if (xn->grad.empty()) xn->grad.assign(xn->value.size(), T(0));
        for (std::size_t i = 0; i < argmax->size(); ++i) {
          xn->grad[(*argmax)[i]] += o.grad[i];
        }
      });
}

// Global average pool: [B,C,H,W] -> [B,C].
template <typename T>
Tensor<T> spatial_mean(const Tensor<T>& x) {
  check(x.ndim() == 4, "spatial_mean: input must be [B,C,H,W], got ",
        shape_str(x.shape()));
  const std::size_t batch = x.dim(0), chans = x.dim(1);
  const std::size_t hw = static_cast<std::size_t>(x.dim(2) * x.dim(3));
  std::vector<T> out(batch * chans);
  for (std::size_t i = 0; i < batch * chans; ++i) {
    out[i] = kernels::sum(x.values().data() + i * hw, hw) / static_cast<T>(hw);
  }
  return make_op_result<T>(
      {x.dim(0), x.dim(1)}, std::move(out), grad_parents<T>(x),
      [xn = x.node(), batch, chans, hw](const detail::Node<T>& o) {
        std::vector<T> dx(xn->value.size());
        for (std::size_t i = 0; i < batch * chans; ++i) {
          const T g = o.grad[i] / static_cast<T>(hw);
          std::fill(dx.begin() + i * hw, dx.begin() + (i + 1) * hw, g);
        }
        xn->accumulate_grad(dx.data(), dx.size());
      });
}

}  // namespace splicer
