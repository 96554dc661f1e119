// ops.hpp — differentiable tensor operations (elementwise, linear algebra,
// shape and reduction ops). Convolution/pooling/batchnorm live in nn_ops.hpp.
//
// Conventions: 2D tensors are [rows x cols] row-major; "col" reductions run
// over rows and produce a [D] vector. Backward closures accumulate into every
// grad-requiring input and never touch constants.
#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "splicer/kernels/kernels.hpp"
#include "splicer/tensor.hpp"

namespace splicer {

namespace detail {
template <typename T>
void check_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
  check(a.shape() == b.shape(), op, ": shape mismatch ", shape_str(a.shape()),
        " vs ", shape_str(b.shape()));
}
template <typename T>
void check_matrix(const char* op, const Tensor<T>& x) {
  check(x.ndim() == 2, op, ": expected a 2-D tensor, got ",
        shape_str(x.shape()));
}
}  // namespace detail

// ---------------------------------------------------------------- binary

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("add", a, b);
  const std::size_t n = a.values().size();
  std::vector<T> out(n);
  kernels::add(a.values().data(), b.values().data(), out.data(), n);
  return make_op_result<T>(
      a.shape(), std::move(out), grad_parents<T>(a, b),
      [an = a.node(), bn = b.node(), n](const detail::Node<T>& o) {
        if (an->requires_grad) an->accumulate_grad(o.grad.data(), n);
        if (bn->requires_grad) bn->accumulate_grad(o.grad.data(), n);
      });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("sub", a, b);
  const std::size_t n = a.values().size();
  std::vector<T> out(n);
  kernels::sub(a.values().data(), b.values().data(), out.data(), n);
  return make_op_result<T>(
      a.shape(), std::move(out), grad_parents<T>(a, b),
      [an = a.node(), bn = b.node(), n](const detail::Node<T>& o) {
        if (an->requires_grad) an->accumulate_grad(o.grad.data(), n);
        if (bn->requires_grad) {
          if (bn->grad.empty()) bn->grad.assign(bn->value.size(), T(0));
          kernels::axpy(T(-1), o.grad.data(), bn->grad.data(), n);
        }
      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_same_shape("mul", a, b);
  const std::size_t n = a.values().size();
  std::vector<T> out(n);
  kernels::mul(a.values().data(), b.values().data(), out.data(), n);
  return make_op_result<T>(
      a.shape(), std::move(out), grad_parents<T>(a, b),
      [an = a.node(), bn = b.node(), n](const detail::Node<T>& o) {
        std::vector<T> tmp(n);
        if (an->requires_grad) {
          kernels::mul(o.grad.data(), bn->value.data(), tmp.data(), n);
          an->accumulate_grad(tmp.data(), n);
        }
        if (bn->requires_grad) {
          kernels::mul(o.grad.data(), an->value.data(), tmp.data(), n);
          bn->accumulate_grad(tmp.data(), n);
        }
      });
}

// ---------------------------------------------------------------- scalar

template <typename T>
Tensor<T> scale(const Tensor<T>& x, T c) {
  const std::size_t n = x.values().size();
  std::vector<T> out(n);
  kernels::scale(c, x.values().data(), out.data(), n);
  return make_op_result<T>(x.shape(), std::move(out), grad_parents<T>(x),
                           [xn = x.node(), c, n](const detail::Node<T>& o) {
                             if (xn->grad.empty())
                               xn->grad.assign(xn->value.size(), T(0));
                             kernels::axpy(c, o.grad.data(), xn->grad.data(), n);
                           });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
  const std::size_t n = x.values().size();
  std::vector<T> out(x.values());
  for (auto& v : out) v += c;
  return make_op_result<T>(x.shape(), std::move(out), grad_parents<T>(x),
                           [xn = x.node(), n](const detail::Node<T>& o) {
                             xn->accumulate_grad(o.grad.data(), n);
                           });
}

// c - x
template <typename T>
Tensor<T> sub_from_scalar(T c, const Tensor<T>& x) {
  const std::size_t n = x.values().size();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = c - x.values()[i];
  return make_op_result<T>(x.shape(), std::move(out), grad_parents<T>(x),
                           [xn = x.node(), n](const detail::Node<T>& o) {
                             if (xn->grad.empty())
                               xn->grad.assign(xn->value.size(), T(0));
                             kernels::axpy(T(-1), o.grad.data(),
                                           xn->grad.data(), n);
                           });
}

// ---------------------------------------------------------------- unary

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  const std::size_t n = x.values().size();
  std::vector<T> out(n);
  kernels::relu(x.values().data(), out.data(), n);
  return make_op_result<T>(x.shape(), std::move(out), grad_parents<T>(x),
                           [xn = x.node(), n](const detail::Node<T>& o) {
                             if (xn->grad.empty())
                               xn->grad.assign(xn->value.size(), T(0));
                             kernels::relu_backward(xn->value.data(),
                                                    o.grad.data(),
                                                    xn->grad.data(), n);
                           });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
  const std::size_t n = x.values().size();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::log(x.values()[i]);
  return make_op_result<T>(x.shape(), std::move(out), grad_parents<T>(x),
                           [xn = x.node(), n](const detail::Node<T>& o) {
                             std::vector<T> tmp(n);
                             for (std::size_t i = 0; i < n; ++i) {
                               tmp[i] = o.grad[i] / xn->value[i];
                             }
                             xn->accumulate_grad(tmp.data(), n);
                           });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
  const std::size_t n = x.values().size();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::exp(x.values()[i]);
  return make_op_result<T>(
      x.shape(), std::move(out), grad_parents<T>(x),
      [xn = x.node(), n](const detail::Node<T>& o) {
        std::vector<T> tmp(n);
        kernels::mul(o.grad.data(), o.value.data(), tmp.data(), n);
        xn->accumulate_grad(tmp.data(), n);
      });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  const std::size_t n = x.values().size();
  std::vector<T> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = std::sqrt(x.values()[i]);
  return make_op_result<T>(x.shape(), std::move(out), grad_parents<T>(x),
                           [xn = x.node(), n](const detail::Node<T>& o) {
                             std::vector<T> tmp(n);
                             for (std::size_t i = 0; i < n; ++i) {
                               tmp[i] = o.grad[i] / (T(2) * o.value[i]);
                             }
                             xn->accumulate_grad(tmp.data(), n);
                           });
}

// ---------------------------------------------------------------- matmul

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::check_matrix("matmul", a);
  detail::check_matrix("matmul", b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  check(a.dim(1) == b.dim(0), "matmul: inner dimensions disagree, ",
        shape_str(a.shape()), " vs ", shape_str(b.shape()));
  std::vector<T> out(m * n);
  kernels::gemm(m, n, k, T(1), a.values().data(), k, b.values().data(), n,
                T(0), out.data(), n);
  return make_op_result<T>(
      {static_cast<std::int64_t>(m), static_cast<std::int64_t>(n)},
      std::move(out), grad_parents<T>(a, b),
      [an = a.node(), bn = b.node(), m, k, n](const detail::Node<T>& o) {
        if (an->requires_grad) {
          // dA += G * B^T
          std::vector<T> bt(k * n);
          kernels::transpose(bn->value.data(), bt.data(), k, n);
          if (an->grad.empty()) an->grad.assign(an->value.size(), T(0));
          kernels::gemm(m, k, n, T(1), o.grad.data(), n, bt.data(), k, T(1),
                        an->grad.data(), k);
        }
        if (bn->requires_grad) {
          // dB += A^T * G
          std::vector<T> at(k * m);
          kernels::transpose(an->value.data(), at.data(), m, k);
          if (bn->grad.empty()) bn->grad.assign(bn->value.size(), T(0));
          kernels::gemm(k, n, m, T(1), at.data(), m, o.grad.data(), n, T(1),
                        bn->grad.data(), n);
        }
      });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  detail::check_matrix("transpose", x);
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<T> out(m * n);
  kernels::transpose(x.values().data(), out.data(), m, n);
  return make_op_result<T>(
      {static_cast<std::int64_t>(n), static_cast<std::int64_t>(m)},
      std::move(out), grad_parents<T>(x),
      [xn = x.node(), m, n](const detail::Node<T>& o) {
        std::vector<T> gt(m * n);
        kernels::transpose(o.grad.data(), gt.data(), n, m);
        xn->accumulate_grad(gt.data(), m * n);
      });
}

// x[B x in] * w[out x in]^T + bias[out]
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  detail::check_matrix("linear", x);
  detail::check_matrix("linear", w);
  const std::size_t batch = x.dim(0), in = x.dim(1), out_dim = w.dim(0);
  check(w.dim(1) == static_cast<std::int64_t>(in),
        "linear: weight expects input width ", w.dim(1), ", got ", in);
  check(bias.ndim() == 1 && bias.dim(0) == static_cast<std::int64_t>(out_dim),
        "linear: bias width ", shape_str(bias.shape()), " does not match ",
        out_dim, " outputs");
  std::vector<T> wt(in * out_dim);
  kernels::transpose(w.values().data(), wt.data(), out_dim, in);
  std::vector<T> out(batch * out_dim);
  kernels::gemm(batch, out_dim, in, T(1), x.values().data(), in, wt.data(),
                out_dim, T(0), out.data(), out_dim);
  for (std::size_t b = 0; b < batch; ++b) {
    kernels::add(out.data() + b * out_dim, bias.values().data(),
                 out.data() + b * out_dim, out_dim);
  }
  return make_op_result<T>(
      {static_cast<std::int64_t>(batch), static_cast<std::int64_t>(out_dim)},
      std::move(out), grad_parents<T>(x, w, bias),
      [xn = x.node(), wn = w.node(), biasn = bias.node(), batch, in,
       out_dim](const detail::Node<T>& o) {
        if (xn->requires_grad) {
          // dX += G * W
          if (xn->grad.empty()) xn->grad.assign(xn->value.size(), T(0));
          kernels::gemm(batch, in, out_dim, T(1), o.grad.data(), out_dim,
                        wn->value.data(), in, T(1), xn->grad.data(), in);
        }
        if (wn->requires_grad) {
          // dW += G^T * X
          std::vector<T> gt(out_dim * batch);
          kernels::transpose(o.grad.data(), gt.data(), batch, out_dim);
          if (wn->grad.empty()) wn->grad.assign(wn->value.size(), T(0));
          kernels::gemm(out_dim, in, batch, T(1), gt.data(), batch,
                        xn->value.data(), in, T(1), wn->grad.data(), in);
        }
        if (biasn->requires_grad) {
          std::vector<T> db(out_dim, T(0));
          for (std::size_t b = 0; b < batch; ++b) {
            kernels::add(db.data(), o.grad.data() + b * out_dim, db.data(),
                         out_dim);
          }
          biasn->accumulate_grad(db.data(), out_dim);
        }
      });
}

// ---------------------------------------------------------------- shape

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
  validate_shape(shape);
  check(numel(shape) == x.size(), "reshape: cannot view ",
        shape_str(x.shape()), " as ", shape_str(shape));
  std::vector<T> out(x.values());
  const std::size_t n = out.size();
  return make_op_result<T>(std::move(shape), std::move(out),
                           grad_parents<T>(x),
                           [xn = x.node(), n](const detail::Node<T>& o) {
                             xn->accumulate_grad(o.grad.data(), n);
                           });
}

// [B, d1, d2, ...] -> [B, d1*d2*...]
template <typename T>
Tensor<T> flatten(const Tensor<T>& x) {
  check(x.ndim() >= 2, "flatten: expected at least 2 dimensions, got ",
        shape_str(x.shape()));
  return reshape(x, {x.dim(0), x.size() / x.dim(0)});
}

// Concatenation of 2-D tensors along axis 0 (rows) or 1 (columns).
template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  check(!parts.empty(), "concat: no inputs");
  check(axis == 0 || axis == 1, "concat: axis must be 0 or 1");
  for (const auto& p : parts) detail::check_matrix("concat", p);
  const std::int64_t fixed = parts[0].dim(1 - axis);
  std::int64_t total = 0;
  for (const auto& p : parts) {
    check(p.dim(1 - axis) == fixed, "concat: mismatched shapes ",
          shape_str(parts[0].shape()), " vs ", shape_str(p.shape()));
    total += p.dim(axis);
  }
  const Shape out_shape =
      axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
  std::vector<T> out(static_cast<std::size_t>(numel(out_shape)));
  std::vector<std::shared_ptr<detail::Node<T>>> nodes;
  nodes.reserve(parts.size());
  bool any_grad = false;
  for (const auto& p : parts) {
    nodes.push_back(p.node());
    any_grad = any_grad || p.requires_grad();
  }
  if (axis == 0) {
    std::size_t row = 0;
    for (const auto& p : parts) {
      std::memcpy(out.data() + row * fixed, p.values().data(),
                  p.values().size() * sizeof(T));
      row += p.dim(0);
    }
  } else {
    const std::size_t rows = static_cast<std::size_t>(fixed);
    std::size_t col = 0;
    for (const auto& p : parts) {
      const std::size_t w = p.dim(1);
      for (std::size_t r = 0; r < rows; ++r) {
        std::memcpy(out.data() + r * total + col,
                    p.values().data() + r * w, w * sizeof(T));
      }
      col += w;
    }
  }
  std::vector<std::shared_ptr<detail::Node<T>>> parents;
  if (any_grad) {
    for (const auto& p : parts) {
      if (p.requires_grad()) parents.push_back(p.node());
    }
  }
  return make_op_result<T>(
      out_shape, std::move(out), std::move(parents),
      [nodes, axis, fixed, total](const detail::Node<T>& o) {
        if (axis == 0) {
          std::size_t row = 0;
          for (const auto& node : nodes) {
            const std::size_t cnt = node->value.size();
            if (node->requires_grad) {
              node->accumulate_grad(o.grad.data() + row * fixed, cnt);
            }
            row += node->shape[0];
          }
        } else {
          const std::size_t rows = static_cast<std::size_t>(fixed);
          std::size_t col = 0;
          for (const auto& node : nodes) {
            const std::size_t w = node->shape[1];
            if (node->requires_grad) {
              std::vector<T> tmp(rows * w);
              for (std::size_t r = 0; r < rows; ++r) {
                std::memcpy(tmp.data() + r * w,
                            o.grad.data() + r * total + col, w * sizeof(T));
              }
              node->accumulate_grad(tmp.data(), tmp.size());
            }
            col += w;
          }
        }
      });
}

// Contiguous column slice of a [B x D] tensor. Gradients scatter only into
// the originating columns.
template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::int64_t start, std::int64_t width) {
  detail::check_matrix("slice_cols", x);
  const std::int64_t rows = x.dim(0), cols = x.dim(1);
  check(start >= 0 && width >= 1 && start + width <= cols,
        "slice_cols: range [", start, ", ", start + width,
        ") out of bounds for width ", cols);
  std::vector<T> out(static_cast<std::size_t>(rows * width));
  for (std::int64_t r = 0; r < rows; ++r) {
    std::memcpy(out.data() + r * width, x.values().data() + r * cols + start,
                width * sizeof(T));
  }
  return make_op_result<T>(
      {rows, width}, std::move(out), grad_parents<T>(x),
      [xn = x.node(), start, width, rows, cols](const detail::Node<T>& o) {
        if (xn->grad.empty()) xn->grad.assign(xn->value.size(), T(0));
        for (std::int64_t r = 0; r < rows; ++r) {
          kernels::axpy(T(1), o.grad.data() + r * width,
                        xn->grad.data() + r * cols + start,
                        static_cast<std::size_t>(width));
        }
      });
}

// ---------------------------------------------------------------- reductions

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  const std::size_t n = x.values().size();
  const T s = kernels::sum(x.values().data(), n);
  return make_op_result<T>({1}, {s}, grad_parents<T>(x),
                           [xn = x.node(), n](const detail::Node<T>& o) {
                             std::vector<T> tmp(n, o.grad[0]);
                             xn->accumulate_grad(tmp.data(), n);
                           });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) {
  const std::size_t n = x.values().size();
  const T s = kernels::sum(x.values().data(), n) / static_cast<T>(n);
  return make_op_result<T>(
      {1}, {s}, grad_parents<T>(x),
      [xn = x.node(), n](const detail::Node<T>& o) {
        std::vector<T> tmp(n, o.grad[0] / static_cast<T>(n));
        xn->accumulate_grad(tmp.data(), n);
      });
}

// [B x D] -> [B]
template <typename T>
Tensor<T> row_sum(const Tensor<T>& x) {
  detail::check_matrix("row_sum", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    out[r] = kernels::sum(x.values().data() + r * cols, cols);
  }
  return make_op_result<T>(
      {static_cast<std::int64_t>(rows)}, std::move(out), grad_parents<T>(x),
      [xn = x.node(), rows, cols](const detail::Node<T>& o) {
        std::vector<T> tmp(rows * cols);
        for (std::size_t r = 0; r < rows; ++r) {
          std::fill(tmp.begin() + r * cols, tmp.begin() + (r + 1) * cols,
                    o.grad[r]);
        }
        xn->accumulate_grad(tmp.data(), tmp.size());
      });
}

// [B x D] -> [D], mean over the batch axis
template <typename T>
Tensor<T> col_mean(const Tensor<T>& x) {
  detail::check_matrix("col_mean", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(cols, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::add(out.data(), x.values().data() + r * cols, out.data(), cols);
  }
  kernels::scale(T(1) / static_cast<T>(rows), out.data(), out.data(), cols);
  return make_op_result<T>(
      {static_cast<std::int64_t>(cols)}, std::move(out), grad_parents<T>(x),
      [xn = x.node(), rows, cols](const detail::Node<T>& o) {
        if (xn->grad.empty()) xn->grad.assign(xn->value.size(), T(0));
        const T inv = T(1) / static_cast<T>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          kernels::axpy(inv, o.grad.data(), xn->grad.data() + r * cols, cols);
        }
      });
}

// [B x D] -> [D], per-column variance over the batch (unbiased by default,
// matching the variance regularizer convention; B >= 2).
template <typename T>
Tensor<T> col_variance(const Tensor<T>& x, bool unbiased = true) {
  detail::check_matrix("col_variance", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  check<NumericError>(rows >= 2, "col_variance: needs at least 2 rows, got ",
                      rows);
  std::vector<T> mean(cols, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::add(mean.data(), x.values().data() + r * cols, mean.data(), cols);
  }
  kernels::scale(T(1) / static_cast<T>(rows), mean.data(), mean.data(), cols);
  const T denom = static_cast<T>(unbiased ? rows - 1 : rows);
  std::vector<T> out(cols, T(0));
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.values().data() + r * cols;
    for (std::size_t j = 0; j < cols; ++j) {
      const T d = row[j] - mean[j];
      out[j] += d * d;
    }
  }
  kernels::scale(T(1) / denom, out.data(), out.data(), cols);
  return make_op_result<T>(
      {static_cast<std::int64_t>(cols)}, std::move(out), grad_parents<T>(x),
      [xn = x.node(), mean, denom, rows, cols](const detail::Node<T>& o) {
        std::vector<T> tmp(rows * cols);
        const T two_over = T(2) / denom;
        for (std::size_t r = 0; r < rows; ++r) {
          const T* row = xn->value.data() + r * cols;
          T* trow = tmp.data() + r * cols;
          for (std::size_t j = 0; j < cols; ++j) {
            trow[j] = o.grad[j] * two_over * (row[j] - mean[j]);
          }
        }
        xn->accumulate_grad(tmp.data(), tmp.size());
      });
}

// ---------------------------------------------------------------- broadcast

// x[B x D] - v[D] applied to every row
template <typename T>
Tensor<T> sub_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  detail::check_matrix("sub_rowvec", x);
  check(v.ndim() == 1 && v.dim(0) == x.dim(1), "sub_rowvec: vector ",
        shape_str(v.shape()), " does not match row width ", x.dim(1));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::sub(x.values().data() + r * cols, v.values().data(),
                 out.data() + r * cols, cols);
  }
  return make_op_result<T>(
      x.shape(), std::move(out), grad_parents<T>(x, v),
      [xn = x.node(), vn = v.node(), rows, cols](const detail::Node<T>& o) {
        if (xn->requires_grad) {
          xn->accumulate_grad(o.grad.data(), rows * cols);
        }
        if (vn->requires_grad) {
          std::vector<T> dv(cols, T(0));
          for (std::size_t r = 0; r < rows; ++r) {
            kernels::add(dv.data(), o.grad.data() + r * cols, dv.data(), cols);
          }
          if (vn->grad.empty()) vn->grad.assign(cols, T(0));
          kernels::axpy(T(-1), dv.data(), vn->grad.data(), cols);
        }
      });
}

// x[B x D] * v[D] applied to every row
template <typename T>
Tensor<T> mul_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  detail::check_matrix("mul_rowvec", x);
  check(v.ndim() == 1 && v.dim(0) == x.dim(1), "mul_rowvec: vector ",
        shape_str(v.shape()), " does not match row width ", x.dim(1));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::mul(x.values().data() + r * cols, v.values().data(),
                 out.data() + r * cols, cols);
  }
  return make_op_result<T>(
      x.shape(), std::move(out), grad_parents<T>(x, v),
      [xn = x.node(), vn = v.node(), rows, cols](const detail::Node<T>& o) {
        if (xn->requires_grad) {
          std::vector<T> tmp(rows * cols);
          for (std::size_t r = 0; r < rows; ++r) {
            kernels::mul(o.grad.data() + r * cols, vn->value.data(),
                         tmp.data() + r * cols, cols);
          }
          xn->accumulate_grad(tmp.data(), tmp.size());
        }
        if (vn->requires_grad) {
          std::vector<T> dv(cols, T(0));
          std::vector<T> tmp(cols);
          for (std::size_t r = 0; r < rows; ++r) {
            kernels::mul(o.grad.data() + r * cols,
                         xn->value.data() + r * cols, tmp.data(), cols);
            kernels::add(dv.data(), tmp.data(), dv.data(), cols);
          }
          vn->accumulate_grad(dv.data(), cols);
        }
      });
}

// x[B x D] + v[D] applied to every row
template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
  detail::check_matrix("add_rowvec", x);
  check(v.ndim() == 1 && v.dim(0) == x.dim(1), "add_rowvec: vector ",
        shape_str(v.shape()), " does not match row width ", x.dim(1));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    kernels::add(x.values().data() + r * cols, v.values().data(),
                 out.data() + r * cols, cols);
  }
  return make_op_result<T>(
      x.shape(), std::move(out), grad_parents<T>(x, v),
      [xn = x.node(), vn = v.node(), rows, cols](const detail::Node<T>& o) {
        if (xn->requires_grad) {
          xn->accumulate_grad(o.grad.data(), rows * cols);
        }
        if (vn->requires_grad) {
          std::vector<T> dv(cols, T(0));
          for (std::size_t r = 0; r < rows; ++r) {
            kernels::add(dv.data(), o.grad.data() + r * cols, dv.data(), cols);
          }
          vn->accumulate_grad(dv.data(), cols);
        }
      });
}

// ---------------------------------------------------------------- normalize

// Row-wise x / sqrt(|x|^2 + eps). eps guards zero-norm rows.
template <typename T>
Tensor<T> l2_normalize(const Tensor<T>& x, T eps = T(1e-12)) {
  detail::check_matrix("l2_normalize", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> inv_norm(rows);
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.values().data() + r * cols;
    inv_norm[r] = T(1) / std::sqrt(kernels::sumsq(row, cols) + eps);
    kernels::scale(inv_norm[r], row, out.data() + r * cols, cols);
  }
  return make_op_result<T>(
      x.shape(), std::move(out), grad_parents<T>(x),
      [xn = x.node(), inv_norm, rows, cols](const detail::Node<T>& o) {
        std::vector<T> tmp(rows * cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* row = xn->value.data() + r * cols;
          const T* grow = o.grad.data() + r * cols;
          const T inv = inv_norm[r];
          const T gx = kernels::dot(grow, row, cols);
          const T coef = gx * inv * inv * inv;
          T* trow = tmp.data() + r * cols;
          for (std::size_t j = 0; j < cols; ++j) {
            trow[j] = grow[j] * inv - row[j] * coef;
          }
        }
        xn->accumulate_grad(tmp.data(), tmp.size());
      });
}

// ---------------------------------------------------------------- softmax

template <typename T>
Tensor<T> softmax(const Tensor<T>& x) {
  detail::check_matrix("softmax", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.values().data() + r * cols;
    T* orow = out.data() + r * cols;
    T mx = row[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    T denom = T(0);
    for (std::size_t j = 0; j < cols; ++j) {
      orow[j] = std::exp(row[j] - mx);
      denom += orow[j];
    }
    kernels::scale(T(1) / denom, orow, orow, cols);
  }
  return make_op_result<T>(
      x.shape(), std::move(out), grad_parents<T>(x),
      [xn = x.node(), rows, cols](const detail::Node<T>& o) {
        std::vector<T> tmp(rows * cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* y = o.value.data() + r * cols;
          const T* g = o.grad.data() + r * cols;
          const T gy = kernels::dot(g, y, cols);
          T* trow = tmp.data() + r * cols;
          for (std::size_t j = 0; j < cols; ++j) {
            trow[j] = y[j] * (g[j] - gy);
          }
        }
        xn->accumulate_grad(tmp.data(), tmp.size());
      });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x) {
  detail::check_matrix("log_softmax", x);
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  std::vector<T> out(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = x.values().data() + r * cols;
    T* orow = out.data() + r * cols;
    T mx = row[0];
    for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, row[j]);
    T denom = T(0);
    for (std::size_t j = 0; j < cols; ++j) denom += std::exp(row[j] - mx);
    const T lse = mx + std::log(denom);
    for (std::size_t j = 0; j < cols; ++j) orow[j] = row[j] - lse;
  }
  return make_op_result<T>(
      x.shape(), std::move(out), grad_parents<T>(x),
      [xn = x.node(), rows, cols](const detail::Node<T>& o) {
        std::vector<T> tmp(rows * cols);
        for (std::size_t r = 0; r < rows; ++r) {
          const T* logp = o.value.data() + r * cols;
          const T* g = o.grad.data() + r * cols;
          const T gsum = kernels::sum(g, cols);
          T* trow = tmp.data() + r * cols;
          for (std::size_t j = 0; j < cols; ++j) {
            trow[j] = g[j] - std::exp(logp[j]) * gsum;
          }
        }
        xn->accumulate_grad(tmp.data(), tmp.size());
      });
}

// Mean negative log-likelihood of the labelled entries of logp[B x C].
template <typename T>
Tensor<T> nll_loss(const Tensor<T>& logp, const std::vector<int>& labels) {
  detail::check_matrix("nll_loss", logp);
  const std::size_t rows = logp.dim(0), cols = logp.dim(1);
  check(labels.size() == rows, "nll_loss: have ", labels.size(),
        " labels for ", rows, " rows");
  T acc = T(0);
  for (std::size_t r = 0; r < rows; ++r) {
    check(labels[r] >= 0 && labels[r] < static_cast<int>(cols),
          "nll_loss: label ", labels[r], " out of range [0, ", cols, ")");
    acc -= logp.values()[r * cols + labels[r]];
  }
  acc /= static_cast<T>(rows);
  return make_op_result<T>(
      {1}, {acc}, grad_parents<T>(logp),
      [ln = logp.node(), labels, rows, cols](const detail::Node<T>& o) {
        if (ln->grad.empty()) ln->grad.assign(ln->value.size(), T(0));
        const T g = o.grad[0] / static_cast<T>(rows);
        for (std::size_t r = 0; r < rows; ++r) {
          ln->grad[r * cols + labels[r]] -= g;
        }
      });
}

}  // namespace splicer
