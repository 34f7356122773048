// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0
//
// Dense-tensor ops with reverse-mode gradients. Matrix products are backed by
// Eigen; everything else is straightforward loops. All ops validate shapes;
// the forward_op() dispatcher additionally rejects non-finite inputs and is
// the contract-checked public surface (see grad_check / the grad-check CLI).

#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "stylestream/tensor.hpp"

namespace stylestream {

template <typename T>
using MatRM =
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapM = Eigen::Map<MatRM<T>>;
template <typename T>
using MapC = Eigen::Map<const MatRM<T>>;

namespace detail {

template <typename T>
[[noreturn]] inline void shape_error(const std::string& op, const Tensor<T>& a,
                                     const Tensor<T>& b) {
  throw std::invalid_argument(op + ": incompatible shapes " +
                              shape_str(a.shape()) + " and " +
                              shape_str(b.shape()));
}

template <typename T>
inline void require_rank2(const std::string& op, const Tensor<T>& x) {
  if (x.rank() != 2)
    throw std::invalid_argument(op + ": expected rank-2 tensor, got " +
                                shape_str(x.shape()));
}

// Broadcast classes for binary elementwise ops: equal shapes, a single
// scalar, a row vector ([1,n] or [n]) over rows, or a column vector ([m,1])
// over columns.
enum class Bcast { kSame, kScalar, kRow, kCol };

template <typename T>
inline Bcast bcast_kind(const std::string& op, const Tensor<T>& a,
                        const Tensor<T>& b) {
  if (a.shape() == b.shape()) return Bcast::kSame;
  if (b.numel() == 1) return Bcast::kScalar;
  if (a.rank() == 2) {
    int64_t m = a.shape()[0], n = a.shape()[1];
    if ((b.rank() == 1 && b.shape()[0] == n) ||
        (b.rank() == 2 && b.shape()[0] == 1 && b.shape()[1] == n))
      return Bcast::kRow;
    if (b.rank() == 2 && b.shape()[0] == m && b.shape()[1] == 1)
      return Bcast::kCol;
  }
  shape_error(op, a, b);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Linear algebra

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  detail::require_rank2("matmul", a);
  detail::require_rank2("matmul", b);
  if (a.shape()[1] != b.shape()[0]) detail::shape_error("matmul", a, b);
  const int64_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  std::vector<T> out(m * n);
  MapM<T>(out.data(), m, n).noalias() =
      MapC<T>(a.value().data(), m, k) * MapC<T>(b.value().data(), k, n);
  return Tensor<T>::make_op(
      {m, n}, std::move(out), {a, b}, [a, b, m, k, n](const std::vector<T>& g) {
        MapC<T> gm(g.data(), m, n);
        if (a.requires_grad()) {
          std::vector<T> da(m * k);
          MapM<T>(da.data(), m, k).noalias() =
              gm * MapC<T>(b.value().data(), k, n).transpose();
          a.node()->accumulate(da);
        }
        if (b.requires_grad()) {
          std::vector<T> db(k * n);
          MapM<T>(db.data(), k, n).noalias() =
              MapC<T>(a.value().data(), m, k).transpose() * gm;
          b.node()->accumulate(db);
        }
      });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& x) {
  detail::require_rank2("transpose", x);
  const int64_t m = x.shape()[0], n = x.shape()[1];
  std::vector<T> out(m * n);
  const auto& v = x.value();
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
  return Tensor<T>::make_op({n, m}, std::move(out), {x},
                            [x, m, n](const std::vector<T>& g) {
                              if (!x.requires_grad()) return;
                              std::vector<T> dx(m * n);
                              for (int64_t i = 0; i < m; ++i)
                                for (int64_t j = 0; j < n; ++j)
                                  dx[i * n + j] = g[j * m + i];
                              x.node()->accumulate(dx);
                            });
}

// ---------------------------------------------------------------------------
// Elementwise binary ops (with row/col broadcast of the second operand)

namespace detail {

template <typename T, typename Fwd, typename BwdA, typename BwdB>
Tensor<T> binary_bcast(const std::string& name, const Tensor<T>& a,
                       const Tensor<T>& b, Fwd fwd, BwdA bwd_a, BwdB bwd_b) {
  const Bcast bc = bcast_kind(name, a, b);
  const int64_t m = a.rank() == 2 ? a.shape()[0] : 1;
  const int64_t n = a.rank() == 2 ? a.shape()[1] : a.shape()[0];
  const auto& av = a.value();
  const auto& bv = b.value();
  std::vector<T> out(av.size());
  auto bidx = [bc, n](int64_t i, int64_t j) -> int64_t {
    switch (bc) {
      case Bcast::kSame: return i * n + j;
      case Bcast::kScalar: return 0;
      case Bcast::kRow: return j;
      default: return i;  // kCol
    }
  };
  for (int64_t i = 0; i < m; ++i)
    for (int64_t j = 0; j < n; ++j)
      out[i * n + j] = fwd(av[i * n + j], bv[bidx(i, j)]);
  return Tensor<T>::make_op(
      a.shape(), std::move(out), {a, b},
      [a, b, bc, m, n, bidx, bwd_a, bwd_b](const std::vector<T>& g) {
        const auto& av = a.value();
        const auto& bv = b.value();
        if (a.requires_grad()) {
          std::vector<T> da(av.size());
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j)
              da[i * n + j] =
                  g[i * n + j] * bwd_a(av[i * n + j], bv[bidx(i, j)]);
          a.node()->accumulate(da);
        }
        if (b.requires_grad()) {
          std::vector<T> db(bv.size(), T(0));
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j)
              db[bidx(i, j)] +=
                  g[i * n + j] * bwd_b(av[i * n + j], bv[bidx(i, j)]);
          b.node()->accumulate(db);
        }
      });
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_bcast<T>(
      "add", a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return detail::binary_bcast<T>(
      "mul", a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& x, double s) {
  const T ts = static_cast<T>(s);
  std::vector<T> out(x.value());
  for (auto& v : out) v *= ts;
  return Tensor<T>::make_op(x.shape(), std::move(out), {x},
                            [x, ts](const std::vector<T>& g) {
                              if (!x.requires_grad()) return;
                              std::vector<T> dx(g);
                              for (auto& v : dx) v *= ts;
                              x.node()->accumulate(dx);
                            });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, double s) {
  const T ts = static_cast<T>(s);
  std::vector<T> out(x.value());
  for (auto& v : out) v += ts;
  return Tensor<T>::make_op(x.shape(), std::move(out), {x},
                            [x](const std::vector<T>& g) {
                              if (x.requires_grad()) x.node()->accumulate(g);
                            });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return add(a, scale(b, -1.0));
}

// ---------------------------------------------------------------------------
// Unary nonlinearities

namespace detail {

template <typename T, typename Fwd, typename Dfn>
Tensor<T> unary_op(const Tensor<T>& x, Fwd f, Dfn df) {
  const auto& v = x.value();
  std::vector<T> out(v.size());
  for (size_t i = 0; i < v.size(); ++i) out[i] = f(v[i]);
  return Tensor<T>::make_op(x.shape(), std::move(out), {x},
                            [x, df](const std::vector<T>& g) {
                              if (!x.requires_grad()) return;
                              const auto& v = x.value();
                              std::vector<T> dx(v.size());
                              for (size_t i = 0; i < v.size(); ++i)
                                dx[i] = g[i] * df(v[i]);
                              x.node()->accumulate(dx);
                            });
}

}  // namespace detail

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  // Exact erf form.
  constexpr double inv_sqrt2 = 0.7071067811865475244;
  constexpr double inv_sqrt2pi = 0.3989422804014326779;
  return detail::unary_op<T>(
      x,
      [](T v) {
        return static_cast<T>(0.5 * v * (1.0 + std::erf(v * inv_sqrt2)));
      },
      [](T v) {
        double phi = inv_sqrt2pi * std::exp(-0.5 * double(v) * double(v));
        return static_cast<T>(0.5 * (1.0 + std::erf(v * inv_sqrt2)) +
                              double(v) * phi);
      });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
  return detail::unary_op<T>(
      x,
      [](T v) { return static_cast<T>(double(v) / (1.0 + std::exp(-v))); },
      [](T v) {
        double s = 1.0 / (1.0 + std::exp(-v));
        return static_cast<T>(s * (1.0 + double(v) * (1.0 - s)));
      });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  return detail::unary_op<T>(
      x, [](T v) { return static_cast<T>(1.0 / (1.0 + std::exp(-v))); },
      [](T v) {
        double s = 1.0 / (1.0 + std::exp(-v));
        return static_cast<T>(s * (1.0 - s));
      });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& x) {
  return detail::unary_op<T>(
      x, [](T v) { return std::tanh(v); },
      [](T v) {
        T t = std::tanh(v);
        return T(1) - t * t;
      });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& x) {
  return detail::unary_op<T>(
      x,
      [](T v) {
        if (v < T(0)) throw std::invalid_argument("sqrt: negative input");
        return std::sqrt(v);
      },
      [](T v) { return static_cast<T>(0.5 / std::sqrt(double(v))); });
}

template <typename T>
Tensor<T> clamp_min(const Tensor<T>& x, double lo) {
  const T tlo = static_cast<T>(lo);
  return detail::unary_op<T>(
      x, [tlo](T v) { return v < tlo ? tlo : v; },
      [tlo](T v) { return v > tlo ? T(1) : T(0); });
}

// Round half away from zero; gradient is identity (straight-through).
template <typename T>
Tensor<T> round_ste(const Tensor<T>& x) {
  return detail::unary_op<T>(
      x, [](T v) { return std::round(v); }, [](T) { return T(1); });
}

// Test hook: build a unary op from arbitrary forward/derivative functions
// (used for fault injection in gradient-check tests).
template <typename T>
Tensor<T> custom_unary(const Tensor<T>& x, std::function<T(T)> f,
                       std::function<T(T)> df) {
  return detail::unary_op<T>(x, f, df);
}

template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
  return Tensor<T>::from_data(x.shape(), x.value(), false);
}

// ---------------------------------------------------------------------------
// Softmax / normalization

template <typename T>
Tensor<T> softmax_lastdim(const Tensor<T>& x) {
  detail::require_rank2("softmax-lastdim", x);
  const int64_t m = x.shape()[0], n = x.shape()[1];
  auto out = std::make_shared<std::vector<T>>(m * n);
  const auto& v = x.value();
  for (int64_t i = 0; i < m; ++i) {
    T mx = -std::numeric_limits<T>::infinity();
    for (int64_t j = 0; j < n; ++j) mx = std::max(mx, v[i * n + j]);
    T z = T(0);
    for (int64_t j = 0; j < n; ++j) {
      T e = std::exp(v[i * n + j] - mx);
      (*out)[i * n + j] = e;
      z += e;
    }
    for (int64_t j = 0; j < n; ++j) (*out)[i * n + j] /= z;
  }
  return Tensor<T>::make_op(
      x.shape(), out, {x}, [x, out, m, n](const std::vector<T>& g) {
        if (!x.requires_grad()) return;
        std::vector<T> dx(m * n);
        for (int64_t i = 0; i < m; ++i) {
          T dot = T(0);
          for (int64_t j = 0; j < n; ++j)
            dot += g[i * n + j] * (*out)[i * n + j];
          for (int64_t j = 0; j < n; ++j)
            dx[i * n + j] = (*out)[i * n + j] * (g[i * n + j] - dot);
        }
        x.node()->accumulate(dx);
      });
}

namespace detail {

// Shared layernorm core; gamma/beta may be undefined for the plain variant.
template <typename T>
Tensor<T> layernorm_impl(const Tensor<T>& x, const Tensor<T>* gamma,
                         const Tensor<T>* beta, double eps) {
  require_rank2("layernorm", x);
  const int64_t m = x.shape()[0], n = x.shape()[1];
  if (gamma && (gamma->numel() != n || beta->numel() != n))
    throw std::invalid_argument("layernorm: affine params must have length " +
                                std::to_string(n));
  const auto& v = x.value();
  auto xhat = std::make_shared<std::vector<T>>(m * n);
  auto inv_std = std::make_shared<std::vector<T>>(m);
  std::vector<T> out(m * n);
  for (int64_t i = 0; i < m; ++i) {
    T mu = T(0);
    for (int64_t j = 0; j < n; ++j) mu += v[i * n + j];
    mu /= T(n);
    T var = T(0);
    for (int64_t j = 0; j < n; ++j) {
      T d = v[i * n + j] - mu;
      var += d * d;
    }
    var /= T(n);
    T is = T(1) / std::sqrt(var + static_cast<T>(eps));
    (*inv_std)[i] = is;
    for (int64_t j = 0; j < n; ++j) {
      T h = (v[i * n + j] - mu) * is;
      (*xhat)[i * n + j] = h;
      out[i * n + j] =
          gamma ? gamma->value()[j] * h + beta->value()[j] : h;
    }
  }
  std::vector<Tensor<T>> inputs = {x};
  if (gamma) {
    inputs.push_back(*gamma);
    inputs.push_back(*beta);
  }
  Tensor<T> gt = gamma ? *gamma : Tensor<T>();
  Tensor<T> bt = beta ? *beta : Tensor<T>();
  return Tensor<T>::make_op(
      x.shape(), std::move(out), inputs,
      [x, gt, bt, xhat, inv_std, m, n](const std::vector<T>& g) {
        const bool affine = gt.defined();
        if (affine && gt.requires_grad()) {
          std::vector<T> dg(n, T(0));
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j)
              dg[j] += g[i * n + j] * (*xhat)[i * n + j];
          gt.node()->accumulate(dg);
        }
        if (affine && bt.requires_grad()) {
          std::vector<T> db(n, T(0));
          for (int64_t i = 0; i < m; ++i)
            for (int64_t j = 0; j < n; ++j) db[j] += g[i * n + j];
          bt.node()->accumulate(db);
        }
        if (!x.requires_grad()) return;
        std::vector<T> dx(m * n);
        for (int64_t i = 0; i < m; ++i) {
          T sum_dy = T(0), sum_dyx = T(0);
          for (int64_t j = 0; j < n; ++j) {
            T dy = g[i * n + j];
            if (affine) dy *= gt.value()[j];
            sum_dy += dy;
            sum_dyx += dy * (*xhat)[i * n + j];
          }
          for (int64_t j = 0; j < n; ++j) {
            T dy = g[i * n + j];
            if (affine) dy *= gt.value()[j];
            dx[i * n + j] = (*inv_std)[i] *
                            (dy - sum_dy / T(n) -
                             (*xhat)[i * n + j] * sum_dyx / T(n));
          }
        }
        x.node()->accumulate(dx);
      });
}

}  // namespace detail

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma,
                    const Tensor<T>& beta, double eps = 1e-5) {
  return detail::layernorm_impl(x, &gamma, &beta, eps);
}

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, double eps = 1e-5) {
  return detail::layernorm_impl<T>(x, nullptr, nullptr, eps);
}

// ---------------------------------------------------------------------------
// Shape ops

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw std::invalid_argument("concat: no inputs");
  if (axis != 0 && axis != 1)
    throw std::invalid_argument("concat: axis must be 0 or 1");
  for (const auto& p : parts) detail::require_rank2("concat", p);
  const int64_t other = parts[0].shape()[1 - axis];
  int64_t total = 0;
  for (const auto& p : parts) {
    if (p.shape()[1 - axis] != other)
      throw std::invalid_argument("concat: mismatched shapes at axis " +
                                  std::to_string(axis));
    total += p.shape()[axis];
  }
  Shape oshape = axis == 0 ? Shape{total, other} : Shape{other, total};
  std::vector<T> out(total * other);
  const int64_t on = oshape[1];
  int64_t off = 0;
  for (const auto& p : parts) {
    const int64_t pm = p.shape()[0], pn = p.shape()[1];
    const auto& pv = p.value();
    for (int64_t i = 0; i < pm; ++i)
      for (int64_t j = 0; j < pn; ++j) {
        if (axis == 0)
          out[(off + i) * on + j] = pv[i * pn + j];
        else
          out[i * on + (off + j)] = pv[i * pn + j];
      }
    off += p.shape()[axis];
  }
  return Tensor<T>::make_op(
      oshape, std::move(out), parts, [parts, axis, on](const std::vector<T>& g) {
        int64_t off = 0;
        for (const auto& p : parts) {
          const int64_t pm = p.shape()[0], pn = p.shape()[1];
          if (p.requires_grad()) {
            std::vector<T> dp(pm * pn);
            for (int64_t i = 0; i < pm; ++i)
              for (int64_t j = 0; j < pn; ++j)
                dp[i * pn + j] = axis == 0 ? g[(off + i) * on + j]
                                           : g[i * on + (off + j)];
            p.node()->accumulate(dp);
          }
          off += p.shape()[axis];
        }
      });
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, int axis, int64_t start, int64_t len) {
  detail::require_rank2("slice", x);
  if (axis != 0 && axis != 1)
    throw std::invalid_argument("slice: axis must be 0 or 1");
  if (start < 0 || len < 1 || start + len > x.shape()[axis])
    throw std::invalid_argument(
        "slice: range [" + std::to_string(start) + ", " +
        std::to_string(start + len) + ") out of bounds for " +
        shape_str(x.shape()));
  const int64_t m = x.shape()[0], n = x.shape()[1];
  Shape oshape = axis == 0 ? Shape{len, n} : Shape{m, len};
  std::vector<T> out(oshape[0] * oshape[1]);
  const auto& v = x.value();
  for (int64_t i = 0; i < oshape[0]; ++i)
    for (int64_t j = 0; j < oshape[1]; ++j)
      out[i * oshape[1] + j] = axis == 0 ? v[(start + i) * n + j]
                                         : v[i * n + (start + j)];
  return Tensor<T>::make_op(
      oshape, std::move(out), {x},
      [x, axis, start, oshape, m, n](const std::vector<T>& g) {
        if (!x.requires_grad()) return;
        std::vector<T> dx(m * n, T(0));
        for (int64_t i = 0; i < oshape[0]; ++i)
          for (int64_t j = 0; j < oshape[1]; ++j) {
            if (axis == 0)
              dx[(start + i) * n + j] = g[i * oshape[1] + j];
            else
              dx[i * n + (start + j)] = g[i * oshape[1] + j];
          }
        x.node()->accumulate(dx);
      });
}

// ---------------------------------------------------------------------------
// Reductions and losses

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T s = std::accumulate(x.value().begin(), x.value().end(), T(0));
  return Tensor<T>::make_op({1}, std::vector<T>{s}, {x},
                            [x](const std::vector<T>& g) {
                              if (!x.requires_grad()) return;
                              std::vector<T> dx(x.numel(), g[0]);
                              x.node()->accumulate(dx);
                            });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  const T inv = T(1) / T(x.numel());
  T s = std::accumulate(x.value().begin(), x.value().end(), T(0)) * inv;
  return Tensor<T>::make_op({1}, std::vector<T>{s}, {x},
                            [x, inv](const std::vector<T>& g) {
                              if (!x.requires_grad()) return;
                              std::vector<T> dx(x.numel(), g[0] * inv);
                              x.node()->accumulate(dx);
                            });
}

// Mean of squared differences over all elements; gradient 2(a-b)/N.
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) detail::shape_error("mse", a, b);
  const auto& av = a.value();
  const auto& bv = b.value();
  const T inv = T(1) / T(av.size());
  T s = T(0);
  for (size_t i = 0; i < av.size(); ++i) {
    T d = av[i] - bv[i];
    s += d * d;
  }
  s *= inv;
  return Tensor<T>::make_op(
      {1}, std::vector<T>{s}, {a, b}, [a, b, inv](const std::vector<T>& g) {
        const auto& av = a.value();
        const auto& bv = b.value();
        if (a.requires_grad()) {
          std::vector<T> da(av.size());
          for (size_t i = 0; i < av.size(); ++i)
            da[i] = g[0] * T(2) * (av[i] - bv[i]) * inv;
          a.node()->accumulate(da);
        }
        if (b.requires_grad()) {
          std::vector<T> db(bv.size());
          for (size_t i = 0; i < bv.size(); ++i)
            db[i] = g[0] * T(-2) * (av[i] - bv[i]) * inv;
          b.node()->accumulate(db);
        }
      });
}

// Fused log-softmax cross-entropy over rows of `logits`. Targets equal to
// `ignore_index` are excluded; reduction is the mean over the remaining rows.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits,
                        const std::vector<int32_t>& targets,
                        int32_t ignore_index = -1) {
  detail::require_rank2("cross-entropy", logits);
  const int64_t n_rows = logits.shape()[0], n_classes = logits.shape()[1];
  if (static_cast<int64_t>(targets.size()) != n_rows)
    throw std::invalid_argument("cross-entropy: got " +
                                std::to_string(targets.size()) +
                                " targets for " + std::to_string(n_rows) +
                                " rows");
  int64_t count = 0;
  for (int32_t t : targets) {
    if (t == ignore_index) continue;
    if (t < 0 || t >= n_classes)
      throw std::invalid_argument("cross-entropy: target " +
                                  std::to_string(t) + " outside [0, " +
                                  std::to_string(n_classes) + ")");
    ++count;
  }
  if (count == 0)
    throw std::invalid_argument("cross-entropy: no unmasked targets");
  const auto& v = logits.value();
  auto probs = std::make_shared<std::vector<T>>(n_rows * n_classes);
  T loss = T(0);
  for (int64_t i = 0; i < n_rows; ++i) {
    T mx = v[i * n_classes];
    for (int64_t j = 1; j < n_classes; ++j)
      mx = std::max(mx, v[i * n_classes + j]);
    T z = T(0);
    for (int64_t j = 0; j < n_classes; ++j) {
      T e = std::exp(v[i * n_classes + j] - mx);
      (*probs)[i * n_classes + j] = e;
      z += e;
    }
    for (int64_t j = 0; j < n_classes; ++j) (*probs)[i * n_classes + j] /= z;
    if (targets[i] != ignore_index) {
      T logz = std::log(z) + mx;
      loss += logz - v[i * n_classes + targets[i]];
    }
  }
  loss /= T(count);
  return Tensor<T>::make_op(
      {1}, std::vector<T>{loss}, {logits},
      [logits, targets, ignore_index, probs, n_rows, n_classes,
       count](const std::vector<T>& g) {
        if (!logits.requires_grad()) return;
        std::vector<T> dx(n_rows * n_classes, T(0));
        const T w = g[0] / T(count);
        for (int64_t i = 0; i < n_rows; ++i) {
          if (targets[i] == ignore_index) continue;
          for (int64_t j = 0; j < n_classes; ++j)
            dx[i * n_classes + j] = w * (*probs)[i * n_classes + j];
          dx[i * n_classes + targets[i]] -= w;
        }
        logits.node()->accumulate(dx);
      });
}

// ---------------------------------------------------------------------------
// Embedding and convolution

template <typename T>
Tensor<T> embed_lookup(const Tensor<T>& table,
                       const std::vector<int32_t>& ids) {
  detail::require_rank2("embed-lookup", table);
  const int64_t vocab = table.shape()[0], dim = table.shape()[1];
  const int64_t n = static_cast<int64_t>(ids.size());
  if (n == 0) throw std::invalid_argument("embed-lookup: empty id list");
  std::vector<T> out(n * dim);
  const auto& v = table.value();
  for (int64_t i = 0; i < n; ++i) {
    if (ids[i] < 0 || ids[i] >= vocab)
      throw std::invalid_argument("embed-lookup: id " +
                                  std::to_string(ids[i]) + " outside [0, " +
                                  std::to_string(vocab) + ")");
    std::copy_n(v.data() + int64_t(ids[i]) * dim, dim, out.data() + i * dim);
  }
  return Tensor<T>::make_op(
      {n, dim}, std::move(out), {table},
      [table, ids, n, dim](const std::vector<T>& g) {
        if (!table.requires_grad()) return;
        std::vector<T> dt(table.numel(), T(0));
        for (int64_t i = 0; i < n; ++i)
          for (int64_t j = 0; j < dim; ++j)
            dt[int64_t(ids[i]) * dim + j] += g[i * dim + j];
        table.node()->accumulate(dt);
      });
}

// Causal dense 1-D convolution over time-major input.
//   x: [T, Cin],  w: [K, Cin, Cout],  b: [Cout]
//   y[t] = b + sum_k x[t - (K-1-k)*dilation] @ w[k]   (x rows < 0 are zero)
// Output frame t depends only on input frames <= t.
template <typename T>
Tensor<T> causal_conv1d(const Tensor<T>& x, const Tensor<T>& w,
                        const Tensor<T>& b, int dilation = 1) {
  detail::require_rank2("causal-conv1d", x);
  if (w.rank() != 3)
    throw std::invalid_argument("causal-conv1d: weight must be [K,Cin,Cout]");
  const int64_t frames = x.shape()[0], cin = x.shape()[1];
  const int64_t kw = w.shape()[0], cout = w.shape()[2];
  if (w.shape()[1] != cin || b.numel() != cout)
    detail::shape_error("causal-conv1d", x, w);
  if (dilation < 1)
    throw std::invalid_argument("causal-conv1d: dilation must be >= 1");
  std::vector<T> out(frames * cout);
  MapM<T> om(out.data(), frames, cout);
  for (int64_t t = 0; t < frames; ++t)
    for (int64_t c = 0; c < cout; ++c) out[t * cout + c] = b.value()[c];
  MapC<T> xm(x.value().data(), frames, cin);
  for (int64_t k = 0; k < kw; ++k) {
    const int64_t off = (kw - 1 - k) * dilation;
    if (off >= frames) continue;
    MapC<T> wk(w.value().data() + k * cin * cout, cin, cout);
    om.block(off, 0, frames - off, cout).noalias() +=
        xm.block(0, 0, frames - off, cin) * wk;
  }
  return Tensor<T>::make_op(
      {frames, cout}, std::move(out), {x, w, b},
      [x, w, b, frames, cin, kw, cout, dilation](const std::vector<T>& g) {
        MapC<T> gm(g.data(), frames, cout);
        if (x.requires_grad()) {
          std::vector<T> dx(frames * cin, T(0));
          MapM<T> dxm(dx.data(), frames, cin);
          for (int64_t k = 0; k < kw; ++k) {
            const int64_t off = (kw - 1 - k) * dilation;
            if (off >= frames) continue;
            MapC<T> wk(w.value().data() + k * cin * cout, cin, cout);
            dxm.block(0, 0, frames - off, cin).noalias() +=
                gm.block(off, 0, frames - off, cout) * wk.transpose();
          }
          x.node()->accumulate(dx);
        }
        if (w.requires_grad()) {
          std::vector<T> dw(w.numel(), T(0));
          MapC<T> xm(x.value().data(), frames, cin);
          for (int64_t k = 0; k < kw; ++k) {
            const int64_t off = (kw - 1 - k) * dilation;
            if (off >= frames) continue;
            MapM<T> dwk(dw.data() + k * cin * cout, cin, cout);
            dwk.noalias() += xm.block(0, 0, frames - off, cin).transpose() *
                             gm.block(off, 0, frames - off, cout);
          }
          w.node()->accumulate(dw);
        }
        if (b.requires_grad()) {
          std::vector<T> db(cout, T(0));
          for (int64_t t = 0; t < frames; ++t)
            for (int64_t c = 0; c < cout; ++c) db[c] += g[t * cout + c];
          b.node()->accumulate(db);
        }
      });
}

// Causal depthwise 1-D convolution.  x: [T, C], w: [K, C], b: [C].
template <typename T>
Tensor<T> causal_dwconv1d(const Tensor<T>& x, const Tensor<T>& w,
                          const Tensor<T>& b) {
  detail::require_rank2("causal-dwconv1d", x);
  detail::require_rank2("causal-dwconv1d", w);
  const int64_t frames = x.shape()[0], ch = x.shape()[1];
  const int64_t kw = w.shape()[0];
  if (w.shape()[1] != ch || b.numel() != ch)
    detail::shape_error("causal-dwconv1d", x, w);
  const auto& xv = x.value();
  const auto& wv = w.value();
  std::vector<T> out(frames * ch);
  for (int64_t t = 0; t < frames; ++t)
    for (int64_t c = 0; c < ch; ++c) {
      T acc = b.value()[c];
      for (int64_t k = 0; k < kw; ++k) {
        const int64_t src = t - (kw - 1 - k);
        if (src >= 0) acc += wv[k * ch + c] * xv[src * ch + c];
      }
      out[t * ch + c] = acc;
    }
  return Tensor<T>::make_op(
      {frames, ch}, std::move(out), {x, w, b},
      [x, w, b, frames, ch, kw](const std::vector<T>& g) {
        const auto& xv = x.value();
        const auto& wv = w.value();
        if (x.requires_grad()) {
          std::vector<T> dx(frames * ch, T(0));
          for (int64_t t = 0; t < frames; ++t)
            for (int64_t c = 0; c < ch; ++c)
              for (int64_t k = 0; k < kw; ++k) {
                const int64_t src = t - (kw - 1 - k);
                if (src >= 0) dx[src * ch + c] += g[t * ch + c] * wv[k * ch + c];
              }
          x.node()->accumulate(dx);
        }
        if (w.requires_grad()) {
          std::vector<T> dw(kw * ch, T(0));
          for (int64_t t = 0; t < frames; ++t)
            for (int64_t c = 0; c < ch; ++c)
              for (int64_t k = 0; k < kw; ++k) {
                const int64_t src = t - (kw - 1 - k);
                if (src >= 0) dw[k * ch + c] += g[t * ch + c] * xv[src * ch + c];
              }
          w.node()->accumulate(dw);
        }
        if (b.requires_grad()) {
          std::vector<T> db(ch, T(0));
          for (int64_t t = 0; t < frames; ++t)
            for (int64_t c = 0; c < ch; ++c) db[c] += g[t * ch + c];
          b.node()->accumulate(db);
        }
      });
}

}  // namespace stylestream
