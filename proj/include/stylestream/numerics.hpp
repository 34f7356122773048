// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0
//
// Contract-checked op dispatcher and the finite-difference gradient oracle.

#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "stylestream/ops.hpp"

namespace stylestream {

enum class OpKind {
  kMatmul,
  kAdd,
  kMul,
  kScale,
  kSoftmaxLastDim,
  kLayerNorm,
  kGelu,
  kSilu,
  kCausalConv1d,
  kEmbedLookup,
  kConcat,
  kSlice,
  kTranspose,
  kMean,
  kSum,
  kMse,
  kCrossEntropy,
};

inline const char* op_kind_name(OpKind k) {
  switch (k) {
    case OpKind::kMatmul: return "matmul";
    case OpKind::kAdd: return "add";
    case OpKind::kMul: return "mul";
    case OpKind::kScale: return "scale";
    case OpKind::kSoftmaxLastDim: return "softmax-lastdim";
    case OpKind::kLayerNorm: return "layernorm";
    case OpKind::kGelu: return "gelu";
    case OpKind::kSilu: return "silu";
    case OpKind::kCausalConv1d: return "causal-conv1d";
    case OpKind::kEmbedLookup: return "embed-lookup";
    case OpKind::kConcat: return "concat";
    case OpKind::kSlice: return "slice";
    case OpKind::kTranspose: return "transpose";
    case OpKind::kMean: return "mean";
    case OpKind::kSum: return "sum";
    case OpKind::kMse: return "mse";
    case OpKind::kCrossEntropy: return "cross-entropy";
  }
  return "?";
}

inline constexpr std::array<OpKind, 17> kAllOpKinds = {
    OpKind::kMatmul,       OpKind::kAdd,         OpKind::kMul,
    OpKind::kScale,        OpKind::kSoftmaxLastDim, OpKind::kLayerNorm,
    OpKind::kGelu,         OpKind::kSilu,        OpKind::kCausalConv1d,
    OpKind::kEmbedLookup,  OpKind::kConcat,      OpKind::kSlice,
    OpKind::kTranspose,    OpKind::kMean,        OpKind::kSum,
    OpKind::kMse,          OpKind::kCrossEntropy};

struct OpAttrs {
  double scale = 1.0;
  int axis = 0;
  int64_t start = 0;
  int64_t len = 0;
  int dilation = 1;
  int32_t ignore_index = -1;
  std::vector<int32_t> ids;  // embed-lookup / cross-entropy targets
};

namespace detail {

template <typename T>
inline void require_finite(const char* op, const Tensor<T>& x) {
  for (T v : x.value())
    if (!std::isfinite(v))
      throw std::invalid_argument(std::string(op) +
                                  ": non-finite value in input");
}

}  // namespace detail

// Uniform entry point over all registered op kinds. Inputs are validated for
// shape conformance (delegated to the typed ops) and finiteness here; the
// typed functions in ops.hpp are the fast path used by model code.
template <typename T>
Tensor<T> forward_op(OpKind kind, const std::vector<Tensor<T>>& inputs,
                     const OpAttrs& attrs = {}) {
  const char* name = op_kind_name(kind);
  auto need = [&](size_t n) {
    if (inputs.size() != n)
      throw std::invalid_argument(std::string(name) + ": expected " +
                                  std::to_string(n) + " inputs, got " +
                                  std::to_string(inputs.size()));
  };
  if (kind != OpKind::kConcat)
    for (const auto& in : inputs) detail::require_finite(name, in);
  switch (kind) {
    case OpKind::kMatmul:
      need(2);
      return matmul(inputs[0], inputs[1]);
    case OpKind::kAdd:
      need(2);
      return add(inputs[0], inputs[1]);
    case OpKind::kMul:
      need(2);
      return mul(inputs[0], inputs[1]);
    case OpKind::kScale:
      need(1);
      return scale(inputs[0], attrs.scale);
    case OpKind::kSoftmaxLastDim:
      need(1);
      return softmax_lastdim(inputs[0]);
    case OpKind::kLayerNorm:
      if (inputs.size() == 1) return layernorm(inputs[0]);
      need(3);
      return layernorm(inputs[0], inputs[1], inputs[2]);
    case OpKind::kGelu:
      need(1);
      return gelu(inputs[0]);
    case OpKind::kSilu:
      need(1);
      return silu(inputs[0]);
    case OpKind::kCausalConv1d:
      need(3);
      return causal_conv1d(inputs[0], inputs[1], inputs[2], attrs.dilation);
    case OpKind::kEmbedLookup:
      need(1);
      return embed_lookup(inputs[0], attrs.ids);
    case OpKind::kConcat: {
      for (const auto& in : inputs) detail::require_finite(name, in);
      return concat(inputs, attrs.axis);
    }
    case OpKind::kSlice:
      need(1);
      return slice(inputs[0], attrs.axis, attrs.start, attrs.len);
    case OpKind::kTranspose:
      need(1);
      return transpose(inputs[0]);
    case OpKind::kMean:
      need(1);
      return mean(inputs[0]);
    case OpKind::kSum:
      need(1);
      return sum(inputs[0]);
    case OpKind::kMse:
      need(2);
      return mse(inputs[0], inputs[1]);
    case OpKind::kCrossEntropy:
      need(1);
      return cross_entropy(inputs[0], attrs.ids, attrs.ignore_index);
  }
  throw std::invalid_argument("forward_op: unknown kind");
}

// Max relative error between analytic gradients and central finite
// differences of a scalar-valued function at x:
//   max_i |analytic_i - numeric_i| / (|numeric_i| + 1e-12)
// `coords` restricts the sweep to a coordinate subset (empty = all).
template <typename T>
double grad_check(const std::function<Tensor<T>(const Tensor<T>&)>& f,
                  const Tensor<T>& x, double eps,
                  const std::vector<int64_t>& coords = {}) {
  if (eps <= 0.0 || eps > 1e-2)
    throw std::invalid_argument("grad_check: eps must be in (0, 1e-2]");
  Tensor<T> xp = Tensor<T>::from_data(x.shape(), x.value(), true);
  Tensor<T> loss = f(xp);
  if (loss.numel() != 1)
    throw std::invalid_argument("grad_check: f must be scalar-valued");
  backward(loss);
  std::vector<T> analytic =
      xp.has_grad() ? xp.grad() : std::vector<T>(x.numel(), T(0));

  std::vector<int64_t> idx = coords;
  if (idx.empty()) {
    idx.resize(x.numel());
    for (int64_t i = 0; i < x.numel(); ++i) idx[i] = i;
  }
  NoGradGuard ng;
  double max_err = 0.0;
  std::vector<T> base = x.value();
  for (int64_t i : idx) {
    std::vector<T> vp = base, vm = base;
    vp[i] += static_cast<T>(eps);
    vm[i] -= static_cast<T>(eps);
    T fp = f(Tensor<T>::from_data(x.shape(), vp)).item();
    T fm = f(Tensor<T>::from_data(x.shape(), vm)).item();
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw std::invalid_argument("grad_check: f non-finite at x +/- eps");
    double numeric = (double(fp) - double(fm)) / (2.0 * eps);
    double err =
        std::abs(double(analytic[i]) - numeric) / (std::abs(numeric) + 1e-12);
    max_err = std::max(max_err, err);
  }
  return max_err;
}

}  // namespace stylestream
