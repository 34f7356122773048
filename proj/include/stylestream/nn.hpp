// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0
//
// Shared neural building blocks: parameter registry, linear/norm layers,
// multi-head attention over additive bias masks, macaron conformer blocks,
// adaLN-Zero DiT blocks, and the sinusoidal flow-time embedding.
//
// All activations are time-major [T, d]. Blocks are stateless given their
// parameters; parameters may be shared read-only across threads during
// inference.

#pragma once

#include <cmath>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "stylestream/bias.hpp"
#include "stylestream/checkpoint.hpp"
#include "stylestream/ops.hpp"
#include "stylestream/rng.hpp"

namespace stylestream {

// Name -> leaf-tensor registry backing checkpoint save/load and the
// optimizer's parameter list.
template <typename T>
class ParamStore {
 public:
  Tensor<T> add(const std::string& name, Tensor<T> t) {
    entries_.emplace_back(name, t);
    return t;
  }

  const std::vector<std::pair<std::string, Tensor<T>>>& entries() const {
    return entries_;
  }

  std::vector<Tensor<T>> tensors() const {
    std::vector<Tensor<T>> out;
    out.reserve(entries_.size());
    for (const auto& [_, t] : entries_) out.push_back(t);
    return out;
  }

  int64_t total_params() const {
    int64_t n = 0;
    for (const auto& [_, t] : entries_) n += t.numel();
    return n;
  }

  TensorMap to_tensor_map() const {
    TensorMap m;
    for (const auto& [name, t] : entries_) {
      NamedTensor nt;
      nt.shape = t.shape();
      nt.data.reserve(t.numel());
      for (T v : t.value()) nt.data.push_back(static_cast<float>(v));
      m.emplace(name, std::move(nt));
    }
    return m;
  }

  void load_tensor_map(const TensorMap& m) {
    for (auto& [name, t] : entries_) {
      auto it = m.find(name);
      if (it == m.end())
        throw std::runtime_error("checkpoint: missing tensor " + name);
      if (it->second.shape != t.shape())
        throw std::runtime_error("checkpoint: shape mismatch for " + name +
                                 ": file " + shape_str(it->second.shape) +
                                 " vs model " + shape_str(t.shape()));
      std::vector<T> v(it->second.data.begin(), it->second.data.end());
      t.set_value(v);
    }
  }

  void zero_grads() {
    for (auto& [_, t] : entries_) t.zero_grad();
  }

 private:
  std::vector<std::pair<std::string, Tensor<T>>> entries_;
};

template <typename T>
Tensor<T> xavier_uniform(Shape shape, int64_t fan_in, int64_t fan_out,
                         Rng& rng) {
  const double a = std::sqrt(6.0 / double(fan_in + fan_out));
  std::vector<T> d(shape_numel(shape));
  for (auto& v : d) v = static_cast<T>(rng.uniform(-a, a));
  return Tensor<T>::from_data(std::move(shape), std::move(d), true);
}

// ---------------------------------------------------------------------------

template <typename T>
struct Linear {
  Tensor<T> w, b;

  Linear() = default;
  Linear(ParamStore<T>& ps, const std::string& name, int64_t in, int64_t out,
         Rng& rng, bool zero_init = false) {
    w = ps.add(name + ".w", zero_init
                                ? Tensor<T>::zeros({in, out}, true)
                                : xavier_uniform<T>({in, out}, in, out, rng));
    b = ps.add(name + ".b", Tensor<T>::zeros({out}, true));
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return add(matmul(x, w), b);
  }
};

template <typename T>
struct LayerNormP {
  Tensor<T> gamma, beta;

  LayerNormP() = default;
  LayerNormP(ParamStore<T>& ps, const std::string& name, int64_t dim) {
    gamma = ps.add(name + ".g", Tensor<T>::full({dim}, T(1), true));
    beta = ps.add(name + ".b", Tensor<T>::zeros({dim}, true));
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return layernorm(x, gamma, beta);
  }
};

// Dense causal conv layer over time-major input.
template <typename T>
struct CausalConv {
  Tensor<T> w, b;
  int dilation = 1;

  CausalConv() = default;
  CausalConv(ParamStore<T>& ps, const std::string& name, int64_t kernel,
             int64_t in, int64_t out, Rng& rng, int dil = 1)
      : dilation(dil) {
    w = ps.add(name + ".w",
               xavier_uniform<T>({kernel, in, out}, kernel * in, kernel * out,
                                 rng));
    b = ps.add(name + ".b", Tensor<T>::zeros({out}, true));
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    return causal_conv1d(x, w, b, dilation);
  }
};

// ---------------------------------------------------------------------------
// Multi-head attention. Softmax over keys after adding the bias matrix;
// masked (-inf) keys receive exactly zero weight.

template <typename T>
struct MultiHeadAttention {
  Linear<T> wq, wk, wv, wo;
  int heads = 1;
  int64_t dim = 0;

  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore<T>& ps, const std::string& name, int64_t d,
                     int n_heads, Rng& rng)
      : heads(n_heads), dim(d) {
    if (d % n_heads != 0)
      throw std::invalid_argument("attention: dim " + std::to_string(d) +
                                  " not divisible by heads " +
                                  std::to_string(n_heads));
    wq = Linear<T>(ps, name + ".wq", d, d, rng);
    wk = Linear<T>(ps, name + ".wk", d, d, rng);
    wv = Linear<T>(ps, name + ".wv", d, d, rng);
    wo = Linear<T>(ps, name + ".wo", d, d, rng);
  }

  // Self-attention when q_in == kv_in; cross-attention otherwise.
  Tensor<T> forward(const Tensor<T>& q_in, const Tensor<T>& kv_in,
                    const PreparedBias<T>& bias) const {
    const int64_t dh = dim / heads;
    Tensor<T> q = wq(q_in), k = wk(kv_in), v = wv(kv_in);
    std::vector<Tensor<T>> outs;
    outs.reserve(heads);
    const double inv_sqrt = 1.0 / std::sqrt(double(dh));
    for (int h = 0; h < heads; ++h) {
      Tensor<T> qh = slice(q, 1, h * dh, dh);
      Tensor<T> kh = slice(k, 1, h * dh, dh);
      Tensor<T> vh = slice(v, 1, h * dh, dh);
      Tensor<T> scores = scale(matmul(qh, transpose(kh)), inv_sqrt);
      scores = add(scores, bias.for_head(h));
      outs.push_back(matmul(softmax_lastdim(scores), vh));
    }
    return wo(concat(outs, 1));
  }

  Tensor<T> operator()(const Tensor<T>& x, const PreparedBias<T>& bias) const {
    return forward(x, x, bias);
  }
};

template <typename T>
struct FeedForward {
  Linear<T> in, out;

  FeedForward() = default;
  FeedForward(ParamStore<T>& ps, const std::string& name, int64_t d,
              int64_t hidden, Rng& rng) {
    in = Linear<T>(ps, name + ".in", d, hidden, rng);
    out = Linear<T>(ps, name + ".out", hidden, d, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return out(gelu(in(x))); }
};

// ---------------------------------------------------------------------------
// Conformer block: macaron FFN -> MHSA -> causal conv module -> FFN, with
// half-step FFN residuals and a final layer norm. The conv module uses a
// causal depthwise kernel so the block is streaming-safe by construction.

template <typename T>
struct ConformerBlock {
  LayerNormP<T> ln_ffn1, ln_attn, ln_conv, ln_ffn2, ln_out;
  FeedForward<T> ffn1, ffn2;
  MultiHeadAttention<T> attn;
  Linear<T> conv_in;   // d -> 2d, gated (GLU)
  Tensor<T> dw_w, dw_b;  // depthwise kernel
  Linear<T> conv_out;
  LayerNormP<T> conv_ln;
  int64_t dim = 0;

  ConformerBlock() = default;
  ConformerBlock(ParamStore<T>& ps, const std::string& name, int64_t d,
                 int n_heads, int64_t ffn_hidden, int64_t conv_kernel,
                 Rng& rng)
      : dim(d) {
    ln_ffn1 = LayerNormP<T>(ps, name + ".ln_ffn1", d);
    ln_attn = LayerNormP<T>(ps, name + ".ln_attn", d);
    ln_conv = LayerNormP<T>(ps, name + ".ln_conv", d);
    ln_ffn2 = LayerNormP<T>(ps, name + ".ln_ffn2", d);
    ln_out = LayerNormP<T>(ps, name + ".ln_out", d);
    ffn1 = FeedForward<T>(ps, name + ".ffn1", d, ffn_hidden, rng);
    ffn2 = FeedForward<T>(ps, name + ".ffn2", d, ffn_hidden, rng);
    attn = MultiHeadAttention<T>(ps, name + ".attn", d, n_heads, rng);
    conv_in = Linear<T>(ps, name + ".conv_in", d, 2 * d, rng);
    const double a = std::sqrt(6.0 / double(conv_kernel + 1));
    std::vector<T> kw(conv_kernel * d);
    for (auto& v : kw) v = static_cast<T>(rng.uniform(-a, a));
    dw_w = ps.add(name + ".dw.w",
                  Tensor<T>::from_data({conv_kernel, d}, std::move(kw), true));
    dw_b = ps.add(name + ".dw.b", Tensor<T>::zeros({d}, true));
    conv_ln = LayerNormP<T>(ps, name + ".conv_ln", d);
    conv_out = Linear<T>(ps, name + ".conv_out", d, d, rng);
  }

  Tensor<T> conv_module(const Tensor<T>& x) const {
    Tensor<T> g = conv_in(x);
    Tensor<T> a = slice(g, 1, 0, dim);
    Tensor<T> b = slice(g, 1, dim, dim);
    Tensor<T> h = mul(a, sigmoid(b));           // GLU
    h = causal_dwconv1d(h, dw_w, dw_b);
    h = silu(conv_ln(h));
    return conv_out(h);
  }

  Tensor<T> operator()(const Tensor<T>& x0, const PreparedBias<T>& bias) const {
    Tensor<T> x = add(x0, scale(ffn1(ln_ffn1(x0)), 0.5));
    x = add(x, attn(ln_attn(x), bias));
    x = add(x, conv_module(ln_conv(x)));
    x = add(x, scale(ffn2(ln_ffn2(x)), 0.5));
    return ln_out(x);
  }
};

// ---------------------------------------------------------------------------
// adaLN-Zero DiT block. The modulation projection is zero-initialized, so
// scale, shift, and gate are all zero before training and the block is the
// identity map exactly.

template <typename T>
struct DiTBlock {
  MultiHeadAttention<T> attn;
  FeedForward<T> ffn;
  Linear<T> modulation;  // cond [1,d] -> [1,6d], zero-init
  int64_t dim = 0;

  DiTBlock() = default;
  DiTBlock(ParamStore<T>& ps, const std::string& name, int64_t d, int n_heads,
           int64_t ffn_hidden, Rng& rng)
      : dim(d) {
    attn = MultiHeadAttention<T>(ps, name + ".attn", d, n_heads, rng);
    ffn = FeedForward<T>(ps, name + ".ffn", d, ffn_hidden, rng);
    modulation = Linear<T>(ps, name + ".mod", d, 6 * d, rng, /*zero_init=*/true);
  }

  // cond: [1, d] conditioning vector (style embedding + time embedding).
  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& cond,
                       const PreparedBias<T>& bias) const {
    Tensor<T> m = modulation(silu(cond));
    Tensor<T> shift_a = slice(m, 1, 0, dim);
    Tensor<T> scale_a = slice(m, 1, dim, dim);
    Tensor<T> gate_a = slice(m, 1, 2 * dim, dim);
    Tensor<T> shift_f = slice(m, 1, 3 * dim, dim);
    Tensor<T> scale_f = slice(m, 1, 4 * dim, dim);
    Tensor<T> gate_f = slice(m, 1, 5 * dim, dim);

    auto modulate = [](const Tensor<T>& h, const Tensor<T>& sc,
                       const Tensor<T>& sh) {
      return add(mul(h, add_scalar(sc, 1.0)), sh);
    };
    Tensor<T> h = modulate(layernorm(x), scale_a, shift_a);
    Tensor<T> y = add(x, mul(attn(h, bias), gate_a));
    Tensor<T> h2 = modulate(layernorm(y), scale_f, shift_f);
    return add(y, mul(ffn(h2), gate_f));
  }
};

// ---------------------------------------------------------------------------
// Pre-LN transformer decoder block: causal self-attention, cross-attention
// over encoder memory, feed-forward.

template <typename T>
struct DecoderBlock {
  LayerNormP<T> ln_self, ln_cross, ln_ffn;
  MultiHeadAttention<T> self_attn, cross_attn;
  FeedForward<T> ffn;

  DecoderBlock() = default;
  DecoderBlock(ParamStore<T>& ps, const std::string& name, int64_t d,
               int n_heads, int64_t ffn_hidden, Rng& rng) {
    ln_self = LayerNormP<T>(ps, name + ".ln_self", d);
    ln_cross = LayerNormP<T>(ps, name + ".ln_cross", d);
    ln_ffn = LayerNormP<T>(ps, name + ".ln_ffn", d);
    self_attn = MultiHeadAttention<T>(ps, name + ".self", d, n_heads, rng);
    cross_attn = MultiHeadAttention<T>(ps, name + ".cross", d, n_heads, rng);
    ffn = FeedForward<T>(ps, name + ".ffn", d, ffn_hidden, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x, const Tensor<T>& memory,
                       const PreparedBias<T>& self_bias,
                       const PreparedBias<T>& cross_bias) const {
    Tensor<T> h = add(x, self_attn(ln_self(x), self_bias));
    h = add(h, cross_attn.forward(ln_cross(h), memory, cross_bias));
    return add(h, ffn(ln_ffn(h)));
  }
};

// ---------------------------------------------------------------------------

// Interleaved sin/cos embedding of a flow time t in [0, 1] over a geometric
// frequency ladder from 1 to 30 rad. Norm is sqrt(dim/2) for every t.
// The ladder tops out low: the OT target velocity is constant in t, and a
// velocity field smooth in t keeps low-NFE Euler in its convergent regime.
template <typename T>
Tensor<T> sinusoidal_time_embed(double t, int64_t dim) {
  if (t < 0.0 || t > 1.0)
    throw std::invalid_argument("time_embed: t must lie in [0,1], got " +
                                std::to_string(t));
  if (dim < 2 || dim % 2 != 0)
    throw std::invalid_argument("time_embed: dim must be even and >= 2");
  const int64_t half = dim / 2;
  std::vector<T> e(dim);
  for (int64_t i = 0; i < half; ++i) {
    const double omega =
        half > 1 ? std::exp(std::log(30.0) * double(i) / double(half - 1))
                 : 1.0;
    e[2 * i] = static_cast<T>(std::sin(omega * t));
    e[2 * i + 1] = static_cast<T>(std::cos(omega * t));
  }
  return Tensor<T>::from_data({1, dim}, std::move(e));
}

// Sinusoidal positional encoding rows for frame indices 0..frames-1,
// matching the classic transformer ladder; used on decoder memory.
template <typename T>
Tensor<T> sinusoidal_positions(int64_t frames, int64_t dim) {
  std::vector<T> e(frames * dim);
  const int64_t half = dim / 2;
  for (int64_t p = 0; p < frames; ++p)
    for (int64_t i = 0; i < half; ++i) {
      const double omega = std::pow(10000.0, -2.0 * double(i) / double(dim));
      e[p * dim + 2 * i] = static_cast<T>(std::sin(omega * double(p)));
      e[p * dim + 2 * i + 1] = static_cast<T>(std::cos(omega * double(p)));
    }
  return Tensor<T>::from_data({frames, dim}, std::move(e));
}

}  // namespace stylestream
