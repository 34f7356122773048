// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0
//
// Global style embedding: multi-layer conv features aggregated with
// learnable softmax coefficients, a dilated-causal TDNN trunk, attentive
// statistics pooling, and a linear head to the DiT hidden size. Trained
// jointly with the Stylizer through the CFM loss only.

#pragma once

#include <string>
#include <vector>

#include "stylestream/nn.hpp"

namespace stylestream {

struct StyleEncoderConfig {
  int n_mels = 100;
  int dim = 128;       // trunk width
  int layers = 4;      // feature stack depth (aggregated)
  int tdnn_kernel = 3;
  int score_hidden = 64;
  int out_dim = 128;   // = Stylizer hidden size
};

// Softmax-weighted sum of equal-shaped layer features.
template <typename T>
Tensor<T> aggregate_layers(const std::vector<Tensor<T>>& layer_feats,
                           const Tensor<T>& weights) {
  if (layer_feats.empty())
    throw std::invalid_argument("aggregate_layers: no layers");
  const int64_t n = int64_t(layer_feats.size());
  if (weights.numel() != n)
    throw std::invalid_argument("aggregate_layers: weight count mismatch");
  for (const auto& f : layer_feats)
    if (f.shape() != layer_feats[0].shape())
      throw std::invalid_argument("aggregate_layers: layer shape mismatch");
  Tensor<T> w = softmax_lastdim(weights);  // [1, L]
  Tensor<T> acc = mul(layer_feats[0], slice(w, 1, 0, 1));
  for (int64_t l = 1; l < n; ++l)
    acc = add(acc, mul(layer_feats[l], slice(w, 1, l, 1)));
  return acc;
}

// Attention-weighted mean and standard deviation over frames, [1, 2d].
// The scorer must be frame-local so pooling is permutation-equivariant.
template <typename T>
struct AttentiveStatsPool {
  Linear<T> score1, score2;

  AttentiveStatsPool() = default;
  AttentiveStatsPool(ParamStore<T>& ps, const std::string& name, int64_t d,
                     int64_t hidden, Rng& rng) {
    score1 = Linear<T>(ps, name + ".s1", d, hidden, rng);
    score2 = Linear<T>(ps, name + ".s2", hidden, 1, rng);
  }

  Tensor<T> operator()(const Tensor<T>& x) const {
    if (x.shape()[0] < 1)
      throw std::invalid_argument("attentive_stats_pool: empty input");
    Tensor<T> scores = score2(tanh(score1(x)));          // [T, 1]
    Tensor<T> alpha = transpose(softmax_lastdim(transpose(scores)));  // [T,1]
    Tensor<T> alpha_row = transpose(alpha);              // [1, T]
    Tensor<T> mu = matmul(alpha_row, x);                 // [1, d]
    Tensor<T> ex2 = matmul(alpha_row, mul(x, x));        // [1, d]
    Tensor<T> var = clamp_min(sub(ex2, mul(mu, mu)), 1e-8);
    return concat<T>({mu, sqrt(var)}, 1);                // [1, 2d]
  }
};

template <typename T>
struct StyleEncoder {
  StyleEncoderConfig cfg;
  ParamStore<T> params;

  std::vector<CausalConv<T>> feature_stack;
  Tensor<T> layer_weights;  // [1, layers]
  std::vector<CausalConv<T>> tdnn;  // dilations 1, 2, 3
  AttentiveStatsPool<T> pool;
  Linear<T> out;

  StyleEncoder() = default;
  StyleEncoder(const StyleEncoderConfig& c, uint64_t seed) : cfg(c) {
    Rng rng(seed);
    feature_stack.reserve(cfg.layers);
    for (int i = 0; i < cfg.layers; ++i)
      feature_stack.emplace_back(params, "style_enc.fs" + std::to_string(i), 3,
                                 i == 0 ? cfg.n_mels : cfg.dim, cfg.dim, rng);
    layer_weights = params.add("style_enc.layer_w",
                               Tensor<T>::zeros({1, cfg.layers}, true));
    for (int i = 0; i < 3; ++i)
      tdnn.emplace_back(params, "style_enc.tdnn" + std::to_string(i),
                        cfg.tdnn_kernel, cfg.dim, cfg.dim, rng, i + 1);
    pool = AttentiveStatsPool<T>(params, "style_enc.pool", cfg.dim,
                                 cfg.score_hidden, rng);
    out = Linear<T>(params, "style_enc.out", 2 * cfg.dim, cfg.out_dim, rng);
  }

  // mel: [T, n_mels] (standardized by the caller). Returns [1, out_dim].
  Tensor<T> operator()(const Tensor<T>& mel) const {
    if (mel.rank() != 2 || mel.shape()[0] < 1)
      throw std::invalid_argument("style_embed: empty input");
    std::vector<Tensor<T>> layers;
    layers.reserve(cfg.layers);
    Tensor<T> h = mel;
    for (const auto& conv : feature_stack) {
      h = silu(conv(h));
      layers.push_back(h);
    }
    h = aggregate_layers(layers, layer_weights);
    for (const auto& conv : tdnn) h = silu(conv(h));
    return out(pool(h));
  }
};

}  // namespace stylestream
