// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0
//
// Additive attention bias matrices: full, frame-causal, chunked-causal, and
// ALiBi-combined variants. Chunked-causal treats chunk boundaries as the
// causal unit: a query may attend every key whose chunk index is <= its own,
// so attention inside a chunk is bidirectional.

#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "stylestream/tensor.hpp"

namespace stylestream {

enum class BiasKind { kFull, kCausal, kChunkedCausal, kAlibiCombined };

template <typename T>
struct AttentionBias {
  BiasKind kind = BiasKind::kFull;
  int64_t frames = 0;
  int64_t chunk_len = 0;              // 0 unless chunked-causal
  Tensor<T> mask;                     // [T,T], entries 0 or -inf
  std::vector<double> alibi_slopes;   // per head; empty when ALiBi is off

  // Bias matrix for one head: mask plus slope-scaled -|q-k| when ALiBi is on.
  Tensor<T> head_bias(int head) const {
    if (alibi_slopes.empty()) return mask;
    const double s = alibi_slopes[head];
    const auto& mv = mask.value();
    std::vector<T> out(mv.size());
    for (int64_t q = 0; q < frames; ++q)
      for (int64_t k = 0; k < frames; ++k)
        out[q * frames + k] = static_cast<T>(
            double(mv[q * frames + k]) - s * std::abs(double(q - k)));
    return Tensor<T>::from_data({frames, frames}, std::move(out));
  }
};

// Standard geometric ALiBi slope schedule. For a power-of-two head count n
// the slopes are 2^(-8i/n), i = 1..n; other counts interpolate from the next
// power of two as in the reference implementation.
inline std::vector<double> alibi_slope_schedule(int heads) {
  auto pow2_slopes = [](int n) {
    std::vector<double> s(n);
    const double start = std::pow(2.0, -8.0 / n);
    double v = start;
    for (int i = 0; i < n; ++i, v *= start) s[i] = v;
    return s;
  };
  if ((heads & (heads - 1)) == 0) return pow2_slopes(heads);
  int floor_pow2 = 1;
  while (floor_pow2 * 2 <= heads) floor_pow2 *= 2;
  std::vector<double> s = pow2_slopes(floor_pow2);
  std::vector<double> extra = pow2_slopes(2 * floor_pow2);
  for (size_t i = 0; i < extra.size() && s.size() < size_t(heads); i += 2)
    s.push_back(extra[i]);
  return s;
}

template <typename T>
AttentionBias<T> full_bias(int64_t frames) {
  AttentionBias<T> b;
  b.kind = BiasKind::kFull;
  b.frames = frames;
  b.mask = Tensor<T>::zeros({frames, frames});
  return b;
}

// Entry (q, k) is -inf iff chunk(k) > chunk(q) with chunk(i) = floor(i / len).
template <typename T>
AttentionBias<T> chunked_causal_bias(int64_t frames, int64_t chunk_len) {
  if (frames < 1 || chunk_len < 1)
    throw std::invalid_argument("chunked_causal_bias: frames and chunk_len must be >= 1");
  AttentionBias<T> b;
  b.kind = BiasKind::kChunkedCausal;
  b.frames = frames;
  b.chunk_len = chunk_len;
  const T ninf = -std::numeric_limits<T>::infinity();
  std::vector<T> m(frames * frames, T(0));
  for (int64_t q = 0; q < frames; ++q) {
    const int64_t cq = q / chunk_len;
    for (int64_t k = 0; k < frames; ++k)
      if (k / chunk_len > cq) m[q * frames + k] = ninf;
  }
  b.mask = Tensor<T>::from_data({frames, frames}, std::move(m));
  return b;
}

// Frame-causal (chunk length one).
template <typename T>
AttentionBias<T> causal_bias(int64_t frames) {
  AttentionBias<T> b = chunked_causal_bias<T>(frames, 1);
  b.kind = BiasKind::kCausal;
  b.chunk_len = 0;
  return b;
}

template <typename T>
AttentionBias<T> with_alibi(AttentionBias<T> base, int heads) {
  base.alibi_slopes = alibi_slope_schedule(heads);
  base.kind = BiasKind::kAlibiCombined;
  return base;
}

// Per-head bias matrices realized once per forward pass and shared across
// layers; validates that every query row keeps at least one attendable key.
template <typename T>
struct PreparedBias {
  std::vector<Tensor<T>> per_head;  // size 1 when shared across heads
  const Tensor<T>& for_head(int h) const {
    return per_head.size() == 1 ? per_head[0] : per_head[size_t(h)];
  }
};

// Unrestricted rectangular bias for cross-attention (queries x keys).
template <typename T>
PreparedBias<T> full_cross_bias(int64_t q_frames, int64_t k_frames) {
  PreparedBias<T> p;
  p.per_head = {Tensor<T>::zeros({q_frames, k_frames})};
  return p;
}

template <typename T>
PreparedBias<T> prepare_bias(const AttentionBias<T>& b, int heads) {
  const auto& mv = b.mask.value();
  const int64_t n = b.frames;
  for (int64_t q = 0; q < n; ++q) {
    bool any = false;
    for (int64_t k = 0; k < n && !any; ++k)
      any = std::isfinite(double(mv[q * n + k]));
    if (!any)
      throw std::invalid_argument(
          "attention bias: query " + std::to_string(q) +
          " has no attendable key (all -inf row)");
  }
  PreparedBias<T> p;
  if (b.alibi_slopes.empty()) {
    p.per_head = {b.mask};
  } else {
    p.per_head.reserve(heads);
    for (int h = 0; h < heads; ++h) p.per_head.push_back(b.head_bias(h));
  }
  return p;
}

}  // namespace stylestream
