// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0
//
// Flow-matching DiT for spectrogram inpainting. The network predicts the
// OT-path velocity from the channel concat of the noisy spectrogram, the
// unmasked context, and the content features; the style embedding plus the
// flow-time embedding condition every block through adaLN-Zero. Sampling is
// plain Euler with classifier-free guidance; the null condition is zeroed
// content/context channels plus a learned null style embedding.

#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "stylestream/destylizer.hpp"
#include "stylestream/mel.hpp"
#include "stylestream/nn.hpp"
#include "stylestream/style_encoder.hpp"

namespace stylestream {

struct StylizerConfig {
  int n_mels = 100;
  int content_dim = 64;
  int hidden = 128;
  int blocks = 6;
  int heads = 4;
  int ffn = 256;
  double mask_lo = 0.7;        // inpainting mask coverage range
  double mask_hi = 1.0;
  double p_drop_content = 0.2;  // CFG condition dropout
  double p_drop_context = 0.3;
  double p_drop_style = 0.3;
  double cfg_alpha = 2.0;
  int nfe = 16;
  bool use_alibi = true;  // positional scheme for the DiT stack
};

// OT path: xt = (1-t) x0 + t x1 and its (constant) time derivative x1 - x0.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> ot_path(const Tensor<T>& x0,
                                        const Tensor<T>& x1, double t) {
  if (x0.shape() != x1.shape())
    throw std::invalid_argument("ot_path: endpoint shapes differ");
  if (t < 0.0 || t > 1.0)
    throw std::invalid_argument("ot_path: t outside [0,1]");
  std::vector<T> xt(x0.numel()), d(x0.numel());
  const auto& a = x0.value();
  const auto& b = x1.value();
  for (int64_t i = 0; i < x0.numel(); ++i) {
    xt[i] = static_cast<T>((1.0 - t) * double(a[i]) + t * double(b[i]));
    d[i] = b[i] - a[i];
  }
  return {Tensor<T>::from_data(x0.shape(), std::move(xt)),
          Tensor<T>::from_data(x0.shape(), std::move(d))};
}

// One contiguous generation span covering round(u*T) frames, u ~ U[lo, hi].
inline std::vector<uint8_t> sample_mask(int64_t frames, double lo, double hi,
                                        Rng& rng) {
  if (frames < 2) throw std::invalid_argument("sample_mask: need T >= 2");
  if (lo > hi || lo < 0.0 || hi > 1.0)
    throw std::invalid_argument("sample_mask: invalid coverage range");
  const double u = rng.uniform(lo, hi);
  const int64_t len = std::max<int64_t>(1, int64_t(std::llround(u * double(frames))));
  const int64_t start = rng.uniform_int(0, frames - len);
  std::vector<uint8_t> m(frames, 0);
  for (int64_t t = start; t < start + len; ++t) m[t] = 1;
  return m;
}

template <typename T>
struct Stylizer {
  StylizerConfig cfg;
  ParamStore<T> params;

  Linear<T> input_proj;  // 2F + D_c -> hidden
  std::vector<DiTBlock<T>> blocks;
  Linear<T> final_mod;   // cond -> [shift, scale] for the output norm, zero-init
  Linear<T> head;        // hidden -> F, zero-init
  Tensor<T> null_style;  // learned null condition embedding [1, hidden]

  std::vector<float> mel_mean, mel_std;  // x1 standardization stats

  Stylizer() = default;
  Stylizer(const StylizerConfig& c, uint64_t seed) : cfg(c) {
    Rng rng(seed);
    const int64_t d = cfg.hidden;
    input_proj = Linear<T>(params, "stylizer.input_proj",
                           2 * cfg.n_mels + cfg.content_dim, d, rng);
    for (int i = 0; i < cfg.blocks; ++i)
      blocks.emplace_back(params, "stylizer.blk" + std::to_string(i), d,
                          cfg.heads, cfg.ffn, rng);
    final_mod = Linear<T>(params, "stylizer.final_mod", d, 2 * d, rng, true);
    head = Linear<T>(params, "stylizer.head", d, cfg.n_mels, rng, true);
    null_style = params.add("stylizer.null_style",
                            Tensor<T>::randn({1, d}, rng, T(0.02), true));
    mel_mean.assign(cfg.n_mels, 0.0f);
    mel_std.assign(cfg.n_mels, 1.0f);
  }

  PreparedBias<T> make_bias(int64_t frames, int chunk_len = 0) const {
    AttentionBias<T> b = chunk_len > 0
                             ? chunked_causal_bias<T>(frames, chunk_len)
                             : full_bias<T>(frames);
    if (cfg.use_alibi) b = with_alibi(b, cfg.heads);
    return prepare_bias(b, cfg.heads);
  }

  // v_hat = v_theta(xt, t; f_c, context, e). All inputs time-major.
  Tensor<T> predict_velocity(const Tensor<T>& xt, double t,
                             const Tensor<T>& f_c, const Tensor<T>& context,
                             const Tensor<T>& e,
                             const PreparedBias<T>& bias) const {
    if (xt.shape()[0] != context.shape()[0] ||
        xt.shape()[0] != f_c.shape()[0])
      throw std::invalid_argument(
          "predict_velocity: time axes disagree: xt " + shape_str(xt.shape()) +
          ", context " + shape_str(context.shape()) + ", f_c " +
          shape_str(f_c.shape()));
    Tensor<T> cond = add(e, sinusoidal_time_embed<T>(t, cfg.hidden));
    Tensor<T> x = input_proj(concat<T>({xt, context, f_c}, 1));
    for (const auto& blk : blocks) x = blk(x, cond, bias);
    Tensor<T> m = final_mod(silu(cond));
    Tensor<T> shift = slice(m, 1, 0, cfg.hidden);
    Tensor<T> sc = slice(m, 1, cfg.hidden, cfg.hidden);
    x = add(mul(layernorm(x), add_scalar(sc, 1.0)), shift);
    return head(x);
  }

  // Eq.-5-style guided velocity; the null branch zeroes content and context
  // and swaps in the learned null style embedding.
  Tensor<T> cfg_velocity(const Tensor<T>& xt, double t, const Tensor<T>& f_c,
                         const Tensor<T>& context, const Tensor<T>& e,
                         double alpha, const PreparedBias<T>& bias) const {
    if (alpha < 0.0)
      throw std::invalid_argument("cfg_velocity: alpha must be >= 0");
    NoGradGuard ng;
    Tensor<T> v_c = predict_velocity(xt, t, f_c, context, e, bias);
    if (alpha == 0.0) return v_c;
    Tensor<T> v_null = predict_velocity(
        xt, t, Tensor<T>::zeros(f_c.shape()),
        Tensor<T>::zeros(context.shape()), null_style, bias);
    std::vector<T> out(v_c.numel());
    for (int64_t i = 0; i < v_c.numel(); ++i)
      out[i] = static_cast<T>(double(v_c.value()[i]) +
                              alpha * (double(v_c.value()[i]) -
                                       double(v_null.value()[i])));
    return Tensor<T>::from_data(v_c.shape(), std::move(out));
  }

  // CFM inpainting loss on normalized x1. Gradients flow into this model and
  // (through `e`) into the style encoder; f_c and x1 enter as data.
  Tensor<T> cfm_loss(const Tensor<T>& x1, const Tensor<T>& f_c,
                     const Tensor<T>& e, Rng& rng) const {
    const int64_t frames = x1.shape()[0];
    const double t = rng.uniform();
    Tensor<T> x0 = Tensor<T>::randn(x1.shape(), rng);
    auto [xt, dpsi] = ot_path(x0, x1, t);
    std::vector<uint8_t> m = sample_mask(frames, cfg.mask_lo, cfg.mask_hi, rng);
    return cfm_loss_given_state(xt, dpsi, t, x1, f_c, e, m, rng);
  }

  // Loss core with externally fixed flow state and mask (oracle/test entry).
  Tensor<T> cfm_loss_given_state(const Tensor<T>& xt, const Tensor<T>& dpsi,
                                 double t, const Tensor<T>& x1,
                                 const Tensor<T>& f_c, const Tensor<T>& e,
                                 const std::vector<uint8_t>& mask,
                                 Rng& rng) const {
    const int64_t frames = x1.shape()[0];
    int64_t n_masked = 0;
    for (uint8_t b : mask) n_masked += b;
    if (n_masked == 0)
      throw std::invalid_argument("cfm_loss: mask selects no frames");

    // Unmasked context, then CFG condition dropout.
    std::vector<T> ctx(x1.value());
    for (int64_t tt = 0; tt < frames; ++tt)
      if (mask[tt])
        for (int f = 0; f < cfg.n_mels; ++f) ctx[tt * cfg.n_mels + f] = T(0);
    Tensor<T> context = Tensor<T>::from_data(x1.shape(), std::move(ctx));
    Tensor<T> fc_used = f_c;
    Tensor<T> e_used = e;
    if (rng.uniform() < cfg.p_drop_content)
      fc_used = Tensor<T>::zeros(f_c.shape());
    if (rng.uniform() < cfg.p_drop_context)
      context = Tensor<T>::zeros(context.shape());
    if (rng.uniform() < cfg.p_drop_style) e_used = null_style;

    Tensor<T> vhat = predict_velocity(xt, t, fc_used, context, e_used,
                                      make_bias(frames));
    return masked_velocity_mse(vhat, dpsi, mask);
  }

  // ||m (vhat - target)||^2 / (masked frames * F): mean over masked entries,
  // literally invariant to vhat at unmasked frames.
  Tensor<T> masked_velocity_mse(const Tensor<T>& vhat, const Tensor<T>& target,
                                const std::vector<uint8_t>& mask) const {
    const int64_t frames = vhat.shape()[0];
    int64_t n_masked = 0;
    std::vector<T> mcol(frames);
    for (int64_t tt = 0; tt < frames; ++tt) {
      mcol[tt] = T(mask[tt]);
      n_masked += mask[tt];
    }
    if (n_masked == 0)
      throw std::invalid_argument("cfm_loss: mask selects no frames");
    Tensor<T> mask_col = Tensor<T>::from_data({frames, 1}, std::move(mcol));
    Tensor<T> diff = mul(sub(vhat, detach(target)), mask_col);
    return scale(sum(mul(diff, diff)),
                 1.0 / (double(n_masked) * double(cfg.n_mels)));
  }

  // Euler sampler: nfe uniform steps from t=0, context frames clamped to the
  // reference after every update. Returns the full canvas; masked frames are
  // generated, unmasked frames equal `context`.
  Tensor<T> euler_sample(const Tensor<T>& f_c, const Tensor<T>& context,
                         const Tensor<T>& e, const std::vector<uint8_t>& mask,
                         int nfe, double alpha, Rng& rng,
                         int chunk_len = 0) const {
    if (nfe < 1) throw std::invalid_argument("euler_sample: nfe must be >= 1");
    NoGradGuard ng;
    const int64_t frames = context.shape()[0];
    PreparedBias<T> bias = make_bias(frames, chunk_len);
    Tensor<T> x = Tensor<T>::randn(context.shape(), rng);
    for (int k = 0; k < nfe; ++k) {
      const double t = double(k) / double(nfe);
      Tensor<T> v = cfg_velocity(x, t, f_c, context, e, alpha, bias);
      std::vector<T> xv = x.value();
      const auto& vv = v.value();
      for (int64_t i = 0; i < x.numel(); ++i)
        xv[i] += vv[i] / T(nfe);
      // Clamp the context region to the reference.
      for (int64_t tt = 0; tt < frames; ++tt)
        if (!mask[tt])
          for (int f = 0; f < cfg.n_mels; ++f)
            xv[tt * cfg.n_mels + f] = context.value()[tt * cfg.n_mels + f];
      x = Tensor<T>::from_data(context.shape(), std::move(xv));
    }
    return x;
  }

  // x1 standardization helpers.
  Tensor<T> normalize_mel(const Tensor<T>& mel) const {
    std::vector<T> v(mel.value());
    const int64_t frames = mel.shape()[0];
    for (int64_t t = 0; t < frames; ++t)
      for (int f = 0; f < cfg.n_mels; ++f)
        v[t * cfg.n_mels + f] = static_cast<T>(
            (double(v[t * cfg.n_mels + f]) - mel_mean[f]) / mel_std[f]);
    return Tensor<T>::from_data(mel.shape(), std::move(v));
  }

  Tensor<T> denormalize_mel(const Tensor<T>& mel) const {
    std::vector<T> v(mel.value());
    const int64_t frames = mel.shape()[0];
    for (int64_t t = 0; t < frames; ++t)
      for (int f = 0; f < cfg.n_mels; ++f)
        v[t * cfg.n_mels + f] = static_cast<T>(
            double(v[t * cfg.n_mels + f]) * mel_std[f] + mel_mean[f]);
    return Tensor<T>::from_data(mel.shape(), std::move(v));
  }

  TensorMap to_checkpoint() const {
    TensorMap m = params.to_tensor_map();
    NamedTensor dims;
    dims.shape = {13};
    dims.data = {float(cfg.n_mels),        float(cfg.content_dim),
                 float(cfg.hidden),        float(cfg.blocks),
                 float(cfg.heads),         float(cfg.ffn),
                 float(cfg.mask_lo),       float(cfg.mask_hi),
                 float(cfg.p_drop_content), float(cfg.p_drop_context),
                 float(cfg.p_drop_style),  float(cfg.cfg_alpha),
                 cfg.use_alibi ? 1.0f : 0.0f};
    m["stylizer.meta.dims"] = dims;
    m["stylizer.meta.mel_mean"] = {{int64_t(cfg.n_mels)}, mel_mean};
    m["stylizer.meta.mel_std"] = {{int64_t(cfg.n_mels)}, mel_std};
    return m;
  }

  static Stylizer from_checkpoint(const TensorMap& m, uint64_t seed = 0) {
    auto it = m.find("stylizer.meta.dims");
    if (it == m.end())
      throw std::runtime_error("checkpoint: missing stylizer.meta.dims");
    const auto& d = it->second.data;
    StylizerConfig c;
    c.n_mels = int(d[0]);
    c.content_dim = int(d[1]);
    c.hidden = int(d[2]);
    c.blocks = int(d[3]);
    c.heads = int(d[4]);
    c.ffn = int(d[5]);
    c.mask_lo = d[6];
    c.mask_hi = d[7];
    c.p_drop_content = d[8];
    c.p_drop_context = d[9];
    c.p_drop_style = d[10];
    c.cfg_alpha = d[11];
    c.use_alibi = d[12] != 0.0f;
    Stylizer out(c, seed);
    out.params.load_tensor_map(m);
    const auto& mm = m.at("stylizer.meta.mel_mean").data;
    const auto& ms = m.at("stylizer.meta.mel_std").data;
    out.mel_mean.assign(mm.begin(), mm.end());
    out.mel_std.assign(ms.begin(), ms.end());
    return out;
  }
};

// ---------------------------------------------------------------------------
// Offline conversion: concatenate target and source content features along
// time, condition on the target's mel and style embedding, and generate the
// source region. Output frame count always equals the source frame count.

struct ConvertOptions {
  int nfe = 16;
  double alpha = 2.0;
  uint64_t seed = 0;
  EncodeMode destylizer_mode = EncodeMode::kOffline;
  int destylizer_chunk = 0;
};

template <typename T>
MelSpectrogram convert(const MelSpectrogram& source_mel,
                       const MelSpectrogram& target_mel,
                       const Stylizer<T>& stylizer,
                       const Destylizer<T>& destylizer,
                       const StyleEncoder<T>& style_enc,
                       const ConvertOptions& opts = {}) {
  if (source_mel.frames < 1 || target_mel.frames < 1)
    throw std::invalid_argument("convert: empty utterance");
  NoGradGuard ng;
  Tensor<T> src = mel_to_tensor<T>(source_mel);
  Tensor<T> tgt = mel_to_tensor<T>(target_mel);
  const int64_t ts = src.shape()[0], tt = tgt.shape()[0];

  Tensor<T> fc_t = destylizer.encode_content(tgt, opts.destylizer_mode,
                                             opts.destylizer_chunk);
  Tensor<T> fc_s = destylizer.encode_content(src, opts.destylizer_mode,
                                             opts.destylizer_chunk);
  Tensor<T> f_c = concat<T>({fc_t, fc_s}, 0);

  Tensor<T> tgt_norm = stylizer.normalize_mel(tgt);
  Tensor<T> e = style_enc(tgt_norm);
  Tensor<T> context =
      concat<T>({tgt_norm, Tensor<T>::zeros({ts, int64_t(source_mel.n_mels)})}, 0);
  std::vector<uint8_t> mask(tt + ts, 0);
  for (int64_t i = tt; i < tt + ts; ++i) mask[i] = 1;

  Rng rng = Rng(opts.seed).fork(0);
  Tensor<T> canvas = stylizer.euler_sample(f_c, context, e, mask, opts.nfe,
                                           opts.alpha, rng);
  Tensor<T> out = stylizer.denormalize_mel(slice(canvas, 0, tt, ts));

  MelSpectrogram m;
  m.n_mels = source_mel.n_mels;
  m.frames = int(ts);
  m.frame_rate = source_mel.frame_rate;
  m.data.resize(int64_t(m.n_mels) * m.frames);
  for (int t = 0; t < m.frames; ++t)
    for (int f = 0; f < m.n_mels; ++f) m.at(f, t) = float(out.at(t, f));
  return m;
}

}  // namespace stylestream
