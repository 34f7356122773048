// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0
//
// Content extractor: causal conv front end, ALiBi conformer stack, FSQ
// bottleneck, and a seq2seq character decoder trained end-to-end with
// cross-entropy. The exported content representation f_c is the continuous
// [T, D_c] feature immediately before the bottleneck's down-projection,
// layer-normalized; the decoder consumes only the post-FSQ path.
//
// Offline mode uses full (bidirectional) attention; streaming mode applies a
// chunked-causal mask. Convolutions are causal in both modes, so the two
// modes coincide exactly when chunk_len covers the whole utterance.

#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "stylestream/charset.hpp"
#include "stylestream/fsq.hpp"
#include "stylestream/mel.hpp"
#include "stylestream/nn.hpp"

namespace stylestream {

struct DestylizerConfig {
  int n_mels = 100;
  int hidden = 128;
  int content_dim = 64;  // D_c
  int enc_blocks = 4;
  int heads = 4;
  int ffn = 256;
  int conv_kernel = 7;
  int front_kernel = 3;
  int dec_layers = 2;
  int dec_ffn = 256;
  int vocab = kVocabSize;
  std::vector<int> fsq_levels = {5, 3, 3};
  // Per-utterance mean normalization of the input mel (chunk-causal in
  // streaming mode); removes static per-utterance gain/tilt offsets.
  bool input_cmn = true;
};

enum class EncodeMode { kOffline, kStreaming };

template <typename T>
Tensor<T> mel_to_tensor(const MelSpectrogram& m) {
  std::vector<T> d(int64_t(m.frames) * m.n_mels);
  for (int t = 0; t < m.frames; ++t)
    for (int f = 0; f < m.n_mels; ++f)
      d[int64_t(t) * m.n_mels + f] = static_cast<T>(m.at(f, t));
  return Tensor<T>::from_data({m.frames, m.n_mels}, std::move(d));
}

template <typename T>
struct Destylizer {
  DestylizerConfig cfg;
  ParamStore<T> params;

  CausalConv<T> fe_conv1, fe_conv2;
  Linear<T> fe_proj;
  std::vector<ConformerBlock<T>> encoder;
  Linear<T> content_proj;
  FsqBottleneck<T> bottleneck;
  Linear<T> memory_proj;
  Tensor<T> tok_embed;
  std::vector<DecoderBlock<T>> decoder;
  LayerNormP<T> dec_ln;
  Linear<T> head;

  // Input standardization stats (set from training data; identity before).
  std::vector<float> mel_mean, mel_std;

  Destylizer() = default;
  Destylizer(const DestylizerConfig& c, uint64_t seed) : cfg(c) {
    Rng rng(seed);
    const int64_t d = cfg.hidden;
    fe_conv1 = CausalConv<T>(params, "destylizer.fe.conv1", cfg.front_kernel,
                             cfg.n_mels, d, rng);
    fe_conv2 = CausalConv<T>(params, "destylizer.fe.conv2", cfg.front_kernel,
                             d, d, rng);
    fe_proj = Linear<T>(params, "destylizer.fe.proj", d, d, rng);
    encoder.reserve(cfg.enc_blocks);
    for (int i = 0; i < cfg.enc_blocks; ++i)
      encoder.emplace_back(params, "destylizer.enc" + std::to_string(i), d,
                           cfg.heads, cfg.ffn, cfg.conv_kernel, rng);
    content_proj =
        Linear<T>(params, "destylizer.content_proj", d, cfg.content_dim, rng);
    bottleneck = FsqBottleneck<T>(params, "destylizer.fsq", cfg.content_dim,
                                  FsqLevels(cfg.fsq_levels), rng);
    memory_proj =
        Linear<T>(params, "destylizer.memory_proj", cfg.content_dim, d, rng);
    tok_embed = params.add(
        "destylizer.tok_embed",
        Tensor<T>::randn({cfg.vocab, d}, rng, T(0.02), true));
    decoder.reserve(cfg.dec_layers);
    for (int i = 0; i < cfg.dec_layers; ++i)
      decoder.emplace_back(params, "destylizer.dec" + std::to_string(i), d,
                           cfg.heads, cfg.dec_ffn, rng);
    dec_ln = LayerNormP<T>(params, "destylizer.dec_ln", d);
    head = Linear<T>(params, "destylizer.head", d, cfg.vocab, rng);
    mel_mean.assign(cfg.n_mels, 0.0f);
    mel_std.assign(cfg.n_mels, 1.0f);
  }

  // Standardizes a raw [T, F] log-mel block. CMN means are chunk-synchronous
  // in streaming mode (frames in chunk c see chunks <= c only), full-
  // utterance in offline mode, so chunk_len == T degenerates to offline.
  Tensor<T> normalize_input(const Tensor<T>& mel, EncodeMode mode,
                            int chunk_len) const {
    const int64_t frames = mel.shape()[0], nb = mel.shape()[1];
    std::vector<T> out(mel.value());
    if (cfg.input_cmn) {
      const int64_t len =
          mode == EncodeMode::kStreaming ? chunk_len : frames;
      std::vector<double> run_sum(nb, 0.0);
      std::vector<double> chunk_mean(nb, 0.0);
      // Offline: one chunk covering everything.
      for (int64_t c0 = 0; c0 < frames; c0 += len) {
        const int64_t c1 = std::min(frames, c0 + len);
        for (int64_t t = c0; t < c1; ++t)
          for (int64_t f = 0; f < nb; ++f)
            run_sum[f] += double(out[t * nb + f]);
        for (int64_t f = 0; f < nb; ++f) chunk_mean[f] = run_sum[f] / double(c1);
        for (int64_t t = c0; t < c1; ++t)
          for (int64_t f = 0; f < nb; ++f)
            out[t * nb + f] = static_cast<T>(
                (double(out[t * nb + f]) - chunk_mean[f]) / mel_std[f]);
      }
    } else {
      for (int64_t t = 0; t < frames; ++t)
        for (int64_t f = 0; f < nb; ++f)
          out[t * nb + f] = static_cast<T>(
              (double(out[t * nb + f]) - mel_mean[f]) / mel_std[f]);
    }
    return Tensor<T>::from_data(mel.shape(), std::move(out));
  }

  // mel: [T, n_mels] time-major log-mel. Returns f_c [T, content_dim].
  Tensor<T> encode_content(const Tensor<T>& mel, EncodeMode mode,
                           int chunk_len = 0) const {
    if (mel.rank() != 2 || mel.shape()[0] < 1)
      throw std::invalid_argument("encode_content: empty input");
    if (mel.shape()[1] != cfg.n_mels)
      throw std::invalid_argument("encode_content: expected " +
                                  std::to_string(cfg.n_mels) + " mel bins");
    if (mode == EncodeMode::kStreaming && chunk_len < 1)
      throw std::invalid_argument(
          "encode_content: streaming mode needs chunk_len >= 1");
    const int64_t frames = mel.shape()[0];
    Tensor<T> x = normalize_input(mel, mode, chunk_len);
    Tensor<T> h = silu(fe_conv1(x));
    h = silu(fe_conv2(h));
    h = fe_proj(h);
    AttentionBias<T> bias =
        mode == EncodeMode::kStreaming
            ? chunked_causal_bias<T>(frames, chunk_len)
            : full_bias<T>(frames);
    PreparedBias<T> pb = prepare_bias(with_alibi(bias, cfg.heads), cfg.heads);
    for (const auto& block : encoder) h = block(h, pb);
    return layernorm(content_proj(h));
  }

  // Decoder over teacher-forced input tokens given content memory.
  Tensor<T> decode_logits(const Tensor<T>& f_post,
                          const std::vector<int32_t>& in_tokens) const {
    const int64_t mem_t = f_post.shape()[0];
    Tensor<T> memory =
        add(memory_proj(f_post), sinusoidal_positions<T>(mem_t, cfg.hidden));
    const int64_t dec_t = int64_t(in_tokens.size());
    Tensor<T> x = embed_lookup(tok_embed, in_tokens);
    PreparedBias<T> self_bias = prepare_bias(
        with_alibi(causal_bias<T>(dec_t), cfg.heads), cfg.heads);
    PreparedBias<T> cross_bias = full_cross_bias<T>(dec_t, mem_t);
    for (const auto& block : decoder)
      x = block(x, memory, self_bias, cross_bias);
    return head(dec_ln(x));
  }

  // Teacher-forced sequence cross-entropy, mean over non-PAD targets.
  // `hard_quantize` false routes the bottleneck through the tanh-bounded
  // path without rounding; gradient checks use it since the straight-through
  // backward is identical to that path's backward.
  Tensor<T> asr_loss(const Tensor<T>& mel, const std::vector<int32_t>& target,
                     EncodeMode mode = EncodeMode::kOffline, int chunk_len = 0,
                     bool hard_quantize = true) const {
    if (target.empty())
      throw std::invalid_argument("asr_loss: target length must be >= 1");
    for (int32_t t : target)
      if (t < kSymbolOffset || t >= cfg.vocab)
        throw std::invalid_argument("asr_loss: target token " +
                                    std::to_string(t) + " outside charset");
    Tensor<T> f_c = encode_content(mel, mode, chunk_len);
    auto bn = bottleneck.forward(f_c, hard_quantize);
    std::vector<int32_t> in_tokens = {kBos};
    in_tokens.insert(in_tokens.end(), target.begin(), target.end());
    std::vector<int32_t> out_tokens(target.begin(), target.end());
    out_tokens.push_back(kEos);
    Tensor<T> logits = decode_logits(bn.f_post, in_tokens);
    return cross_entropy(logits, out_tokens, kPad);
  }

  // Autoregressive argmax decode until EOS or max_len symbols. All-silence
  // input may legitimately decode to an empty transcript.
  std::string greedy_decode(const Tensor<T>& mel, int max_len = 32,
                            EncodeMode mode = EncodeMode::kOffline,
                            int chunk_len = 0) const {
    NoGradGuard ng;
    Tensor<T> f_c = encode_content(mel, mode, chunk_len);
    auto bn = bottleneck.forward(f_c);
    std::vector<int32_t> toks = {kBos};
    std::vector<int32_t> out;
    for (int i = 0; i < max_len; ++i) {
      Tensor<T> logits = decode_logits(bn.f_post, toks);
      const int64_t last = logits.shape()[0] - 1;
      int32_t best = 0;
      T best_v = logits.at(last, 0);
      for (int32_t v = 1; v < cfg.vocab; ++v)
        if (logits.at(last, v) > best_v) {
          best_v = logits.at(last, v);
          best = v;
        }
      if (best == kEos) break;
      toks.push_back(best);
      out.push_back(best);
    }
    return transcript_from_tokens(out);
  }

  TensorMap to_checkpoint() const {
    TensorMap m = params.to_tensor_map();
    NamedTensor dims;
    dims.shape = {12};
    dims.data = {float(cfg.n_mels),      float(cfg.hidden),
                 float(cfg.content_dim), float(cfg.enc_blocks),
                 float(cfg.heads),       float(cfg.ffn),
                 float(cfg.conv_kernel), float(cfg.front_kernel),
                 float(cfg.dec_layers),  float(cfg.dec_ffn),
                 float(cfg.vocab),       cfg.input_cmn ? 1.0f : 0.0f};
    m["destylizer.meta.dims"] = dims;
    NamedTensor fsq;
    fsq.shape = {int64_t(cfg.fsq_levels.size())};
    for (int l : cfg.fsq_levels) fsq.data.push_back(float(l));
    m["destylizer.meta.fsq"] = fsq;
    m["destylizer.meta.mel_mean"] = {{int64_t(cfg.n_mels)}, mel_mean};
    m["destylizer.meta.mel_std"] = {{int64_t(cfg.n_mels)}, mel_std};
    return m;
  }

  static Destylizer from_checkpoint(const TensorMap& m, uint64_t seed = 0) {
    auto it = m.find("destylizer.meta.dims");
    if (it == m.end())
      throw std::runtime_error("checkpoint: missing destylizer.meta.dims");
    const auto& d = it->second.data;
    DestylizerConfig c;
    c.n_mels = int(d[0]);
    c.hidden = int(d[1]);
    c.content_dim = int(d[2]);
    c.enc_blocks = int(d[3]);
    c.heads = int(d[4]);
    c.ffn = int(d[5]);
    c.conv_kernel = int(d[6]);
    c.front_kernel = int(d[7]);
    c.dec_layers = int(d[8]);
    c.dec_ffn = int(d[9]);
    c.vocab = int(d[10]);
    c.input_cmn = d[11] != 0.0f;
    c.fsq_levels.clear();
    for (float v : m.at("destylizer.meta.fsq").data)
      c.fsq_levels.push_back(int(v));
    Destylizer out(c, seed);
    out.params.load_tensor_map(m);
    const auto& mm = m.at("destylizer.meta.mel_mean").data;
    const auto& ms = m.at("destylizer.meta.mel_std").data;
    out.mel_mean.assign(mm.begin(), mm.end());
    out.mel_std.assign(ms.begin(), ms.end());
    return out;
  }
};

// MSE distillation of the chunked-causal student against the offline
// teacher's content features, frame-aligned. The teacher is frozen.
template <typename T>
Tensor<T> distill_streaming_loss(const Destylizer<T>& teacher,
                                 const Destylizer<T>& student,
                                 const Tensor<T>& mel, int chunk_len) {
  Tensor<T> teacher_fc;
  {
    NoGradGuard ng;
    teacher_fc = teacher.encode_content(mel, EncodeMode::kOffline);
  }
  Tensor<T> student_fc =
      student.encode_content(mel, EncodeMode::kStreaming, chunk_len);
  if (student_fc.shape() != teacher_fc.shape())
    throw std::invalid_argument("distill: frame-count mismatch");
  return mse(student_fc, teacher_fc);
}

}  // namespace stylestream
