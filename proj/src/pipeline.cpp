// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0

#include "stylestream/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

namespace stylestream {

FeaturizedCorpus featurize(const Corpus& corpus, const MelConfig& mel_cfg) {
  FeaturizedCorpus fc;
  fc.n_mels = mel_cfg.n_mels;
  const size_t n = corpus.utts.size();
  fc.mels.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const auto& u = corpus.utts[i];
    MelSpectrogram m = log_mel(u.waveform, mel_cfg);
    fc.mels.push_back(mel_to_tensor<float>(m));
    fc.tokens.push_back(tokens_from_transcript(u.transcript));
    fc.transcripts.push_back(u.transcript);
    fc.style_ids.push_back(u.style_id);
    // Clip symbol spans to the emitted frame count.
    std::vector<std::pair<int, int>> spans;
    for (auto [s, e] : u.symbol_frames) {
      s = std::min(s, m.frames - 1);
      e = std::min(e, m.frames);
      if (e > s) spans.emplace_back(s, e);
    }
    fc.symbol_frames.push_back(std::move(spans));
    if (i % 5 == 4)
      fc.heldout_idx.push_back(int(i));
    else
      fc.train_idx.push_back(int(i));
  }

  // Per-bin stats over the train split: raw mean/std and the std after
  // per-utterance mean removal (the CMN path's scale).
  const int nb = fc.n_mels;
  std::vector<double> sum(nb, 0), sum2(nb, 0), cmn2(nb, 0);
  int64_t frames = 0;
  for (int i : fc.train_idx) {
    const auto& m = fc.mels[i];
    const int64_t t_count = m.shape()[0];
    std::vector<double> umean(nb, 0);
    for (int64_t t = 0; t < t_count; ++t)
      for (int f = 0; f < nb; ++f) umean[f] += m.at(t, f);
    for (int f = 0; f < nb; ++f) umean[f] /= double(t_count);
    for (int64_t t = 0; t < t_count; ++t)
      for (int f = 0; f < nb; ++f) {
        const double v = m.at(t, f);
        sum[f] += v;
        sum2[f] += v * v;
        const double c = v - umean[f];
        cmn2[f] += c * c;
      }
    frames += t_count;
  }
  fc.mel_mean.resize(nb);
  fc.mel_std.resize(nb);
  fc.cmn_std.resize(nb);
  for (int f = 0; f < nb; ++f) {
    const double mu = sum[f] / double(frames);
    fc.mel_mean[f] = float(mu);
    fc.mel_std[f] =
        float(std::sqrt(std::max(sum2[f] / double(frames) - mu * mu, 1e-6)));
    fc.cmn_std[f] = float(std::sqrt(std::max(cmn2[f] / double(frames), 1e-6)));
  }
  return fc;
}

MelSpectrogram tensor_to_mel(const Tensor<float>& tm) {
  MelSpectrogram m;
  m.frames = int(tm.shape()[0]);
  m.n_mels = int(tm.shape()[1]);
  m.data.resize(int64_t(m.n_mels) * m.frames);
  for (int t = 0; t < m.frames; ++t)
    for (int f = 0; f < m.n_mels; ++f) m.at(f, t) = tm.at(t, f);
  return m;
}

namespace {

// Deterministic shuffled order regenerated each epoch.
std::vector<int> epoch_order(const std::vector<int>& idx, Rng& rng) {
  std::vector<int> order = idx;
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.uniform_int(0, int64_t(i) - 1)]);
  return order;
}

}  // namespace

Destylizer<float> train_destylizer(const FeaturizedCorpus& fc,
                                   const DestylizerConfig& cfg,
                                   const TrainConfig& tc) {
  Destylizer<float> model(cfg, tc.seed);
  model.mel_mean = fc.mel_mean;
  model.mel_std = cfg.input_cmn ? fc.cmn_std : fc.mel_std;

  AdamW<float> opt(model.params.tensors(), tc.peak_lr, tc.weight_decay);
  LrSchedule sched{tc.peak_lr, tc.warmup, tc.steps, 0.1};
  Rng rng(tc.seed ^ 0x5a5a5a5aULL);

  std::vector<int> order;
  size_t cursor = 0;
  double smooth = -1;
  for (int step = 0; step < tc.steps; ++step) {
    double batch_loss = 0;
    for (int acc = 0; acc < tc.grad_accum; ++acc) {
      if (cursor >= order.size()) {
        order = epoch_order(fc.train_idx, rng);
        cursor = 0;
      }
      const int i = order[cursor++];
      auto loss = model.asr_loss(fc.mels[i], fc.tokens[i]);
      if (tc.grad_accum > 1) loss = scale(loss, 1.0 / tc.grad_accum);
      backward(loss);
      batch_loss += double(loss.item()) * (tc.grad_accum > 1 ? tc.grad_accum : 1);
    }
    batch_loss /= tc.grad_accum;
    opt.set_lr(sched.at(step));
    opt.step();
    smooth = smooth < 0 ? batch_loss : 0.98 * smooth + 0.02 * batch_loss;
    if (tc.log_every > 0 && (step + 1) % tc.log_every == 0) {
      if (tc.on_log)
        tc.on_log(step + 1, smooth);
      else
        std::fprintf(stderr, "destylizer step %d loss %.4f\n", step + 1, smooth);
    }
  }
  return model;
}

Destylizer<float> distill_destylizer(const Destylizer<float>& teacher,
                                     const FeaturizedCorpus& fc, int chunk_len,
                                     const TrainConfig& tc) {
  // Student starts from the teacher checkpoint.
  Destylizer<float> student =
      Destylizer<float>::from_checkpoint(teacher.to_checkpoint(), tc.seed);
  AdamW<float> opt(student.params.tensors(), tc.peak_lr, tc.weight_decay);
  LrSchedule sched{tc.peak_lr, tc.warmup, tc.steps, 0.1};
  Rng rng(tc.seed ^ 0xd15711ULL);

  std::vector<int> order;
  size_t cursor = 0;
  double smooth = -1;
  for (int step = 0; step < tc.steps; ++step) {
    for (int acc = 0; acc < tc.grad_accum; ++acc) {
      if (cursor >= order.size()) {
        order = epoch_order(fc.train_idx, rng);
        cursor = 0;
      }
      const int i = order[cursor++];
      auto loss = distill_streaming_loss(teacher, student, fc.mels[i], chunk_len);
      if (tc.grad_accum > 1) loss = scale(loss, 1.0 / tc.grad_accum);
      backward(loss);
      smooth = smooth < 0 ? double(loss.item()) : 0.98 * smooth + 0.02 * double(loss.item());
    }
    opt.set_lr(sched.at(step));
    opt.step();
    if (tc.log_every > 0 && (step + 1) % tc.log_every == 0) {
      if (tc.on_log)
        tc.on_log(step + 1, smooth);
      else
        std::fprintf(stderr, "distill step %d loss %.6f\n", step + 1, smooth);
    }
  }
  return student;
}

void StylizerBundle::save(const std::string& path) const {
  TensorMap m = stylizer.to_checkpoint();
  TensorMap se = style_enc.params.to_tensor_map();
  m.insert(se.begin(), se.end());
  NamedTensor dims;
  dims.shape = {6};
  dims.data = {float(style_enc.cfg.n_mels),     float(style_enc.cfg.dim),
               float(style_enc.cfg.layers),     float(style_enc.cfg.tdnn_kernel),
               float(style_enc.cfg.score_hidden), float(style_enc.cfg.out_dim)};
  m["style_enc.meta.dims"] = dims;
  save_checkpoint(path, m);
}

StylizerBundle StylizerBundle::load(const std::string& path) {
  TensorMap m = load_checkpoint(path);
  StylizerBundle b;
  b.stylizer = Stylizer<float>::from_checkpoint(m);
  const auto& d = m.at("style_enc.meta.dims").data;
  StyleEncoderConfig sc;
  sc.n_mels = int(d[0]);
  sc.dim = int(d[1]);
  sc.layers = int(d[2]);
  sc.tdnn_kernel = int(d[3]);
  sc.score_hidden = int(d[4]);
  sc.out_dim = int(d[5]);
  b.style_enc = StyleEncoder<float>(sc, 0);
  b.style_enc.params.load_tensor_map(m);
  return b;
}

std::vector<Tensor<float>> content_features(const Destylizer<float>& model,
                                            const FeaturizedCorpus& fc,
                                            EncodeMode mode, int chunk_len) {
  NoGradGuard ng;
  std::vector<Tensor<float>> out;
  out.reserve(fc.mels.size());
  for (const auto& mel : fc.mels)
    out.push_back(model.encode_content(mel, mode, chunk_len));
  return out;
}

StylizerBundle train_stylizer(const FeaturizedCorpus& fc,
                              const Destylizer<float>& destylizer,
                              const StylizerConfig& cfg, const TrainConfig& tc) {
  StylizerBundle b;
  b.stylizer = Stylizer<float>(cfg, tc.seed);
  b.stylizer.mel_mean = fc.mel_mean;
  b.stylizer.mel_std = fc.mel_std;
  StyleEncoderConfig sec;
  sec.n_mels = cfg.n_mels;
  sec.out_dim = cfg.hidden;
  b.style_enc = StyleEncoder<float>(sec, tc.seed ^ 0xeULL);

  // The Destylizer is frozen: cache its features once.
  std::vector<Tensor<float>> fcs = content_features(destylizer, fc);
  std::vector<Tensor<float>> x1s(fc.mels.size());
  for (size_t i = 0; i < fc.mels.size(); ++i)
    x1s[i] = b.stylizer.normalize_mel(fc.mels[i]);

  std::vector<Tensor<float>> all_params = b.stylizer.params.tensors();
  for (auto& t : b.style_enc.params.tensors()) all_params.push_back(t);
  AdamW<float> opt(all_params, tc.peak_lr, tc.weight_decay);
  LrSchedule sched{tc.peak_lr, tc.warmup, tc.steps, 0.1};
  Rng rng(tc.seed ^ 0x517155ULL);

  std::vector<int> order;
  size_t cursor = 0;
  double smooth = -1;
  for (int step = 0; step < tc.steps; ++step) {
    for (int acc = 0; acc < tc.grad_accum; ++acc) {
      if (cursor >= order.size()) {
        order = epoch_order(fc.train_idx, rng);
        cursor = 0;
      }
      const int i = order[cursor++];
      Tensor<float> e = b.style_enc(x1s[i]);
      auto loss = b.stylizer.cfm_loss(x1s[i], fcs[i], e, rng);
      if (tc.grad_accum > 1) loss = scale(loss, 1.0 / tc.grad_accum);
      backward(loss);
      smooth = smooth < 0 ? double(loss.item())
                          : 0.98 * smooth + 0.02 * double(loss.item());
    }
    opt.set_lr(sched.at(step));
    opt.step();
    if (tc.log_every > 0 && (step + 1) % tc.log_every == 0) {
      if (tc.on_log)
        tc.on_log(step + 1, smooth);
      else
        std::fprintf(stderr, "stylizer step %d loss %.4f\n", step + 1, smooth);
    }
  }
  return b;
}

double edit_distance(const std::string& a, const std::string& b) {
  const size_t n = a.size(), m = b.size();
  std::vector<size_t> prev(m + 1), cur(m + 1);
  std::iota(prev.begin(), prev.end(), size_t(0));
  for (size_t i = 1; i <= n; ++i) {
    cur[0] = i;
    for (size_t j = 1; j <= m; ++j) {
      const size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return double(prev[m]);
}

double token_accuracy(const Destylizer<float>& model,
                      const FeaturizedCorpus& fc, const std::vector<int>& idx) {
  NoGradGuard ng;
  double acc = 0;
  for (int i : idx) {
    const std::string hyp =
        model.greedy_decode(fc.mels[i], int(fc.transcripts[i].size()) + 8);
    const double d = edit_distance(hyp, fc.transcripts[i]);
    acc += std::max(0.0, 1.0 - d / double(fc.transcripts[i].size()));
  }
  return idx.empty() ? 0.0 : acc / double(idx.size());
}

ConversionMetrics eval_conversion(const FeaturizedCorpus& fc,
                                  const Destylizer<float>& destylizer,
                                  const StylizerBundle& bundle,
                                  const Probe& mel_style_probe, int n_pairs,
                                  uint64_t seed, int nfe, double alpha,
                                  bool identity_pairs) {
  NoGradGuard ng;
  Rng rng(seed);
  ConversionMetrics out;
  const auto& pool = fc.heldout_idx;
  for (int p = 0; p < n_pairs; ++p) {
    int src = pool[rng.uniform_int(0, int64_t(pool.size()) - 1)];
    int tgt = pool[rng.uniform_int(0, int64_t(pool.size()) - 1)];
    // Style-crossed by construction (identity mode demands equal styles).
    int guard = 0;
    while ((identity_pairs
                ? fc.style_ids[tgt] != fc.style_ids[src]
                : fc.style_ids[tgt] == fc.style_ids[src]) &&
           guard++ < 1000)
      tgt = pool[rng.uniform_int(0, int64_t(pool.size()) - 1)];

    ConvertOptions opts;
    opts.nfe = nfe;
    opts.alpha = alpha;
    opts.seed = rng.next_u64();
    MelSpectrogram gen = convert(tensor_to_mel(fc.mels[src]),
                                 tensor_to_mel(fc.mels[tgt]),
                                 bundle.stylizer, destylizer,
                                 bundle.style_enc, opts);
    Tensor<float> gen_t = mel_to_tensor<float>(gen);

    // Content: re-recognition of the generated mel.
    const std::string hyp = destylizer.greedy_decode(
        gen_t, int(fc.transcripts[src].size()) + 8);
    out.content_accuracy +=
        std::max(0.0, 1.0 - edit_distance(hyp, fc.transcripts[src]) /
                                double(fc.transcripts[src].size()));

    // Style: mel probe prediction matches the target style.
    out.style_accuracy +=
        mel_style_probe.predict(pool_segment(gen_t)) == fc.style_ids[tgt];

    // Style-embedding cosine between generated and target.
    Tensor<float> e_gen = bundle.style_enc(bundle.stylizer.normalize_mel(gen_t));
    Tensor<float> e_tgt =
        bundle.style_enc(bundle.stylizer.normalize_mel(fc.mels[tgt]));
    double dot = 0, na = 0, nb = 0;
    for (int64_t i = 0; i < e_gen.numel(); ++i) {
      dot += double(e_gen.value()[i]) * e_tgt.value()[i];
      na += double(e_gen.value()[i]) * e_gen.value()[i];
      nb += double(e_tgt.value()[i]) * e_tgt.value()[i];
    }
    out.embed_cosine += dot / (std::sqrt(na * nb) + 1e-12);
    ++out.pairs;
  }
  if (out.pairs > 0) {
    out.content_accuracy /= out.pairs;
    out.style_accuracy /= out.pairs;
    out.embed_cosine /= out.pairs;
  }
  return out;
}

}  // namespace stylestream
