// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0
//
// End-to-end training and evaluation over the synthetic corpus: featurize,
// train the Destylizer (ASR), distill its streaming variant, train the
// Stylizer + style encoder (CFM), and score conversions.

#pragma once

#include <functional>
#include <string>
#include <vector>

#include "stylestream/corpus.hpp"
#include "stylestream/destylizer.hpp"
#include "stylestream/probe.hpp"
#include "stylestream/stylizer.hpp"
#include "stylestream/train.hpp"

namespace stylestream {

// Corpus rendered to log-mels with tokens, labels, and a train/held-out
// split (every 5th utterance held out; jitter is per-utterance, so held-out
// utterances carry unseen style realizations).
struct FeaturizedCorpus {
  std::vector<Tensor<float>> mels;  // [T, F] time-major log-mel
  std::vector<std::vector<int32_t>> tokens;
  std::vector<std::string> transcripts;
  std::vector<int> style_ids;
  std::vector<std::vector<std::pair<int, int>>> symbol_frames;
  std::vector<int> train_idx, heldout_idx;
  std::vector<float> mel_mean, mel_std;  // per-bin, over the train split
  std::vector<float> cmn_std;            // per-bin std after per-utt mean removal
  int n_mels = 100;
};

FeaturizedCorpus featurize(const Corpus& corpus, const MelConfig& mel_cfg = {});

struct TrainConfig {
  int steps = 6000;
  double peak_lr = 1e-3;
  int warmup = 300;
  double weight_decay = 0.01;
  int grad_accum = 1;
  uint64_t seed = 1;
  int log_every = 0;  // 0 = silent
  std::function<void(int, double)> on_log;  // (step, smoothed loss)
};

// ASR training of the Destylizer. Returns the trained model with input
// statistics set from the corpus.
Destylizer<float> train_destylizer(const FeaturizedCorpus& fc,
                                   const DestylizerConfig& cfg,
                                   const TrainConfig& tc);

// MSE distillation of a chunked-causal student from an offline teacher.
Destylizer<float> distill_destylizer(const Destylizer<float>& teacher,
                                     const FeaturizedCorpus& fc, int chunk_len,
                                     const TrainConfig& tc);

struct StylizerBundle {
  Stylizer<float> stylizer;
  StyleEncoder<float> style_enc;

  void save(const std::string& path) const;
  static StylizerBundle load(const std::string& path);
};

// Joint CFM training of the Stylizer and style encoder on top of a frozen
// Destylizer's content features.
StylizerBundle train_stylizer(const FeaturizedCorpus& fc,
                              const Destylizer<float>& destylizer,
                              const StylizerConfig& cfg, const TrainConfig& tc);

// Mean (1 - normalized edit distance) between greedy decodes and references.
double token_accuracy(const Destylizer<float>& model,
                      const FeaturizedCorpus& fc,
                      const std::vector<int>& idx);
double edit_distance(const std::string& a, const std::string& b);

// Content features for every utterance (offline mode), cached for probes
// and Stylizer training.
std::vector<Tensor<float>> content_features(const Destylizer<float>& model,
                                            const FeaturizedCorpus& fc,
                                            EncodeMode mode = EncodeMode::kOffline,
                                            int chunk_len = 0);

struct ConversionMetrics {
  double content_accuracy = 0.0;   // re-recognition vs source transcript
  double style_accuracy = 0.0;     // mel style probe says target style
  double embed_cosine = 0.0;       // style-embedding cosine to target
  int pairs = 0;
};

// Style-crossed conversion evaluation on held-out utterances. The style
// probe must have been trained on raw mel segments.
ConversionMetrics eval_conversion(const FeaturizedCorpus& fc,
                                  const Destylizer<float>& destylizer,
                                  const StylizerBundle& bundle,
                                  const Probe& mel_style_probe, int n_pairs,
                                  uint64_t seed, int nfe = 16,
                                  double alpha = 2.0,
                                  bool identity_pairs = false);

MelSpectrogram tensor_to_mel(const Tensor<float>& tm);

}  // namespace stylestream
