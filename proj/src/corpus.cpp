// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0

#include "stylestream/corpus.hpp"

#include <cmath>
#include <stdexcept>

#include "stylestream/charset.hpp"

namespace stylestream {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Symbol s -> two partial ratios; the (low, high) pair is unique per symbol
// and untouched by style transforms.
constexpr double kLowRatio[4] = {3.0, 4.0, 5.0, 6.3};
constexpr double kHighRatio[4] = {8.0, 10.1, 12.7, 16.0};

const StyleRecipe kStyles[kNumStyles] = {
    // f0      tilt   attack  trem_hz  trem_depth
    {110.0, -0.80, 5.0, 0.0, 0.0},
    {135.0, -0.40, 40.0, 6.0, 0.5},
    {165.0, 0.00, 10.0, 3.0, 0.3},
    {200.0, 0.30, 25.0, 0.0, 0.0},
    {245.0, 0.60, 60.0, 8.0, 0.4},
    {300.0, -0.20, 15.0, 12.0, 0.6},
};

double partial_gain(double freq_hz, double tilt) {
  return std::pow(freq_hz / 1000.0, tilt);
}

}  // namespace

const StyleRecipe& style_recipe(int style_id) {
  if (style_id < 0 || style_id >= kNumStyles)
    throw std::invalid_argument("corpus: style id out of range");
  return kStyles[style_id];
}

SyntheticUtterance render_utterance(uint64_t seed, const CorpusConfig& cfg) {
  Rng rng(seed);
  SyntheticUtterance u;
  u.seed = seed;
  u.style_id = int(rng.uniform_int(0, kNumStyles - 1));
  const StyleRecipe& st = kStyles[u.style_id];

  // Per-utterance jitter plays the role of within-style speaker variation.
  const double f0 = st.f0_hz * rng.uniform(0.94, 1.06);
  const double tilt = st.tilt + rng.uniform(-0.1, 0.1);
  const double trem_phase = rng.uniform(0.0, 2.0 * kPi);

  const int n_sym = int(rng.uniform_int(cfg.min_symbols, cfg.max_symbols));
  const int sr = cfg.sample_rate;
  u.waveform.sample_rate = sr;
  auto& x = u.waveform.samples;

  // Lead-in silence so the first symbol has analysis context.
  x.assign(size_t(0.03 * sr), 0.0f);

  for (int i = 0; i < n_sym; ++i) {
    const int sym = int(rng.uniform_int(0, kNumSymbols - 1));
    u.transcript.push_back(char('a' + sym));
    const double unit_ms = rng.uniform(cfg.min_unit_ms, cfg.max_unit_ms);
    const double gap_ms = rng.uniform(cfg.min_gap_ms, cfg.max_gap_ms);
    const int unit_n = int(unit_ms * sr / 1000.0);
    const int gap_n = int(gap_ms * sr / 1000.0);

    const double f1 = f0 * kLowRatio[sym % 4];
    const double f2 = f0 * kHighRatio[sym / 4];
    const double a1 = 0.55 * partial_gain(f1, tilt);
    const double a2 = 0.40 * partial_gain(f2, tilt);
    const double attack_n = st.attack_ms * sr / 1000.0;
    const double release_n = 0.25 * unit_n;

    const size_t start = x.size();
    const int start_frame = int(start) / 320;
    x.resize(start + unit_n + gap_n, 0.0f);
    for (int n = 0; n < unit_n; ++n) {
      double env = 1.0;
      if (n < attack_n) env = double(n) / attack_n;
      if (n > unit_n - release_n)
        env *= double(unit_n - n) / release_n;
      if (st.tremolo_hz > 0.0)
        env *= 1.0 - st.tremolo_depth * 0.5 *
                         (1.0 + std::sin(2.0 * kPi * st.tremolo_hz *
                                             (double(start) + n) / sr +
                                         trem_phase));
      const double ph = double(n) / sr;
      const double v = env * (a1 * std::sin(2.0 * kPi * f1 * ph) +
                              a2 * std::sin(2.0 * kPi * f2 * ph));
      x[start + n] = float(v);
    }
    const int end_frame = int(start + unit_n) / 320;
    u.symbol_frames.emplace_back(start_frame, std::max(end_frame, start_frame + 1));
  }
  // Tail padding so the last frames have full windows.
  x.resize(x.size() + size_t(0.03 * sr), 0.0f);

  // Peak normalize to 0.7.
  float peak = 0.0f;
  for (float v : x) peak = std::max(peak, std::abs(v));
  if (peak > 0.0f)
    for (auto& v : x) v *= 0.7f / peak;
  return u;
}

Corpus gen_corpus(int n_utts, uint64_t seed, const CorpusConfig& cfg) {
  if (n_utts < 1) throw std::invalid_argument("gen_corpus: n_utts must be >= 1");
  Corpus c;
  c.config = cfg;
  Rng root(seed);
  c.utts.reserve(n_utts);
  for (int i = 0; i < n_utts; ++i)
    c.utts.push_back(render_utterance(root.fork(uint64_t(i)).seed(), cfg));
  return c;
}

}  // namespace stylestream
