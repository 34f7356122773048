// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0
//
// Synthetic corpus with known content/style ground truth. Content is a
// sequence over a 16-symbol alphabet; each symbol renders as a two-tone
// complex whose frequency *ratios* identify the symbol. Style changes the
// fundamental, a spectral tilt, and the amplitude envelope, never the
// ratios, so symbol identity is invariant across styles by construction.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stylestream/mel.hpp"
#include "stylestream/rng.hpp"
#include "stylestream/wav.hpp"

namespace stylestream {

inline constexpr int kNumStyles = 6;

// Fixed per-style rendering recipe (before per-utterance jitter).
struct StyleRecipe {
  double f0_hz;         // fundamental of the harmonic grid
  double tilt;          // per-partial gain (f/1kHz)^tilt
  double attack_ms;     // envelope attack
  double tremolo_hz;    // amplitude modulation rate (0 = none)
  double tremolo_depth;
};

const StyleRecipe& style_recipe(int style_id);

struct CorpusConfig {
  int min_symbols = 5;
  int max_symbols = 20;
  double min_unit_ms = 100.0;
  double max_unit_ms = 200.0;
  double min_gap_ms = 20.0;
  double max_gap_ms = 40.0;
  int sample_rate = 16000;
};

struct SyntheticUtterance {
  std::string transcript;  // symbols as 'a'..'p'
  int style_id = 0;
  uint64_t seed = 0;       // per-utterance render seed
  Waveform waveform;
  // Per-symbol [start, end) frame spans at the 50 Hz mel rate, for
  // segment-level content probes.
  std::vector<std::pair<int, int>> symbol_frames;
};

struct Corpus {
  std::vector<SyntheticUtterance> utts;
  CorpusConfig config;
};

// Deterministic: the same (n_utts, seed) yields a byte-identical corpus.
Corpus gen_corpus(int n_utts, uint64_t seed, const CorpusConfig& cfg = {});

// Renders one utterance from its seed; gen_corpus composes this.
SyntheticUtterance render_utterance(uint64_t seed, const CorpusConfig& cfg);

}  // namespace stylestream
