// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0
//
// Log-mel analysis at the 50 Hz frame configuration (16 kHz, hop 320, 100
// bins) and a Griffin-Lim inverse as the audible synthesis path.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stylestream/rng.hpp"
#include "stylestream/wav.hpp"

namespace stylestream {

struct MelConfig {
  int sample_rate = 16000;
  int n_fft = 1024;    // Hann window, centered frames with reflect padding
  int hop = 320;       // 50 Hz frame rate at 16 kHz
  int n_mels = 100;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;  // added before the log; silence maps to
                             // log(log_floor) exactly
};

// F x T log-amplitude matrix, row-major (bin-major).
struct MelSpectrogram {
  int n_mels = 0;
  int frames = 0;
  double frame_rate = 50.0;
  std::vector<float> data;

  float at(int f, int t) const { return data[int64_t(f) * frames + t]; }
  float& at(int f, int t) { return data[int64_t(f) * frames + t]; }
  // Column-major copy of frames [start, start+len) as [len, n_mels] rows.
  std::vector<float> frames_major(int start, int len) const;
};

// Frame count rule: T = floor(samples / hop); frame t is the Hann-windowed
// n_fft segment centered at sample t*hop (reflect padding at the edges).
// Rejects inputs shorter than one window.
MelSpectrogram log_mel(const Waveform& w, const MelConfig& cfg = {});

// Griffin-Lim inversion through the pseudo-inverse mel filterbank. Initial
// phase is drawn from `rng`; output has exactly frames*hop samples.
Waveform griffin_lim_invert(const MelSpectrogram& m, int iters, Rng& rng,
                            const MelConfig& cfg = {});

// Incremental mel that emits frames as soon as their analysis window is
// fully covered by received samples; after finish() the result is
// bit-identical to the offline log_mel of the whole signal.
class StreamingMel {
 public:
  explicit StreamingMel(const MelConfig& cfg = {});

  // Appends samples; returns the number of newly emitted frames.
  int push(const float* samples, size_t count);
  // Applies end-of-signal reflect padding and emits the remaining frames.
  int finish();

  int frames() const { return frames_; }
  size_t received_samples() const { return samples_.size(); }
  // Emitted frames in time-major [frames, n_mels] layout.
  const std::vector<float>& frame_major() const { return frame_major_; }
  MelSpectrogram to_mel() const;

 private:
  int emit_ready(bool at_end);

  MelConfig cfg_;
  std::vector<double> filterbank_;
  std::vector<float> samples_;
  std::vector<float> frame_major_;  // [T, F]
  int frames_ = 0;
  bool finished_ = false;
};

// Mel feature dump: magic "SSML", u32 F, u32 T, f32 little-endian row-major.
void save_mel(const std::string& path, const MelSpectrogram& m);
MelSpectrogram load_mel(const std::string& path);

// Slaney-style mel filterbank, [n_mels, n_fft/2+1] row-major.
std::vector<double> mel_filterbank(const MelConfig& cfg);

}  // namespace stylestream
