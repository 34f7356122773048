// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <string>
#include <vector>

namespace stylestream {

struct Waveform {
  std::vector<float> samples;  // in [-1, 1]
  int sample_rate = 16000;

  double duration_s() const {
    return static_cast<double>(samples.size()) / sample_rate;
  }
};

// Reads a 16-bit PCM mono RIFF WAV. Samples are scaled by 1/32768.
// Rejects non-mono, non-16-bit, or malformed files with a reason.
Waveform load_wav(const std::string& path);

// Writes 16-bit PCM mono; samples are clamped to [-1, 1] and scaled by 32767.
void save_wav(const std::string& path, const Waveform& w);

}  // namespace stylestream
