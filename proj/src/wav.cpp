// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0

#include "stylestream/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace stylestream {

namespace {

template <typename V>
V read_le(std::ifstream& is, const std::string& what) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw std::runtime_error("wav: truncated file reading " + what);
  return v;
}

template <typename V>
void write_le(std::ofstream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

}  // namespace

Waveform load_wav(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("wav: cannot open " + path);

  char riff[4], wave[4];
  is.read(riff, 4);
  if (!is || std::memcmp(riff, "RIFF", 4) != 0)
    throw std::runtime_error("wav: missing RIFF header in " + path);
  read_le<uint32_t>(is, "riff size");
  is.read(wave, 4);
  if (!is || std::memcmp(wave, "WAVE", 4) != 0)
    throw std::runtime_error("wav: not a WAVE file: " + path);

  uint16_t channels = 0, bits = 0;
  uint32_t sample_rate = 0;
  bool have_fmt = false;
  std::vector<int16_t> pcm;
  bool have_data = false;

  while (is && !have_data) {
    char id[4];
    is.read(id, 4);
    if (!is) break;
    uint32_t size = read_le<uint32_t>(is, "chunk size");
    if (std::memcmp(id, "fmt ", 4) == 0) {
      uint16_t format = read_le<uint16_t>(is, "format tag");
      channels = read_le<uint16_t>(is, "channels");
      sample_rate = read_le<uint32_t>(is, "sample rate");
      read_le<uint32_t>(is, "byte rate");
      read_le<uint16_t>(is, "block align");
      bits = read_le<uint16_t>(is, "bits per sample");
      if (size > 16) is.seekg(size - 16, std::ios::cur);
      if (format != 1)
        throw std::runtime_error("wav: expected PCM format, got tag " +
                                 std::to_string(format));
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw std::runtime_error("wav: data before fmt chunk");
      if (channels != 1)
        throw std::runtime_error("wav: expected mono, got " +
                                 std::to_string(channels) + " channels");
      if (bits != 16)
        throw std::runtime_error("wav: expected 16-bit samples, got " +
                                 std::to_string(bits));
      pcm.resize(size / 2);
      is.read(reinterpret_cast<char*>(pcm.data()), size & ~1u);
      if (!is) throw std::runtime_error("wav: truncated data chunk");
      have_data = true;
    } else {
      is.seekg(size + (size & 1), std::ios::cur);
    }
  }
  if (!have_data) throw std::runtime_error("wav: no data chunk in " + path);

  Waveform w;
  w.sample_rate = static_cast<int>(sample_rate);
  w.samples.resize(pcm.size());
  for (size_t i = 0; i < pcm.size(); ++i)
    w.samples[i] = static_cast<float>(pcm[i]) / 32768.0f;
  return w;
}

void save_wav(const std::string& path, const Waveform& w) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("wav: cannot open " + path + " for write");
  const uint32_t n = static_cast<uint32_t>(w.samples.size());
  const uint32_t data_bytes = n * 2;
  os.write("RIFF", 4);
  write_le<uint32_t>(os, 36 + data_bytes);
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  write_le<uint32_t>(os, 16);
  write_le<uint16_t>(os, 1);  // PCM
  write_le<uint16_t>(os, 1);  // mono
  write_le<uint32_t>(os, static_cast<uint32_t>(w.sample_rate));
  write_le<uint32_t>(os, static_cast<uint32_t>(w.sample_rate) * 2);
  write_le<uint16_t>(os, 2);
  write_le<uint16_t>(os, 16);
  os.write("data", 4);
  write_le<uint32_t>(os, data_bytes);
  for (float s : w.samples) {
    float c = std::clamp(s, -1.0f, 1.0f);
    int16_t q = static_cast<int16_t>(std::lrintf(c * 32767.0f));
    write_le<int16_t>(os, q);
  }
  if (!os) throw std::runtime_error("wav: write failed for " + path);
}

}  // namespace stylestream
