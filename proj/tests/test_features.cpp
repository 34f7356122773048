// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>

#include "stylestream/mel.hpp"
#include "stylestream/wav.hpp"

using namespace stylestream;

namespace {

constexpr double kPi = 3.14159265358979323846;

Waveform tone(double freq_hz, double seconds, int sr = 16000,
              float amp = 0.5f) {
  Waveform w;
  w.sample_rate = sr;
  w.samples.resize(static_cast<size_t>(seconds * sr));
  for (size_t i = 0; i < w.samples.size(); ++i)
    w.samples[i] = amp * static_cast<float>(
                             std::sin(2.0 * kPi * freq_hz * double(i) / sr));
  return w;
}

// Direct DFT magnitude at an exact frequency — independent oracle for
// spectral peak checks.
double goertzel_power(const std::vector<float>& x, double freq_hz, int sr) {
  std::complex<double> acc(0.0, 0.0);
  for (size_t i = 0; i < x.size(); ++i)
    acc += double(x[i]) *
           std::exp(std::complex<double>(0.0, -2.0 * kPi * freq_hz * double(i) / sr));
  return std::norm(acc) / double(x.size());
}

// Writes a raw PCM16 wav with the given interleaved samples and channels.
void write_raw_wav(const std::string& path, const std::vector<int16_t>& pcm,
                   uint16_t channels, uint32_t sr) {
  std::ofstream os(path, std::ios::binary);
  auto w32 = [&](uint32_t v) { os.write(reinterpret_cast<char*>(&v), 4); };
  auto w16 = [&](uint16_t v) { os.write(reinterpret_cast<char*>(&v), 2); };
  os.write("RIFF", 4);
  w32(36 + uint32_t(pcm.size() * 2));
  os.write("WAVE", 4);
  os.write("fmt ", 4);
  w32(16);
  w16(1);
  w16(channels);
  w32(sr);
  w32(sr * 2 * channels);
  w16(uint16_t(2 * channels));
  w16(16);
  os.write("data", 4);
  w32(uint32_t(pcm.size() * 2));
  os.write(reinterpret_cast<const char*>(pcm.data()),
           std::streamsize(pcm.size() * 2));
}

}  // namespace

TEST_CASE("load_wav: silence, scaling law, and channel contract") {
  SUBCASE("all-zero 1s file gives 16000 zero samples") {
    write_raw_wav("t0.wav", std::vector<int16_t>(16000, 0), 1, 16000);
    auto w = load_wav("t0.wav");
    CHECK(w.samples.size() == 16000);
    CHECK(w.sample_rate == 16000);
    for (float s : w.samples) CHECK(s == 0.0f);
    std::remove("t0.wav");
  }
  SUBCASE("full-scale square wave maps to {-1, 32767/32768}") {
    std::vector<int16_t> pcm(256);
    for (size_t i = 0; i < pcm.size(); ++i)
      pcm[i] = (i / 8) % 2 == 0 ? int16_t(32767) : int16_t(-32768);
    write_raw_wav("t1.wav", pcm, 1, 16000);
    auto w = load_wav("t1.wav");
    for (float s : w.samples)
      CHECK((s == -1.0f || s == 32767.0f / 32768.0f));
    std::remove("t1.wav");
  }
  SUBCASE("stereo file is rejected") {
    write_raw_wav("t2.wav", std::vector<int16_t>(64, 0), 2, 16000);
    CHECK_THROWS_WITH_AS(load_wav("t2.wav"),
                         doctest::Contains("expected mono"),
                         std::runtime_error);
    std::remove("t2.wav");
  }
}

TEST_CASE("wav save/load round-trip") {
  Waveform w = tone(440.0, 0.1);
  save_wav("t3.wav", w);
  auto r = load_wav("t3.wav");
  REQUIRE(r.samples.size() == w.samples.size());
  for (size_t i = 0; i < r.samples.size(); ++i)
    CHECK(std::abs(r.samples[i] - w.samples[i]) < 1.0f / 32000.0f);
  std::remove("t3.wav");
}

TEST_CASE("log_mel frame count: 16000 samples at hop 320 gives 50 frames") {
  auto m = log_mel(tone(440.0, 1.0));
  CHECK(m.frames == 50);
  CHECK(m.n_mels == 100);
  CHECK(m.frame_rate == doctest::Approx(50.0));
}

TEST_CASE("frame-rate identity |T - L/320| <= 1 over random lengths") {
  Rng rng(11);
  for (int i = 0; i < 20; ++i) {
    const int len = int(rng.uniform_int(1024, 50000));
    Waveform w = tone(200.0 + i * 50.0, 1.0);
    w.samples.resize(len, 0.0f);
    auto m = log_mel(w);
    CHECK(std::abs(double(m.frames) - double(len) / 320.0) <= 1.0);
  }
}

TEST_CASE("log_mel of silence equals log(floor) in every cell") {
  Waveform w;
  w.samples.assign(16000, 0.0f);
  auto m = log_mel(w);
  const float expect = std::log(1e-10f);
  for (float v : m.data) CHECK(v == doctest::Approx(expect).epsilon(1e-6));
}

TEST_CASE("log_mel rejects too-short input") {
  Waveform w;
  w.samples.assign(512, 0.0f);
  CHECK_THROWS_AS(log_mel(w), std::invalid_argument);
}

TEST_CASE("pure tone has a constant argmax mel bin matching the DFT oracle") {
  auto w = tone(440.0, 1.0);
  auto m = log_mel(w);
  int first_argmax = -1;
  for (int t = 2; t < m.frames - 2; ++t) {
    int am = 0;
    for (int f = 1; f < m.n_mels; ++f)
      if (m.at(f, t) > m.at(am, t)) am = f;
    if (first_argmax < 0) first_argmax = am;
    CHECK(am == first_argmax);
  }
  // Oracle: the mel center frequency of the argmax bin brackets 440 Hz
  // within one bin's span.
  MelConfig cfg;
  auto fb = mel_filterbank(cfg);
  const int n_bins = cfg.n_fft / 2 + 1;
  int peak_k = 0;
  for (int k = 1; k < n_bins; ++k)
    if (fb[int64_t(first_argmax) * n_bins + k] >
        fb[int64_t(first_argmax) * n_bins + peak_k])
      peak_k = k;
  const double bin_hz = double(peak_k) * cfg.sample_rate / cfg.n_fft;
  CHECK(std::abs(bin_hz - 440.0) < 100.0);
}

TEST_CASE("log_mel is shift-covariant by whole hops on interior frames") {
  auto w = tone(523.0, 1.0);
  const int k = 3;
  Waveform delayed;
  delayed.sample_rate = w.sample_rate;
  delayed.samples.assign(k * 320, 0.0f);
  delayed.samples.insert(delayed.samples.end(), w.samples.begin(),
                         w.samples.end());
  auto m0 = log_mel(w);
  auto m1 = log_mel(delayed);
  for (int t = 4; t < m0.frames - 4; ++t)
    for (int f = 0; f < m0.n_mels; ++f)
      CHECK(std::abs(m0.at(f, t) - m1.at(f, t + k)) < 1e-5f);
}

TEST_CASE("griffin-lim recovers a tone's dominant frequency within 1 bin") {
  auto w = tone(440.0, 1.0);
  auto m = log_mel(w);
  Rng rng(12);
  auto rec = griffin_lim_invert(m, 32, rng);
  CHECK(rec.samples.size() == size_t(m.frames) * 320);
  // Scan DFT bins around 440 Hz; the strongest must be within +-1 FFT bin
  // (15.625 Hz at n_fft=1024).
  const double bin = 16000.0 / 1024.0;
  double best_f = 0, best_p = -1;
  for (double f = 200.0; f <= 800.0; f += bin / 2.0) {
    double p = goertzel_power(rec.samples, f, rec.sample_rate);
    if (p > best_p) {
      best_p = p;
      best_f = f;
    }
  }
  CHECK(std::abs(best_f - 440.0) <= bin);
}

TEST_CASE("griffin-lim of a silence spectrogram is near-silent") {
  Waveform w;
  w.samples.assign(16000, 0.0f);
  auto m = log_mel(w);
  Rng rng(13);
  auto rec = griffin_lim_invert(m, 4, rng);
  double rms = 0;
  for (float s : rec.samples) rms += double(s) * s;
  rms = std::sqrt(rms / double(rec.samples.size()));
  CHECK(rms < 1e-3);
}

TEST_CASE("griffin-lim reconstruction error is non-increasing in iterations") {
  // Error metric: distance between the target log-mel and the log-mel of the
  // inversion.
  auto w = tone(660.0, 0.7);
  auto m = log_mel(w);
  auto err_at = [&](int iters) {
    Rng rng(14);  // same initial phase for both runs
    auto rec = griffin_lim_invert(m, iters, rng);
    auto m2 = log_mel(rec);
    double e = 0;
    for (size_t i = 0; i < m.data.size(); ++i)
      e += std::abs(double(m.data[i]) - double(m2.data[i]));
    return e / double(m.data.size());
  };
  CHECK(err_at(32) <= err_at(1) + 1e-9);
}

TEST_CASE("streaming mel matches offline mel exactly and is causal") {
  auto w = tone(330.0, 0.83);
  auto offline = log_mel(w);

  StreamingMel sm;
  size_t pos = 0;
  Rng rng(15);
  std::vector<int> counts;
  while (pos < w.samples.size()) {
    size_t n = std::min<size_t>(size_t(rng.uniform_int(100, 4000)),
                                w.samples.size() - pos);
    counts.push_back(sm.push(w.samples.data() + pos, n));
    pos += n;
  }
  sm.finish();
  auto streamed = sm.to_mel();
  REQUIRE(streamed.frames == offline.frames);
  for (size_t i = 0; i < offline.data.size(); ++i)
    CHECK(streamed.data[i] == offline.data[i]);
}

TEST_CASE("mel dump round-trips through SSML format") {
  auto m = log_mel(tone(500.0, 0.3));
  save_mel("t4.ssml", m);
  auto r = load_mel("t4.ssml");
  CHECK(r.n_mels == m.n_mels);
  CHECK(r.frames == m.frames);
  CHECK(r.data == m.data);
  std::remove("t4.ssml");
}
