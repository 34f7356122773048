// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0

#include "stylestream/mel.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace stylestream {

namespace {

constexpr double kPi = 3.14159265358979323846;

// Iterative radix-2 FFT, in place.
void fft(std::vector<std::complex<double>>& a, bool inverse) {
  const size_t n = a.size();
  if ((n & (n - 1)) != 0)
    throw std::invalid_argument("fft: size must be a power of two");
  for (size_t i = 1, j = 0; i < n; ++i) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = 2.0 * kPi / double(len) * (inverse ? 1.0 : -1.0);
    std::complex<double> wl(std::cos(ang), std::sin(ang));
    for (size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0);
      for (size_t k = 0; k < len / 2; ++k) {
        auto u = a[i + k];
        auto v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wl;
      }
    }
  }
  if (inverse)
    for (auto& x : a) x /= double(n);
}

// Periodic Hann window.
std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * double(i) / double(n));
  return w;
}

// Slaney mel scale: linear below 1 kHz, logarithmic above.
double hz_to_mel(double hz) {
  constexpr double min_log_hz = 1000.0;
  constexpr double lin = 200.0 / 3.0;
  constexpr double min_log_mel = min_log_hz / lin;
  constexpr double log_step = 0.06875177742094912;  // log(6.4) / 27
  if (hz < min_log_hz) return hz / lin;
  return min_log_mel + std::log(hz / min_log_hz) / log_step;
}

double mel_to_hz(double mel) {
  constexpr double min_log_hz = 1000.0;
  constexpr double lin = 200.0 / 3.0;
  constexpr double min_log_mel = min_log_hz / lin;
  constexpr double log_step = 0.06875177742094912;
  if (mel < min_log_mel) return mel * lin;
  return min_log_hz * std::exp((mel - min_log_mel) * log_step);
}

// Sample with reflect padding (no edge repeat): x[-i] = x[i], x[L-1+i] =
// x[L-1-i].
inline float sample_reflect(const std::vector<float>& x, int64_t i) {
  const int64_t n = static_cast<int64_t>(x.size());
  if (i < 0) i = -i;
  if (i >= n) i = 2 * n - 2 - i;
  return x[i];
}

// Power spectrum (n_fft/2+1 bins) of the window centered at `center`.
void frame_power(const std::vector<float>& x, int64_t center,
                 const std::vector<double>& window, int n_fft,
                 std::vector<double>& power,
                 std::vector<std::complex<double>>& scratch) {
  scratch.assign(n_fft, {});
  const int64_t start = center - n_fft / 2;
  for (int i = 0; i < n_fft; ++i)
    scratch[i] = window[i] * double(sample_reflect(x, start + i));
  fft(scratch, false);
  for (int k = 0; k <= n_fft / 2; ++k) power[k] = std::norm(scratch[k]);
}

void apply_filterbank(const std::vector<double>& fb, int n_mels, int n_bins,
                      const std::vector<double>& power, double log_floor,
                      float* out_frame) {
  for (int m = 0; m < n_mels; ++m) {
    double acc = 0.0;
    const double* row = fb.data() + int64_t(m) * n_bins;
    for (int k = 0; k < n_bins; ++k) acc += row[k] * power[k];
    out_frame[m] = static_cast<float>(std::log(acc + log_floor));
  }
}

}  // namespace

std::vector<double> mel_filterbank(const MelConfig& cfg) {
  const int n_bins = cfg.n_fft / 2 + 1;
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> mel_f(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i)
    mel_f[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * i / (cfg.n_mels + 1));
  std::vector<double> fb(int64_t(cfg.n_mels) * n_bins, 0.0);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double enorm = 2.0 / (mel_f[m + 2] - mel_f[m]);
    for (int k = 0; k < n_bins; ++k) {
      const double f = double(k) * cfg.sample_rate / cfg.n_fft;
      const double lower = (f - mel_f[m]) / (mel_f[m + 1] - mel_f[m]);
      const double upper = (mel_f[m + 2] - f) / (mel_f[m + 2] - mel_f[m + 1]);
      fb[int64_t(m) * n_bins + k] =
          std::max(0.0, std::min(lower, upper)) * enorm;
    }
  }
  return fb;
}

std::vector<float> MelSpectrogram::frames_major(int start, int len) const {
  std::vector<float> out(int64_t(len) * n_mels);
  for (int t = 0; t < len; ++t)
    for (int f = 0; f < n_mels; ++f)
      out[int64_t(t) * n_mels + f] = at(f, start + t);
  return out;
}

MelSpectrogram log_mel(const Waveform& w, const MelConfig& cfg) {
  if (w.sample_rate != cfg.sample_rate)
    throw std::invalid_argument(
        "log_mel: waveform rate " + std::to_string(w.sample_rate) +
        " does not match config rate " + std::to_string(cfg.sample_rate));
  const int64_t n = static_cast<int64_t>(w.samples.size());
  if (n < cfg.n_fft)
    throw std::invalid_argument("log_mel: input shorter than one window (" +
                                std::to_string(n) + " < " +
                                std::to_string(cfg.n_fft) + " samples)");
  for (float s : w.samples)
    if (!std::isfinite(s))
      throw std::invalid_argument("log_mel: non-finite sample");

  const int frames = static_cast<int>(n / cfg.hop);
  const int n_bins = cfg.n_fft / 2 + 1;
  const auto fb = mel_filterbank(cfg);
  const auto window = hann_window(cfg.n_fft);

  MelSpectrogram m;
  m.n_mels = cfg.n_mels;
  m.frames = frames;
  m.frame_rate = double(cfg.sample_rate) / cfg.hop;
  m.data.resize(int64_t(cfg.n_mels) * frames);

  std::vector<double> power(n_bins);
  std::vector<std::complex<double>> scratch;
  std::vector<float> col(cfg.n_mels);
  for (int t = 0; t < frames; ++t) {
    frame_power(w.samples, int64_t(t) * cfg.hop, window, cfg.n_fft, power,
                scratch);
    apply_filterbank(fb, cfg.n_mels, n_bins, power, cfg.log_floor, col.data());
    for (int f = 0; f < cfg.n_mels; ++f) m.at(f, t) = col[f];
  }
  return m;
}

// ---------------------------------------------------------------------------
// Griffin-Lim

namespace {

struct Stft {
  int frames = 0;
  int n_bins = 0;
  std::vector<std::complex<double>> c;  // [frames, n_bins]
};

Stft stft_all(const std::vector<float>& x, int frames, const MelConfig& cfg,
              const std::vector<double>& window) {
  Stft s;
  s.frames = frames;
  s.n_bins = cfg.n_fft / 2 + 1;
  s.c.resize(int64_t(frames) * s.n_bins);
  std::vector<std::complex<double>> scratch;
  for (int t = 0; t < frames; ++t) {
    scratch.assign(cfg.n_fft, {});
    const int64_t start = int64_t(t) * cfg.hop - cfg.n_fft / 2;
    for (int i = 0; i < cfg.n_fft; ++i)
      scratch[i] = window[i] * double(sample_reflect(x, start + i));
    fft(scratch, false);
    for (int k = 0; k < s.n_bins; ++k) s.c[int64_t(t) * s.n_bins + k] = scratch[k];
  }
  return s;
}

// Overlap-add inverse with squared-window normalization; returns frames*hop
// samples.
std::vector<float> istft_all(const Stft& s, const MelConfig& cfg,
                             const std::vector<double>& window) {
  const int64_t out_len = int64_t(s.frames) * cfg.hop;
  const int64_t pad = cfg.n_fft / 2;
  std::vector<double> acc(out_len + 2 * pad, 0.0);
  std::vector<double> wsum(out_len + 2 * pad, 0.0);
  std::vector<std::complex<double>> full(cfg.n_fft);
  for (int t = 0; t < s.frames; ++t) {
    for (int k = 0; k < s.n_bins; ++k) full[k] = s.c[int64_t(t) * s.n_bins + k];
    for (int k = s.n_bins; k < cfg.n_fft; ++k)
      full[k] = std::conj(full[cfg.n_fft - k]);
    fft(full, true);
    // Frame t starts at t*hop - pad in signal coords = t*hop in buffer coords.
    const int64_t start = int64_t(t) * cfg.hop;
    for (int i = 0; i < cfg.n_fft; ++i) {
      acc[start + i] += window[i] * full[i].real();
      wsum[start + i] += window[i] * window[i];
    }
  }
  std::vector<float> out(out_len);
  for (int64_t i = 0; i < out_len; ++i) {
    const double d = wsum[i + pad];
    out[i] = static_cast<float>(d > 1e-8 ? acc[i + pad] / d : 0.0);
  }
  return out;
}

}  // namespace

Waveform griffin_lim_invert(const MelSpectrogram& m, int iters, Rng& rng,
                            const MelConfig& cfg) {
  if (iters < 1) throw std::invalid_argument("griffin_lim: iters must be >= 1");
  if (m.n_mels != cfg.n_mels)
    throw std::invalid_argument("griffin_lim: mel bin count mismatch");
  const int n_bins = cfg.n_fft / 2 + 1;
  const int frames = m.frames;

  // Mel power back to linear power through the filterbank pseudo-inverse.
  const auto fb = mel_filterbank(cfg);
  Eigen::MatrixXd fbm(cfg.n_mels, n_bins);
  for (int i = 0; i < cfg.n_mels; ++i)
    for (int k = 0; k < n_bins; ++k) fbm(i, k) = fb[int64_t(i) * n_bins + k];
  Eigen::MatrixXd melp(cfg.n_mels, frames);
  for (int i = 0; i < cfg.n_mels; ++i)
    for (int t = 0; t < frames; ++t)
      melp(i, t) = std::max(0.0, std::exp(double(m.at(i, t))) - cfg.log_floor);
  Eigen::MatrixXd linp =
      fbm.completeOrthogonalDecomposition().solve(melp).cwiseMax(0.0);

  std::vector<double> mag(int64_t(frames) * n_bins);
  for (int t = 0; t < frames; ++t)
    for (int k = 0; k < n_bins; ++k)
      mag[int64_t(t) * n_bins + k] = std::sqrt(linp(k, t));

  const auto window = hann_window(cfg.n_fft);
  // Random initial phase.
  Stft s;
  s.frames = frames;
  s.n_bins = n_bins;
  s.c.resize(int64_t(frames) * n_bins);
  for (int64_t i = 0; i < int64_t(frames) * n_bins; ++i) {
    const double phi = rng.uniform() * 2.0 * kPi;
    s.c[i] = std::polar(mag[i], phi);
  }

  std::vector<float> x;
  for (int it = 0; it < iters; ++it) {
    x = istft_all(s, cfg, window);
    Stft s2 = stft_all(x, frames, cfg, window);
    for (int64_t i = 0; i < int64_t(frames) * n_bins; ++i) {
      const double a = std::abs(s2.c[i]);
      s.c[i] = a > 1e-12 ? s2.c[i] * (mag[i] / a) : std::complex<double>(mag[i], 0.0);
    }
  }
  x = istft_all(s, cfg, window);

  Waveform out;
  out.sample_rate = cfg.sample_rate;
  out.samples = std::move(x);
  return out;
}

// ---------------------------------------------------------------------------
// Streaming mel

StreamingMel::StreamingMel(const MelConfig& cfg)
    : cfg_(cfg), filterbank_(mel_filterbank(cfg)) {}

int StreamingMel::push(const float* samples, size_t count) {
  if (finished_) throw std::logic_error("StreamingMel: push after finish");
  samples_.insert(samples_.end(), samples, samples + count);
  return emit_ready(false);
}

int StreamingMel::finish() {
  if (finished_) return 0;
  finished_ = true;
  if (static_cast<int>(samples_.size()) < cfg_.n_fft)
    throw std::invalid_argument(
        "StreamingMel: stream shorter than one window");
  return emit_ready(true);
}

int StreamingMel::emit_ready(bool at_end) {
  const int total = static_cast<int>(samples_.size()) / cfg_.hop;
  const int64_t half = cfg_.n_fft / 2;
  int emitted = 0;
  const int n_bins = cfg_.n_fft / 2 + 1;
  static thread_local std::vector<double> power;
  static thread_local std::vector<std::complex<double>> scratch;
  power.resize(n_bins);
  const auto window = hann_window(cfg_.n_fft);
  while (frames_ < total) {
    const int64_t center = int64_t(frames_) * cfg_.hop;
    // A frame is final once its window needs no end-of-signal padding and
    // the start-of-signal reflection is fully covered.
    const int64_t need = std::max(center + half, half + 1);
    if (!at_end && static_cast<int64_t>(samples_.size()) < need) break;
    frame_major_.resize(int64_t(frames_ + 1) * cfg_.n_mels);
    frame_power(samples_, center, window, cfg_.n_fft, power, scratch);
    apply_filterbank(filterbank_, cfg_.n_mels, n_bins, power, cfg_.log_floor,
                     frame_major_.data() + int64_t(frames_) * cfg_.n_mels);
    ++frames_;
    ++emitted;
  }
  return emitted;
}

MelSpectrogram StreamingMel::to_mel() const {
  MelSpectrogram m;
  m.n_mels = cfg_.n_mels;
  m.frames = frames_;
  m.frame_rate = double(cfg_.sample_rate) / cfg_.hop;
  m.data.resize(int64_t(cfg_.n_mels) * frames_);
  for (int t = 0; t < frames_; ++t)
    for (int f = 0; f < cfg_.n_mels; ++f)
      m.at(f, t) = frame_major_[int64_t(t) * cfg_.n_mels + f];
  return m;
}

// ---------------------------------------------------------------------------
// Mel dump I/O ("SSML")

void save_mel(const std::string& path, const MelSpectrogram& m) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("mel: cannot open " + path);
  os.write("SSML", 4);
  const uint32_t f = static_cast<uint32_t>(m.n_mels);
  const uint32_t t = static_cast<uint32_t>(m.frames);
  os.write(reinterpret_cast<const char*>(&f), 4);
  os.write(reinterpret_cast<const char*>(&t), 4);
  os.write(reinterpret_cast<const char*>(m.data.data()),
           static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  if (!os) throw std::runtime_error("mel: write failed for " + path);
}

MelSpectrogram load_mel(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("mel: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "SSML", 4) != 0)
    throw std::runtime_error("mel: bad magic in " + path);
  uint32_t f = 0, t = 0;
  is.read(reinterpret_cast<char*>(&f), 4);
  is.read(reinterpret_cast<char*>(&t), 4);
  if (!is) throw std::runtime_error("mel: truncated header in " + path);
  MelSpectrogram m;
  m.n_mels = static_cast<int>(f);
  m.frames = static_cast<int>(t);
  m.data.resize(int64_t(f) * t);
  is.read(reinterpret_cast<char*>(m.data.data()),
          static_cast<std::streamsize>(m.data.size() * sizeof(float)));
  if (!is) throw std::runtime_error("mel: truncated data in " + path);
  return m;
}

}  // namespace stylestream
