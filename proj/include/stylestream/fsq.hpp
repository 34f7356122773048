// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0
//
// Finite scalar quantization: each dimension of a down-projected feature is
// bounded by K_i * tanh and rounded to the nearest integer in [-K_i, K_i]
// (half away from zero). V_i = 2*K_i + 1 codes per dimension for a codebook
// of prod(V_i); gradients pass straight through the rounding, so training
// sees the tanh-bounded path.

#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "stylestream/nn.hpp"
#include "stylestream/ops.hpp"

namespace stylestream {

struct FsqLevels {
  std::vector<int> levels;  // V_i, each odd and >= 3
  std::vector<int> half;    // K_i = (V_i - 1) / 2

  explicit FsqLevels(std::vector<int> v) : levels(std::move(v)) {
    if (levels.empty())
      throw std::invalid_argument("fsq: levels must be non-empty");
    half.reserve(levels.size());
    for (int l : levels) {
      if (l < 3 || l % 2 == 0)
        throw std::invalid_argument("fsq: each level must be odd and >= 3, got " +
                                    std::to_string(l));
      half.push_back((l - 1) / 2);
    }
  }

  static FsqLevels parse(const std::string& csv) {
    std::vector<int> v;
    std::stringstream ss(csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) v.push_back(std::stoi(tok));
    return FsqLevels(std::move(v));
  }

  int dims() const { return static_cast<int>(levels.size()); }

  std::string str() const {
    std::string s = "[";
    for (size_t i = 0; i < levels.size(); ++i)
      s += (i ? "," : "") + std::to_string(levels[i]);
    return s + "]";
  }
};

inline int64_t codebook_size(const FsqLevels& l) {
  int64_t v = 1;
  for (int li : l.levels) v *= li;
  return v;
}

struct FsqCode {
  std::vector<int8_t> integers;  // per-dimension values in [-K_i, K_i]
  int64_t index = 0;             // mixed-radix, dimension 0 least significant
};

// index = sum_i (ints_i + K_i) * prod_{j<i} V_j.
inline int64_t code_to_index(const FsqLevels& l,
                             const std::vector<int8_t>& ints) {
  int64_t idx = 0, base = 1;
  for (int i = 0; i < l.dims(); ++i) {
    idx += (int64_t(ints[i]) + l.half[i]) * base;
    base *= l.levels[i];
  }
  return idx;
}

inline std::vector<int8_t> index_to_code(const FsqLevels& l, int64_t index) {
  std::vector<int8_t> ints(l.dims());
  for (int i = 0; i < l.dims(); ++i) {
    ints[i] = static_cast<int8_t>(index % l.levels[i] - l.half[i]);
    index /= l.levels[i];
  }
  return ints;
}

// Round half away from zero, matching std::round.
inline double round_half_away(double v) { return std::round(v); }

// Plain (non-autograd) quantizer for a single D-vector.
inline std::pair<FsqCode, std::vector<double>> quantize(
    const std::vector<double>& z, const FsqLevels& l) {
  if (static_cast<int>(z.size()) != l.dims())
    throw std::invalid_argument("fsq: vector dim " + std::to_string(z.size()) +
                                " does not match levels " + l.str());
  FsqCode code;
  code.integers.resize(l.dims());
  std::vector<double> q(l.dims());
  for (int i = 0; i < l.dims(); ++i) {
    if (!std::isfinite(z[i]))
      throw std::invalid_argument("fsq: non-finite input");
    const double bounded = double(l.half[i]) * std::tanh(z[i]);
    q[i] = round_half_away(bounded);
    code.integers[i] = static_cast<int8_t>(q[i]);
  }
  code.index = code_to_index(l, code.integers);
  return {code, q};
}

// Autograd bounding (no rounding): per dimension K_i * tanh(z_i) on a [T, D]
// matrix. This is the path gradients actually follow.
template <typename T>
Tensor<T> fsq_bound(const Tensor<T>& z, const FsqLevels& l) {
  if (z.rank() != 2 || z.shape()[1] != l.dims())
    throw std::invalid_argument("fsq_bound: expected [T," +
                                std::to_string(l.dims()) + "], got " +
                                shape_str(z.shape()));
  std::vector<T> kv(l.dims());
  for (int i = 0; i < l.dims(); ++i) kv[i] = static_cast<T>(l.half[i]);
  Tensor<T> k = Tensor<T>::from_data({1, l.dims()}, kv);
  return mul(tanh(z), k);
}

// Full quantizer: bounded then rounded with straight-through gradients.
template <typename T>
Tensor<T> fsq_quantize(const Tensor<T>& z, const FsqLevels& l) {
  return round_ste(fsq_bound(z, l));
}

template <typename T>
std::vector<FsqCode> codes_from_quantized(const Tensor<T>& q,
                                          const FsqLevels& l) {
  const int64_t frames = q.shape()[0];
  std::vector<FsqCode> codes(frames);
  for (int64_t t = 0; t < frames; ++t) {
    codes[t].integers.resize(l.dims());
    for (int i = 0; i < l.dims(); ++i)
      codes[t].integers[i] = static_cast<int8_t>(q.at(t, i));
    codes[t].index = code_to_index(l, codes[t].integers);
  }
  return codes;
}

// ---------------------------------------------------------------------------
// Bottleneck: down-projection to the FSQ space, quantization, up-projection.
// f_pre (the continuous pre-quantization features) is the exported content
// representation; f_post feeds the ASR decoder.

template <typename T>
struct FsqBottleneck {
  FsqLevels levels;
  Linear<T> down, up;

  struct Out {
    Tensor<T> f_post;            // [T, D_c]
    Tensor<T> quantized;         // [T, D] integer lattice points
    std::vector<FsqCode> codes;  // one per frame
  };

  FsqBottleneck() : levels({5, 3, 3}) {}
  FsqBottleneck(ParamStore<T>& ps, const std::string& name, int64_t feat_dim,
                FsqLevels lv, Rng& rng)
      : levels(std::move(lv)) {
    down = Linear<T>(ps, name + ".down", feat_dim, levels.dims(), rng);
    up = Linear<T>(ps, name + ".up", levels.dims(), feat_dim, rng);
  }

  // `hard` false replaces rounding with the identity (tanh-bounded path
  // only); gradient-check tests use it since the STE backward is identical.
  Out forward(const Tensor<T>& f_pre, bool hard = true) const {
    Out o;
    Tensor<T> z = down(f_pre);
    o.quantized = hard ? fsq_quantize(z, levels) : fsq_bound(z, levels);
    o.codes = codes_from_quantized(hard ? o.quantized
                                        : round_ste(detach(o.quantized)),
                                   levels);
    o.f_post = up(o.quantized);
    return o;
  }
};

// ---------------------------------------------------------------------------
// Code-sequence dump: magic "SSFQ", u32 D, u32 T, then T x D int8 values.

inline void save_codes(const std::string& path,
                       const std::vector<FsqCode>& codes) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("fsq: cannot open " + path);
  os.write("SSFQ", 4);
  const uint32_t d = codes.empty() ? 0 : uint32_t(codes[0].integers.size());
  const uint32_t t = uint32_t(codes.size());
  os.write(reinterpret_cast<const char*>(&d), 4);
  os.write(reinterpret_cast<const char*>(&t), 4);
  for (const auto& c : codes)
    os.write(reinterpret_cast<const char*>(c.integers.data()), d);
  if (!os) throw std::runtime_error("fsq: write failed for " + path);
}

inline std::vector<std::vector<int8_t>> load_codes(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("fsq: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "SSFQ")
    throw std::runtime_error("fsq: bad magic in " + path);
  uint32_t d = 0, t = 0;
  is.read(reinterpret_cast<char*>(&d), 4);
  is.read(reinterpret_cast<char*>(&t), 4);
  std::vector<std::vector<int8_t>> out(t, std::vector<int8_t>(d));
  for (auto& row : out)
    is.read(reinterpret_cast<char*>(row.data()), d);
  if (!is) throw std::runtime_error("fsq: truncated data in " + path);
  return out;
}

}  // namespace stylestream
