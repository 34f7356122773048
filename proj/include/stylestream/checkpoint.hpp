// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0
//
// Versioned binary checkpoint: magic "SSCK", u32 format version, u32 tensor
// count, then per tensor: u32 name length, UTF-8 name, u32 rank, u64 dims,
// f32 little-endian values. All integers little-endian.

#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "stylestream/tensor.hpp"

namespace stylestream {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

inline constexpr uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  Shape shape;
  std::vector<float> data;
};

using TensorMap = std::map<std::string, NamedTensor>;

namespace detail {

template <typename V>
void write_pod(std::ofstream& os, V v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <typename V>
V read_pod(std::ifstream& is, const std::string& what) {
  V v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!is) throw std::runtime_error("checkpoint: truncated reading " + what);
  return v;
}

}  // namespace detail

inline void save_checkpoint(const std::string& path, const TensorMap& tensors) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open " + path);
  os.write("SSCK", 4);
  detail::write_pod<uint32_t>(os, kCheckpointVersion);
  detail::write_pod<uint32_t>(os, static_cast<uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    detail::write_pod<uint32_t>(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_pod<uint32_t>(os, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape)
      detail::write_pod<uint64_t>(os, static_cast<uint64_t>(d));
    os.write(reinterpret_cast<const char*>(t.data.data()),
             static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  }
  if (!os) throw std::runtime_error("checkpoint: write failed for " + path);
}

inline TensorMap load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "SSCK")
    throw std::runtime_error("checkpoint: bad magic in " + path);
  uint32_t version = detail::read_pod<uint32_t>(is, "version");
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " +
                             std::to_string(version));
  uint32_t count = detail::read_pod<uint32_t>(is, "tensor count");
  TensorMap out;
  for (uint32_t i = 0; i < count; ++i) {
    uint32_t name_len = detail::read_pod<uint32_t>(is, "name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw std::runtime_error("checkpoint: truncated name");
    uint32_t rank = detail::read_pod<uint32_t>(is, "rank");
    Shape shape(rank);
    int64_t numel = 1;
    for (uint32_t r = 0; r < rank; ++r) {
      shape[r] =
          static_cast<int64_t>(detail::read_pod<uint64_t>(is, "dimension"));
      numel *= shape[r];
    }
    std::vector<float> data(numel);
    is.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(numel * sizeof(float)));
    if (!is) throw std::runtime_error("checkpoint: truncated data in " + name);
    out.emplace(std::move(name), NamedTensor{std::move(shape), std::move(data)});
  }
  return out;
}

}  // namespace stylestream
