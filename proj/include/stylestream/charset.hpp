// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace stylestream {

// Output token alphabet: 16 content symbols ('a'..'p') plus PAD/BOS/EOS.
inline constexpr int32_t kPad = 0;
inline constexpr int32_t kBos = 1;
inline constexpr int32_t kEos = 2;
inline constexpr int32_t kSymbolOffset = 3;
inline constexpr int kNumSymbols = 16;
inline constexpr int kVocabSize = kSymbolOffset + kNumSymbols;  // 19

inline int32_t token_from_symbol(int symbol) { return kSymbolOffset + symbol; }

inline std::vector<int32_t> tokens_from_transcript(const std::string& text) {
  std::vector<int32_t> out;
  out.reserve(text.size());
  for (char c : text) {
    if (c < 'a' || c >= 'a' + kNumSymbols)
      throw std::invalid_argument(std::string("charset: symbol '") + c +
                                  "' outside alphabet a..p");
    out.push_back(kSymbolOffset + (c - 'a'));
  }
  return out;
}

inline std::string transcript_from_tokens(const std::vector<int32_t>& toks) {
  std::string s;
  for (int32_t t : toks)
    if (t >= kSymbolOffset && t < kVocabSize)
      s.push_back(char('a' + (t - kSymbolOffset)));
  return s;
}

}  // namespace stylestream
