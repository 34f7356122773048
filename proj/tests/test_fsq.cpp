// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <set>

#include "stylestream/fsq.hpp"
#include "stylestream/numerics.hpp"

using namespace stylestream;

TEST_CASE("codebook sizes match the level products") {
  CHECK(codebook_size(FsqLevels({5, 3, 3})) == 45);
  CHECK(codebook_size(FsqLevels({7, 5, 5, 5, 5})) == 4375);
  CHECK(codebook_size(FsqLevels({3, 3, 3})) == 27);
  CHECK(codebook_size(FsqLevels({5, 3})) == 15);
}

TEST_CASE("levels validate: V_i odd, >= 3, and V_i = 2K_i + 1") {
  CHECK_THROWS_AS(FsqLevels({4, 3}), std::invalid_argument);
  CHECK_THROWS_AS(FsqLevels({1}), std::invalid_argument);
  CHECK_THROWS_AS(FsqLevels(std::vector<int>{}), std::invalid_argument);
  for (auto& lv : {FsqLevels({5, 3, 3}), FsqLevels({7, 5, 5, 5, 5})})
    for (int i = 0; i < lv.dims(); ++i)
      CHECK(lv.levels[i] == 2 * lv.half[i] + 1);
}

TEST_CASE("zero vector maps to the center code") {
  FsqLevels lv({5, 3, 3});
  auto [code, q] = quantize({0.0, 0.0, 0.0}, lv);
  for (int8_t c : code.integers) CHECK(c == 0);
  // Center index = sum K_i * prod_{j<i} V_j = 2*1 + 1*5 + 1*15 = 22.
  CHECK(code.index == 22);
  for (double v : q) CHECK(v == 0.0);
}

TEST_CASE("saturation: large inputs clamp to +-K_i") {
  FsqLevels lv({5, 3, 3});
  auto [code, q] = quantize({50.0, -50.0, 1000.0}, lv);
  CHECK(q[0] == 2.0);
  CHECK(q[1] == -1.0);
  CHECK(q[2] == 1.0);
}

TEST_CASE("quantizer lattice: integers within range, distinct codes <= V") {
  FsqLevels lv({5, 3, 3});
  Rng rng(31);
  std::set<int64_t> seen;
  for (int i = 0; i < 10000; ++i) {
    std::vector<double> z(3);
    for (auto& v : z) v = rng.normal() * 3.0;  // wide variance
    auto [code, q] = quantize(z, lv);
    for (int d = 0; d < 3; ++d) {
      CHECK(q[d] == std::floor(q[d]));  // exact integer
      CHECK(std::abs(q[d]) <= lv.half[d]);
      CHECK(code.integers[d] == int8_t(q[d]));
    }
    seen.insert(code.index);
    CHECK(code.index >= 0);
    CHECK(code.index < 45);
  }
  CHECK(seen.size() <= 45);
  CHECK(seen.size() == 45);  // wide-variance inputs cover the full codebook
}

TEST_CASE("index bijection holds exhaustively for all V <= 4375") {
  for (auto& lv : {FsqLevels({5, 3, 3}), FsqLevels({3, 3, 3}),
                   FsqLevels({5, 3}), FsqLevels({7, 5, 5, 5, 5})}) {
    const int64_t v = codebook_size(lv);
    for (int64_t idx = 0; idx < v; ++idx) {
      auto ints = index_to_code(lv, idx);
      for (int d = 0; d < lv.dims(); ++d)
        CHECK(std::abs(int(ints[d])) <= lv.half[d]);
      CHECK(code_to_index(lv, ints) == idx);
    }
  }
}

TEST_CASE("bottleneck: STE gradient matches finite differences on the "
          "tanh-bounded path") {
  Rng rng(32);
  FsqLevels lv({5, 3, 3});
  ParamStore<double> ps;
  FsqBottleneck<double> bn(ps, "bn", 8, lv, rng);
  auto f_pre = Tensor<double>::randn({4, 8}, rng);
  auto target = Tensor<double>::randn({4, 8}, rng);

  // Soft path (rounding replaced by identity): the STE backward equals this
  // path's backward by construction, and finite differences are valid here.
  auto run = [&](const Tensor<double>& w) {
    FsqBottleneck<double> b2 = bn;
    b2.down.w = w;
    return mse(b2.forward(f_pre, /*hard=*/false).f_post, target);
  };
  CHECK(grad_check<double>(run, bn.down.w, 1e-5) < 1e-4);

  auto run_in = [&](const Tensor<double>& x) {
    return mse(bn.forward(x, /*hard=*/false).f_post, target);
  };
  CHECK(grad_check<double>(run_in, f_pre, 1e-5) < 1e-4);

  // Hard path still produces gradients (straight-through).
  auto x2 = Tensor<double>::from_data(f_pre.shape(), f_pre.value(), true);
  backward(mse(bn.forward(x2, true).f_post, target));
  CHECK(x2.has_grad());
}

TEST_CASE("bottleneck code entropy is bounded by log2(V)") {
  Rng rng(33);
  FsqLevels lv({5, 3, 3});
  ParamStore<float> ps;
  FsqBottleneck<float> bn(ps, "bn", 16, lv, rng);
  auto f_pre = Tensor<float>::randn({500, 16}, rng, 2.0f);
  auto out = bn.forward(f_pre);
  std::map<int64_t, int> hist;
  for (const auto& c : out.codes) hist[c.index]++;
  double h = 0;
  for (auto& [_, n] : hist) {
    const double p = double(n) / double(out.codes.size());
    h -= p * std::log2(p);
  }
  CHECK(h <= std::log2(45.0) + 1e-9);
}

TEST_CASE("identical frames quantize to identical codes") {
  Rng rng(34);
  FsqLevels lv({5, 3, 3});
  ParamStore<float> ps;
  FsqBottleneck<float> bn(ps, "bn", 8, lv, rng);
  std::vector<float> row(8);
  for (auto& v : row) v = float(rng.uniform(-1, 1));
  std::vector<float> data;
  for (int t = 0; t < 6; ++t) data.insert(data.end(), row.begin(), row.end());
  auto out = bn.forward(Tensor<float>::from_data({6, 8}, data));
  for (int t = 1; t < 6; ++t) CHECK(out.codes[t].index == out.codes[0].index);
}

TEST_CASE("code dump round-trips through SSFQ format") {
  FsqLevels lv({5, 3, 3});
  Rng rng(35);
  std::vector<FsqCode> codes;
  for (int t = 0; t < 17; ++t) {
    std::vector<double> z(3);
    for (auto& v : z) v = rng.normal();
    codes.push_back(quantize(z, lv).first);
  }
  save_codes("t.ssfq", codes);
  auto r = load_codes("t.ssfq");
  REQUIRE(r.size() == codes.size());
  for (size_t t = 0; t < r.size(); ++t)
    for (int d = 0; d < 3; ++d) CHECK(r[t][d] == codes[t].integers[d]);
  std::remove("t.ssfq");
}
