// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>

#include "stylestream/nn.hpp"
#include "stylestream/numerics.hpp"

using namespace stylestream;

namespace {

bool is_ninf(float v) { return std::isinf(v) && v < 0; }

// Reference mask enumeration straight from the definition:
// disallowed iff floor(k/len) > floor(q/len).
bool allowed_by_definition(int64_t q, int64_t k, int64_t len) {
  return k / len <= q / len;
}

}  // namespace

TEST_CASE("chunked-causal bias: degenerate and exact enumerations") {
  SUBCASE("chunk_len == T is full attention") {
    auto b = chunked_causal_bias<float>(4, 4);
    for (float v : b.mask.value()) CHECK(v == 0.0f);
  }
  SUBCASE("chunk_len == 1 is frame-causal") {
    auto b = chunked_causal_bias<float>(4, 1);
    for (int64_t q = 0; q < 4; ++q)
      for (int64_t k = 0; k < 4; ++k) {
        if (k <= q)
          CHECK(b.mask.at(q, k) == 0.0f);
        else
          CHECK(is_ninf(b.mask.at(q, k)));
      }
  }
  SUBCASE("T=6, chunk_len=3 matches the enumerated definition") {
    auto b = chunked_causal_bias<float>(6, 3);
    for (int64_t q = 0; q < 6; ++q)
      for (int64_t k = 0; k < 6; ++k)
        CHECK(is_ninf(b.mask.at(q, k)) == !allowed_by_definition(q, k, 3));
    // Spot checks: query 1 attends {0,1,2}; query 3 attends all of {0..5}.
    CHECK(b.mask.at(1, 2) == 0.0f);
    CHECK(is_ninf(b.mask.at(1, 3)));
    CHECK(b.mask.at(3, 5) == 0.0f);
  }
  SUBCASE("random shapes match the definition") {
    Rng rng(21);
    for (int rep = 0; rep < 25; ++rep) {
      const int64_t frames = rng.uniform_int(1, 40);
      const int64_t len = rng.uniform_int(1, 12);
      auto b = chunked_causal_bias<float>(frames, len);
      for (int64_t q = 0; q < frames; ++q)
        for (int64_t k = 0; k < frames; ++k)
          CHECK(is_ninf(b.mask.at(q, k)) == !allowed_by_definition(q, k, len));
    }
  }
}

TEST_CASE("alibi slopes follow the geometric schedule") {
  auto s4 = alibi_slope_schedule(4);
  REQUIRE(s4.size() == 4);
  CHECK(s4[0] == doctest::Approx(std::pow(2.0, -2.0)));
  CHECK(s4[1] == doctest::Approx(std::pow(2.0, -4.0)));
  CHECK(s4[2] == doctest::Approx(std::pow(2.0, -6.0)));
  CHECK(s4[3] == doctest::Approx(std::pow(2.0, -8.0)));
  auto s8 = alibi_slope_schedule(8);
  CHECK(s8[0] == doctest::Approx(std::pow(2.0, -1.0)));
}

TEST_CASE("alibi attention weight decays with key distance") {
  // Identical keys contribute constant content scores, so softmax of the
  // head bias row gives the attention weights directly.
  auto b = with_alibi(full_bias<float>(8), 4);
  for (int h = 0; h < 4; ++h) {
    auto probs = softmax_lastdim(b.head_bias(h));
    for (int64_t k = 1; k < 8; ++k)
      CHECK(probs.at(7, k) > probs.at(7, k - 1));  // closer to q=7 is larger
  }
}

TEST_CASE("multi-head attention basics") {
  Rng rng(22);
  ParamStore<float> ps;
  MultiHeadAttention<float> mha(ps, "attn", 16, 4, rng);

  SUBCASE("identical rows + full bias give identical output rows") {
    std::vector<float> row(16);
    for (auto& v : row) v = float(rng.uniform(-1, 1));
    std::vector<float> xs;
    for (int t = 0; t < 5; ++t) xs.insert(xs.end(), row.begin(), row.end());
    auto x = Tensor<float>::from_data({5, 16}, xs);
    auto out = mha(x, prepare_bias(full_bias<float>(5), 4));
    for (int t = 1; t < 5; ++t)
      for (int c = 0; c < 16; ++c)
        CHECK(out.at(t, c) == doctest::Approx(out.at(0, c)).epsilon(1e-5));
  }

  SUBCASE("chunked-causal: chunk outputs invariant to future perturbation") {
    auto x = Tensor<float>::randn({9, 16}, rng);
    auto bias = prepare_bias(chunked_causal_bias<float>(9, 3), 4);
    auto y0 = mha(x, bias);
    auto xv = x.value();
    for (int t = 6; t < 9; ++t)
      for (int c = 0; c < 16; ++c) xv[t * 16 + c] += 3.0f;
    auto y1 = mha(Tensor<float>::from_data({9, 16}, xv), bias);
    for (int t = 0; t < 6; ++t)
      for (int c = 0; c < 16; ++c) CHECK(y0.at(t, c) == y1.at(t, c));
  }

  SUBCASE("single head, single frame reduces to value projection") {
    ParamStore<float> ps1;
    MultiHeadAttention<float> one(ps1, "one", 8, 1, rng);
    auto x = Tensor<float>::randn({1, 8}, rng);
    auto out = one(x, prepare_bias(full_bias<float>(1), 1));
    auto expect = one.wo(one.wv(x));
    for (int c = 0; c < 8; ++c)
      CHECK(out.at(0, c) == doctest::Approx(expect.at(0, c)).epsilon(1e-6));
  }

  SUBCASE("all -inf row is rejected") {
    auto bad = full_bias<float>(3);
    auto mv = bad.mask.value();
    for (int k = 0; k < 3; ++k)
      mv[1 * 3 + k] = -std::numeric_limits<float>::infinity();
    bad.mask = Tensor<float>::from_data({3, 3}, mv);
    CHECK_THROWS_AS(prepare_bias(bad, 4), std::invalid_argument);
  }
}

TEST_CASE("adaLN-Zero DiT block") {
  Rng rng(23);
  ParamStore<float> ps;
  DiTBlock<float> block(ps, "dit", 16, 4, 32, rng);
  auto x = Tensor<float>::randn({6, 16}, rng);
  auto bias = prepare_bias(full_bias<float>(6), 4);

  SUBCASE("identity map at initialization, exactly") {
    auto cond = Tensor<float>::randn({1, 16}, rng);
    auto y = block(x, cond, bias);
    for (int64_t i = 0; i < x.numel(); ++i)
      CHECK(y.value()[i] == x.value()[i]);
  }

  SUBCASE("zero conditioning stays finite once biases are trained") {
    // Simulate a trained modulation bias.
    std::vector<float> mb(6 * 16);
    for (auto& v : mb) v = float(rng.uniform(-0.5, 0.5));
    block.modulation.b.set_value(mb);
    auto y = block(x, Tensor<float>::zeros({1, 16}), bias);
    for (float v : y.value()) CHECK(std::isfinite(v));
  }

  SUBCASE("conditioning perturbation changes output once gates are nonzero") {
    std::vector<float> mw(16 * 96);
    for (auto& v : mw) v = float(rng.uniform(-0.2, 0.2));
    block.modulation.w.set_value(mw);
    auto c0 = Tensor<float>::randn({1, 16}, rng);
    auto cv = c0.value();
    for (auto& v : cv) v += 0.5f;
    auto y0 = block(x, c0, bias);
    auto y1 = block(x, Tensor<float>::from_data({1, 16}, cv), bias);
    double diff = 0;
    for (int64_t i = 0; i < y0.numel(); ++i)
      diff += std::abs(double(y0.value()[i]) - double(y1.value()[i]));
    CHECK(diff > 0.0);
  }
}

TEST_CASE("sinusoidal time embedding") {
  SUBCASE("t=0 gives alternating 0/1") {
    auto e = sinusoidal_time_embed<float>(0.0, 8);
    for (int i = 0; i < 8; i += 2) {
      CHECK(e.value()[i] == 0.0f);
      CHECK(e.value()[i + 1] == 1.0f);
    }
  }
  SUBCASE("norm is sqrt(dim/2) for any t") {
    for (double t : {0.0, 0.13, 0.5, 0.99, 1.0}) {
      auto e = sinusoidal_time_embed<float>(t, 64);
      double n = 0;
      for (float v : e.value()) n += double(v) * v;
      CHECK(std::sqrt(n) == doctest::Approx(std::sqrt(32.0)).epsilon(1e-5));
    }
  }
  SUBCASE("embeddings for distant t differ") {
    auto a = sinusoidal_time_embed<float>(0.1, 32);
    auto b = sinusoidal_time_embed<float>(0.9, 32);
    double d = 0;
    for (int i = 0; i < 32; ++i) {
      double x = double(a.value()[i]) - double(b.value()[i]);
      d += x * x;
    }
    CHECK(std::sqrt(d) > 0.5);
  }
  SUBCASE("t outside [0,1] rejected") {
    CHECK_THROWS_AS(sinusoidal_time_embed<float>(-0.1, 8),
                    std::invalid_argument);
    CHECK_THROWS_AS(sinusoidal_time_embed<float>(1.1, 8),
                    std::invalid_argument);
  }
}

TEST_CASE("conformer block") {
  Rng rng(24);
  ParamStore<float> ps;
  ConformerBlock<float> block(ps, "conf", 16, 4, 32, 7, rng);

  SUBCASE("output shape equals input shape") {
    for (int64_t frames : {1, 5, 23}) {
      auto x = Tensor<float>::randn({frames, 16}, rng);
      auto bias = prepare_bias(full_bias<float>(frames), 4);
      CHECK(block(x, bias).shape() == Shape({frames, 16}));
    }
  }

  SUBCASE("zero input with freshly initialized (zero-bias) layers gives zero") {
    auto x = Tensor<float>::zeros({6, 16});
    auto y = block(x, prepare_bias(full_bias<float>(6), 4));
    for (float v : y.value()) CHECK(v == 0.0f);
  }

  SUBCASE("chunk causality holds end-to-end through a stack") {
    ParamStore<float> ps2;
    ConformerBlock<float> b2(ps2, "conf2", 16, 4, 32, 7, rng);
    auto bias = prepare_bias(
        with_alibi(chunked_causal_bias<float>(12, 4), 4), 4);
    auto x = Tensor<float>::randn({12, 16}, rng);
    auto run = [&](const Tensor<float>& in) { return b2(block(in, bias), bias); };
    auto y0 = run(x);
    auto xv = x.value();
    for (int t = 8; t < 12; ++t)
      for (int c = 0; c < 16; ++c) xv[t * 16 + c] = float(rng.uniform(-9, 9));
    auto y1 = run(Tensor<float>::from_data({12, 16}, xv));
    for (int t = 0; t < 8; ++t)
      for (int c = 0; c < 16; ++c)
        CHECK(std::abs(y0.at(t, c) - y1.at(t, c)) <= 1e-6f);
  }
}

TEST_CASE("gradients flow through attention and conformer stacks") {
  Rng rng(25);
  ParamStore<double> ps;
  ConformerBlock<double> block(ps, "c", 8, 2, 16, 3, rng);
  auto x = Tensor<double>::randn({5, 8}, rng);
  auto bias = prepare_bias(with_alibi(chunked_causal_bias<double>(5, 2), 2), 2);
  auto target = Tensor<double>::randn({5, 8}, rng);

  auto loss = mse(block(x, bias), target);
  backward(loss);
  // Every parameter must have received a gradient.
  int with_grad = 0;
  for (auto& [name, t] : ps.entries())
    if (t.has_grad()) ++with_grad;
  CHECK(with_grad == int(ps.entries().size()));

  // Finite-difference spot check on the depthwise kernel.
  auto err = grad_check<double>(
      [&](const Tensor<double>& w) {
        ConformerBlock<double> b2 = block;
        b2.dw_w = w;
        return mse(b2(x, bias), target);
      },
      block.dw_w, 1e-5);
  CHECK(err < 1e-4);
}
