// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <unordered_map>
#include <unordered_set>

#include "stylestream/checkpoint.hpp"
#include "stylestream/numerics.hpp"

using namespace stylestream;

namespace {

Tensor<double> randt(Shape shape, Rng& rng, double stddev = 1.0,
                     bool rg = false) {
  return Tensor<double>::randn(std::move(shape), rng, stddev, rg);
}

// Scalarizes an arbitrary tensor with a fixed random weighting so gradient
// checks exercise non-uniform output gradients.
Tensor<double> weighted(const Tensor<double>& x, Rng& rng) {
  Tensor<double> w = Tensor<double>::randn(x.shape(), rng);
  return sum(mul(x, w));
}

}  // namespace

TEST_CASE("matmul shape algebra and values") {
  Rng rng(1);
  auto a = randt({2, 3}, rng);
  auto b = randt({3, 4}, rng);
  auto c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 4});
  double acc = 0;
  for (int k = 0; k < 3; ++k) acc += a.at(1, k) * b.at(k, 2);
  CHECK(c.at(1, 2) == doctest::Approx(acc).epsilon(1e-12));
  CHECK_THROWS_AS(matmul(a, a), std::invalid_argument);
}

TEST_CASE("softmax of equal values is uniform and sums to one") {
  auto x = Tensor<double>::full({2, 5}, 3.7);
  auto y = softmax_lastdim(x);
  for (int j = 0; j < 5; ++j) CHECK(y.at(0, j) == doctest::Approx(0.2));
  double s = 0;
  for (int j = 0; j < 5; ++j) s += y.at(1, j);
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("causal conv1d output depends only on past frames") {
  Rng rng(2);
  auto w = randt({3, 4, 5}, rng);
  auto b = randt({5}, rng);
  auto x = randt({10, 4}, rng);
  auto y = causal_conv1d(x, w, b);
  CHECK(y.shape() == Shape{10, 5});
  // Perturb frame t+1 = 7; frames <= 6 must be bit-identical.
  auto xv = x.value();
  for (int c = 0; c < 4; ++c) xv[7 * 4 + c] += 10.0;
  auto y2 = causal_conv1d(Tensor<double>::from_data({10, 4}, xv), w, b);
  for (int t = 0; t <= 6; ++t)
    for (int c = 0; c < 5; ++c) CHECK(y.at(t, c) == y2.at(t, c));
  bool changed = false;
  for (int c = 0; c < 5; ++c) changed = changed || y.at(7, c) != y2.at(7, c);
  CHECK(changed);
}

TEST_CASE("backward of sum gives all-ones gradient") {
  Rng rng(3);
  auto x = randt({3, 4}, rng, 1.0, true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("mse gradient convention: d/dv mse(v, 0) = 2v") {
  auto x = Tensor<double>::from_data({1}, {1.7}, true);
  backward(mse(x, Tensor<double>::zeros({1})));
  CHECK(x.grad()[0] == doctest::Approx(2.0 * 1.7).epsilon(1e-12));
}

TEST_CASE("non-scalar loss is rejected") {
  Rng rng(4);
  auto x = randt({2, 2}, rng, 1.0, true);
  CHECK_THROWS_AS(backward(mul(x, x)), std::invalid_argument);
}

TEST_CASE("3-layer MLP gradients match finite differences") {
  Rng rng(5);
  auto x = randt({4, 6}, rng);
  auto w1 = randt({6, 8}, rng, 0.5);
  auto w2 = randt({8, 8}, rng, 0.5);
  auto w3 = randt({8, 1}, rng, 0.5);
  auto b1 = randt({8}, rng, 0.1);
  auto target = randt({4, 1}, rng);
  auto run = [&](const Tensor<double>& w1v, const Tensor<double>& w2v,
                 const Tensor<double>& w3v) {
    auto h1 = gelu(add(matmul(x, w1v), b1));
    auto h2 = silu(matmul(h1, w2v));
    return mse(matmul(h2, w3v), target);
  };
  auto e1 = grad_check<double>(
      [&](const Tensor<double>& w) { return run(w, w2, w3); }, w1, 1e-5);
  auto e2 = grad_check<double>(
      [&](const Tensor<double>& w) { return run(w1, w, w3); }, w2, 1e-5);
  auto e3 = grad_check<double>(
      [&](const Tensor<double>& w) { return run(w1, w2, w); }, w3, 1e-5);
  CHECK(e1 < 1e-4);
  CHECK(e2 < 1e-4);
  CHECK(e3 < 1e-4);
}

TEST_CASE("grad_check on x^2 at x=3") {
  auto x = Tensor<double>::from_data({1}, {3.0});
  auto err = grad_check<double>(
      [](const Tensor<double>& v) { return mul(v, v); }, x, 1e-5);
  CHECK(err < 1e-6);
}

TEST_CASE("grad_check flags an intentionally wrong backward rule") {
  Rng rng(6);
  auto x = randt({3, 3}, rng);
  // Forward is tanh but backward pretends the derivative is 1.
  auto err = grad_check<double>(
      [](const Tensor<double>& v) {
        auto y = custom_unary<double>(
            v, [](double a) { return std::tanh(a); },
            [](double) { return 1.0; });
        return sum(y);
      },
      x, 1e-5);
  CHECK(err > 1e-2);
}

TEST_CASE("backward is linear: grads of summed losses equal summed grads") {
  Rng rng(7);
  auto base = randt({4, 4}, rng);
  auto w = randt({4, 4}, rng);

  auto loss_a = [&](const Tensor<double>& x) { return mean(mul(x, x)); };
  auto loss_b = [&](const Tensor<double>& x) {
    return mse(matmul(x, w), Tensor<double>::zeros({4, 4}));
  };

  auto xa = Tensor<double>::from_data({4, 4}, base.value(), true);
  backward(add(loss_a(xa), loss_b(xa)));
  auto combined = xa.grad();

  auto xb = Tensor<double>::from_data({4, 4}, base.value(), true);
  backward(loss_a(xb));
  backward(loss_b(xb));
  auto separate = xb.grad();

  for (size_t i = 0; i < combined.size(); ++i)
    CHECK(std::abs(combined[i] - separate[i]) < 1e-10);
}

TEST_CASE("forward_op is deterministic and rejects bad inputs") {
  Rng rng(8);
  auto a = randt({3, 3}, rng);
  auto r1 = forward_op(OpKind::kGelu, std::vector<Tensor<double>>{a});
  auto r2 = forward_op(OpKind::kGelu, std::vector<Tensor<double>>{a});
  CHECK(r1.value() == r2.value());

  auto bad = Tensor<double>::from_data(
      {2}, {1.0, std::numeric_limits<double>::quiet_NaN()});
  CHECK_THROWS_AS(forward_op(OpKind::kSilu, std::vector<Tensor<double>>{bad}),
                  std::invalid_argument);
  auto b = randt({2, 2}, rng);
  CHECK_THROWS_AS(forward_op(OpKind::kMatmul, std::vector<Tensor<double>>{a, b}),
                  std::invalid_argument);
}

// Finite-difference sweep over every registered op kind on random shapes.
TEST_CASE("all op kinds pass gradient checks on 10 random shapes") {
  Rng rng(9);
  auto rand_dim = [&] { return int64_t(rng.uniform_int(1, 6)); };

  for (OpKind kind : kAllOpKinds) {
    for (int rep = 0; rep < 10; ++rep) {
      const int64_t m = rand_dim(), n = rand_dim(), k = rand_dim();
      OpAttrs attrs;
      std::vector<Tensor<double>> fixed;
      Shape xshape;
      std::function<Tensor<double>(const Tensor<double>&)> f;
      switch (kind) {
        case OpKind::kMatmul: {
          xshape = {m, k};
          auto b = randt({k, n}, rng);
          f = [=](const Tensor<double>& x) {
            Rng wr(1000 + rep);
            return weighted(matmul(x, b), wr);
          };
          break;
        }
        case OpKind::kAdd:
        case OpKind::kMul: {
          xshape = {m, n};
          // Alternate broadcast classes across reps.
          Shape bshape = rep % 3 == 0   ? Shape{m, n}
                         : rep % 3 == 1 ? Shape{1, n}
                                        : Shape{m, 1};
          auto b = randt(bshape, rng);
          f = [=](const Tensor<double>& x) {
            Rng wr(2000 + rep);
            auto y = kind == OpKind::kAdd ? add(x, b) : mul(x, b);
            return weighted(y, wr);
          };
          break;
        }
        case OpKind::kScale: {
          xshape = {m, n};
          attrs.scale = rng.uniform(-2.0, 2.0);
          f = [=](const Tensor<double>& x) {
            Rng wr(3000 + rep);
            return weighted(scale(x, attrs.scale), wr);
          };
          break;
        }
        case OpKind::kSoftmaxLastDim: {
          xshape = {m, n};
          f = [=](const Tensor<double>& x) {
            Rng wr(4000 + rep);
            return weighted(softmax_lastdim(x), wr);
          };
          break;
        }
        case OpKind::kLayerNorm: {
          xshape = {m, n + 1};  // avoid n=1 degenerate rows w/ zero variance
          auto gamma = randt({n + 1}, rng);
          auto beta = randt({n + 1}, rng);
          f = [=](const Tensor<double>& x) {
            Rng wr(5000 + rep);
            return weighted(layernorm(x, gamma, beta), wr);
          };
          break;
        }
        case OpKind::kGelu:
        case OpKind::kSilu: {
          xshape = {m, n};
          f = [=](const Tensor<double>& x) {
            Rng wr(6000 + rep);
            return weighted(kind == OpKind::kGelu ? gelu(x) : silu(x), wr);
          };
          break;
        }
        case OpKind::kCausalConv1d: {
          const int64_t frames = m + 2, cin = n, cout = k;
          xshape = {frames, cin};
          auto w = randt({3, cin, cout}, rng, 0.5);
          auto b = randt({cout}, rng, 0.5);
          f = [=](const Tensor<double>& x) {
            Rng wr(7000 + rep);
            return weighted(causal_conv1d(x, w, b), wr);
          };
          break;
        }
        case OpKind::kEmbedLookup: {
          xshape = {m + 1, n};  // table
          std::vector<int32_t> ids(k);
          for (auto& id : ids)
            id = static_cast<int32_t>(rng.uniform_int(0, m));
          f = [=](const Tensor<double>& x) {
            Rng wr(8000 + rep);
            return weighted(embed_lookup(x, ids), wr);
          };
          break;
        }
        case OpKind::kConcat: {
          xshape = {m, n};
          auto other = randt({k, n}, rng);
          f = [=](const Tensor<double>& x) {
            Rng wr(9000 + rep);
            return weighted(concat<double>({x, other}, 0), wr);
          };
          break;
        }
        case OpKind::kSlice: {
          xshape = {m + 2, n};
          f = [=](const Tensor<double>& x) {
            Rng wr(10000 + rep);
            return weighted(slice(x, 0, 1, m), wr);
          };
          break;
        }
        case OpKind::kTranspose: {
          xshape = {m, n};
          f = [=](const Tensor<double>& x) {
            Rng wr(11000 + rep);
            return weighted(transpose(x), wr);
          };
          break;
        }
        case OpKind::kMean: {
          xshape = {m, n};
          f = [](const Tensor<double>& x) { return mean(x); };
          break;
        }
        case OpKind::kSum: {
          xshape = {m, n};
          f = [](const Tensor<double>& x) { return sum(x); };
          break;
        }
        case OpKind::kMse: {
          xshape = {m, n};
          auto b = randt({m, n}, rng);
          f = [=](const Tensor<double>& x) { return mse(x, b); };
          break;
        }
        case OpKind::kCrossEntropy: {
          const int64_t classes = n + 1;
          xshape = {m, classes};
          std::vector<int32_t> ids(m);
          for (auto& id : ids)
            id = static_cast<int32_t>(rng.uniform_int(0, classes - 1));
          ids[0] = -1;  // one ignored row when m > 1
          if (m == 1) ids[0] = 0;
          f = [=](const Tensor<double>& x) {
            return cross_entropy(x, ids, -1);
          };
          break;
        }
      }
      auto x = randt(xshape, rng);
      double err = grad_check<double>(f, x, 1e-5);
      INFO("op ", op_kind_name(kind), " rep ", rep);
      CHECK(err < 1e-4);
    }
  }
}

TEST_CASE("compute graph is acyclic and visits each node once") {
  Rng rng(10);
  auto x = randt({3, 3}, rng, 1.0, true);
  auto h = mul(x, x);
  auto loss = add(sum(h), mean(h));  // shared subgraph
  auto g = trace_graph(loss);
  std::unordered_set<const TensorNode<double>*> seen;
  for (auto& n : g.order) CHECK(seen.insert(n.get()).second);
  // Inputs precede consumers.
  std::unordered_map<const TensorNode<double>*, size_t> pos;
  for (size_t i = 0; i < g.order.size(); ++i) pos[g.order[i].get()] = i;
  for (auto& n : g.order)
    for (auto& in : n->inputs)
      if (pos.count(in.get())) CHECK(pos[in.get()] < pos[n.get()]);
}

TEST_CASE("round_ste forward rounds half away from zero, grad passes") {
  auto x = Tensor<double>::from_data({5}, {0.5, -0.5, 1.49, -2.5, 0.0}, true);
  auto y = round_ste(x);
  CHECK(y.value() == std::vector<double>{1.0, -1.0, 1.0, -3.0, 0.0});
  backward(sum(y));
  for (double g : x.grad()) CHECK(g == 1.0);
}

TEST_CASE("checkpoint round-trips named tensors bit-exactly") {
  TensorMap m;
  m["a.weight"] = {{2, 3}, {1.f, 2.f, 3.f, 4.f, 5.f, 6.f}};
  m["b"] = {{4}, {0.25f, -0.5f, 1e-7f, 3e8f}};
  const std::string path = "ckpt_test.ssck";
  save_checkpoint(path, m);
  auto r = load_checkpoint(path);
  REQUIRE(r.size() == 2);
  CHECK(r["a.weight"].shape == Shape{2, 3});
  CHECK(r["a.weight"].data == m["a.weight"].data);
  CHECK(r["b"].data == m["b"].data);
  std::remove(path.c_str());
}
