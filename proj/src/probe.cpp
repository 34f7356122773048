// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0

#include "stylestream/probe.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "stylestream/train.hpp"

namespace stylestream {

std::vector<float> pool_segment(const Tensor<float>& seg) {
  const int64_t frames = seg.shape()[0], dim = seg.shape()[1];
  std::vector<float> out(2 * dim);
  for (int64_t c = 0; c < dim; ++c) {
    double mu = 0;
    for (int64_t t = 0; t < frames; ++t) mu += seg.at(t, c);
    mu /= double(frames);
    double var = 0;
    for (int64_t t = 0; t < frames; ++t) {
      const double d = seg.at(t, c) - mu;
      var += d * d;
    }
    var /= double(frames);
    out[c] = float(mu);
    out[dim + c] = float(std::sqrt(std::max(var, 1e-8)));
  }
  return out;
}

Probe::Probe(int in_dim, int hidden, int classes, uint64_t seed)
    : classes_(classes) {
  Rng rng(seed);
  l1_ = Linear<float>(params_, "probe.l1", in_dim, hidden, rng);
  l2_ = Linear<float>(params_, "probe.l2", hidden, classes, rng);
  in_mean_.assign(in_dim, 0.0f);
  in_std_.assign(in_dim, 1.0f);
}

Tensor<float> Probe::logits_for(const Tensor<float>& x) const {
  return l2_(gelu(l1_(x)));
}

int Probe::predict(const std::vector<float>& pooled) const {
  NoGradGuard ng;
  std::vector<float> z(pooled.size());
  for (size_t i = 0; i < pooled.size(); ++i)
    z[i] = (pooled[i] - in_mean_[i]) / in_std_[i];
  auto logits = logits_for(
      Tensor<float>::from_data({1, int64_t(z.size())}, std::move(z)));
  int best = 0;
  for (int c = 1; c < classes_; ++c)
    if (logits.at(0, c) > logits.at(0, best)) best = c;
  return best;
}

void Probe::fit(const std::vector<std::vector<float>>& pooled,
                const std::vector<int>& labels, const ProbeConfig& cfg) {
  const int64_t n = int64_t(pooled.size());
  const int64_t d = int64_t(pooled[0].size());
  // Input standardization from the training set.
  for (int64_t c = 0; c < d; ++c) {
    double mu = 0;
    for (const auto& row : pooled) mu += row[c];
    mu /= double(n);
    double var = 0;
    for (const auto& row : pooled) var += (row[c] - mu) * (row[c] - mu);
    in_mean_[c] = float(mu);
    in_std_[c] = float(std::sqrt(std::max(var / double(n), 1e-8)));
  }
  std::vector<float> xd(n * d);
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < d; ++c)
      xd[i * d + c] = (pooled[i][c] - in_mean_[c]) / in_std_[c];
  Tensor<float> x = Tensor<float>::from_data({n, d}, std::move(xd));
  std::vector<int32_t> y(labels.begin(), labels.end());

  AdamW<float> opt(params_.tensors(), cfg.lr, cfg.weight_decay);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    auto loss = cross_entropy(logits_for(x), y);
    backward(loss);
    opt.step();
  }
}

std::pair<Probe, ProbeResult> train_probe(
    const std::vector<Tensor<float>>& segments, const std::vector<int>& labels,
    const std::vector<int>& train_idx, const std::vector<int>& test_idx,
    int classes, const std::string& feature_name, const std::string& task,
    const ProbeConfig& cfg) {
  if (segments.size() != labels.size())
    throw std::invalid_argument("train_probe: segment/label count mismatch");
  std::set<int> distinct(labels.begin(), labels.end());
  if (distinct.size() < 2)
    throw std::invalid_argument("train_probe: single-class labels");

  std::vector<std::vector<float>> pooled(segments.size());
  for (size_t i = 0; i < segments.size(); ++i)
    pooled[i] = pool_segment(segments[i]);

  std::vector<std::vector<float>> train_x;
  std::vector<int> train_y;
  for (int i : train_idx) {
    train_x.push_back(pooled[i]);
    train_y.push_back(labels[i]);
  }

  Probe probe(int(pooled[0].size()), cfg.hidden, classes, cfg.seed);
  probe.fit(train_x, train_y, cfg);

  int correct = 0;
  for (int i : test_idx)
    if (probe.predict(pooled[i]) == labels[i]) ++correct;

  ProbeResult r;
  r.feature_name = feature_name;
  r.task = task;
  r.accuracy = test_idx.empty() ? 0.0 : double(correct) / double(test_idx.size());
  r.chance = 1.0 / double(classes);
  return {std::move(probe), r};
}

}  // namespace stylestream
