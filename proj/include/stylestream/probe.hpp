// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0
//
// Probe classifiers over frozen features: mean+std pooling over frames
// followed by a 2-layer MLP. Probe accuracy on held-out data measures how
// much of a factor (style, content) survives in a representation; lower
// style accuracy on content features means stronger disentanglement.

#pragma once

#include <string>
#include <vector>

#include "stylestream/nn.hpp"

namespace stylestream {

struct ProbeConfig {
  int hidden = 64;
  int epochs = 400;
  double lr = 3e-3;
  double weight_decay = 1e-4;
  uint64_t seed = 17;
};

struct ProbeResult {
  std::string feature_name;
  std::string task;  // "style" or "content"
  double accuracy = 0.0;
  double chance = 0.0;
};

// Mean+std pooling over the rows of a [T, D] segment.
std::vector<float> pool_segment(const Tensor<float>& seg);

class Probe {
 public:
  Probe() = default;
  Probe(int in_dim, int hidden, int classes, uint64_t seed);

  int predict(const std::vector<float>& pooled) const;
  int classes() const { return classes_; }

  // Full-batch training on pooled vectors.
  void fit(const std::vector<std::vector<float>>& pooled,
           const std::vector<int>& labels, const ProbeConfig& cfg);

 private:
  Tensor<float> logits_for(const Tensor<float>& x) const;
  ParamStore<float> params_;
  Linear<float> l1_, l2_;
  std::vector<float> in_mean_, in_std_;  // input standardization
  int classes_ = 0;
};

// Trains on segments[train_idx], reports held-out accuracy on
// segments[test_idx]. Rejects single-class label sets.
std::pair<Probe, ProbeResult> train_probe(
    const std::vector<Tensor<float>>& segments, const std::vector<int>& labels,
    const std::vector<int>& train_idx, const std::vector<int>& test_idx,
    int classes, const std::string& feature_name, const std::string& task,
    const ProbeConfig& cfg = {});

}  // namespace stylestream
