// Copyright (c)  2026  stylestream authors
// Licensed under the Apache License, Version 2.0

#pragma once

#include <cmath>
#include <vector>

#include "stylestream/tensor.hpp"

namespace stylestream {

// Decoupled weight decay Adam. Parameters without a gradient this step are
// skipped entirely.
template <typename T>
class AdamW {
 public:
  explicit AdamW(std::vector<Tensor<T>> params, double lr = 1e-3,
                 double weight_decay = 0.01, double beta1 = 0.9,
                 double beta2 = 0.999, double eps = 1e-8)
      : params_(std::move(params)),
        lr_(lr),
        wd_(weight_decay),
        beta1_(beta1),
        beta2_(beta2),
        eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(params_[i].numel(), 0.0);
      v_[i].assign(params_[i].numel(), 0.0);
    }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int64_t steps() const { return t_; }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, double(t_));
    const double bc2 = 1.0 - std::pow(beta2_, double(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (!p.has_grad()) continue;
      const auto& g = p.grad();
      std::vector<T> w = p.value();
      for (size_t j = 0; j < w.size(); ++j) {
        const double gj = double(g[j]);
        m_[i][j] = beta1_ * m_[i][j] + (1.0 - beta1_) * gj;
        v_[i][j] = beta2_ * v_[i][j] + (1.0 - beta2_) * gj * gj;
        const double mhat = m_[i][j] / bc1;
        const double vhat = v_[i][j] / bc2;
        w[j] = static_cast<T>(double(w[j]) -
                              lr_ * (mhat / (std::sqrt(vhat) + eps_) +
                                     wd_ * double(w[j])));
      }
      p.set_value(w);
      p.zero_grad();
    }
  }

 private:
  std::vector<Tensor<T>> params_;
  std::vector<std::vector<double>> m_, v_;
  double lr_, wd_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// Linear warmup to `peak`, cosine anneal to `floor_frac * peak`.
struct LrSchedule {
  double peak = 1e-3;
  int warmup = 100;
  int total = 1000;
  double floor_frac = 0.1;

  double at(int step) const {
    if (step < warmup) return peak * double(step + 1) / double(warmup);
    const double p = double(step - warmup) / double(std::max(1, total - warmup));
    const double c = 0.5 * (1.0 + std::cos(3.14159265358979323846 * std::min(1.0, p)));
    return peak * (floor_frac + (1.0 - floor_frac) * c);
  }
};

}  // namespace stylestream
