#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <vector>

#include "shazam/core/autodiff.hpp"
#include "shazam/core/error.hpp"

namespace shazam::tasks {

/// Cosine annealing from lr_max at step 0 to lr_min at total_steps.
inline double cosine_lr(double lr_max, double lr_min, std::size_t step, std::size_t total_steps) {
  if (total_steps == 0) return lr_max;
  const double p = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps));
  return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * p));
}

class ReduceOnPlateau {
 public:
  ReduceOnPlateau(double lr, double factor = 0.5, std::size_t patience = 5, double min_lr = 0.0)
      : lr_(lr), factor_(factor), patience_(patience), min_lr_(min_lr) {}

  /// Feeds one validation loss; returns the learning rate for the next epoch.
  double step(double metric) {
    if (metric < best_) {
      best_ = metric;
      bad_ = 0;
    } else if (++bad_ > patience_) {
      lr_ = std::max(min_lr_, lr_ * factor_);
      bad_ = 0;
    }
    return lr_;
  }

  double lr() const { return lr_; }

 private:
  double lr_;
  double factor_;
  std::size_t patience_;
  double min_lr_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t bad_ = 0;
};

/// Decoupled weight decay: param -= lr * wd * param, independent of the gradient step.
inline void decoupled_weight_update(Matrix& param, double lr, double weight_decay) {
  param *= (1.0 - lr * weight_decay);
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  /// false gives plain Adam with L2 folded into the gradient.
  bool decoupled = true;
};

class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (Parameter* p : params_) {
      m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
      v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    }
  }

  void zero_grad() {
    for (Parameter* p : params_) p->zero_grad();
  }

  void step(double lr) {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter& p = *params_[k];
      Matrix g = p.grad;
      if (!cfg_.decoupled && cfg_.weight_decay > 0.0) g += cfg_.weight_decay * p.value;
      require(g.allFinite(), ErrorKind::NumericError, "non-finite gradient for " + p.name);
      m_[k] = cfg_.beta1 * m_[k] + (1.0 - cfg_.beta1) * g;
      v_[k] = cfg_.beta2 * v_[k] + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      if (cfg_.decoupled && cfg_.weight_decay > 0.0) decoupled_weight_update(p.value, lr, cfg_.weight_decay);
      p.value.array() -= lr * (m_[k].array() / c1) / ((v_[k].array() / c2).sqrt() + cfg_.eps);
    }
  }

  std::size_t steps() const { return t_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Matrix> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace shazam::tasks
