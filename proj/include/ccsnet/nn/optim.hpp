#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ccsnet/nn/tensor.hpp"

namespace ccsnet::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  /// Apply weight decay directly to the parameters (AdamW) instead of adding
  /// it to the gradient.
  bool decoupled = false;

  void validate() const {
    if (!(lr > 0.0)) throw ConfigError("learning rate must be positive, got " + std::to_string(lr));
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
      throw ConfigError("Adam betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw ConfigError("Adam epsilon must be positive");
    if (!(weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  }
};

/// Adam with bias correction. Moment estimates are kept in double regardless
/// of the parameter precision.
template <class T>
class Adam {
 public:
  Adam(std::vector<Tensor<T>> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    cfg_.validate();
    for (const auto& p : params_) {
      m_.emplace_back(p.numel(), 0.0);
      v_.emplace_back(p.numel(), 0.0);
    }
  }

  void step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      auto& p = params_[k];
      if (!p.has_grad()) continue;
      auto w = p.data();
      auto g = p.grad();
      auto& m = m_[k];
      auto& v = v_[k];
      for (std::size_t i = 0; i < w.size(); ++i) {
        double gi = static_cast<double>(g[i]);
        double wi = static_cast<double>(w[i]);
        if (cfg_.weight_decay > 0.0) {
          if (cfg_.decoupled)
            wi -= cfg_.lr * cfg_.weight_decay * wi;
          else
            gi += cfg_.weight_decay * wi;
        }
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
        wi -= cfg_.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
        w[i] = static_cast<T>(wi);
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  /// For learning-rate schedules; moments and step count are kept.
  void set_lr(double lr) {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("learning rate must be positive, got " + std::to_string(lr));
    cfg_.lr = lr;
  }

  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<Tensor<T>> params_;
  AdamConfig cfg_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

}  // namespace ccsnet::nn
