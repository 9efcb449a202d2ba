#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "octforce/error.hpp"
#include "octforce/tensor.hpp"

namespace octforce {

struct AdamConfig {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
};

/// One Adam update of `theta` in place; `t` is the 1-based step count.
inline void adam_update(std::span<double> theta, std::span<const double> grad, AdamMoments& state,
                        const AdamConfig& cfg, std::size_t t, const std::string& name = "parameter") {
  require(t >= 1, ErrorKind::Contract, "Adam step count starts at 1");
  require(grad.size() == theta.size(), ErrorKind::Shape, name + ": gradient size mismatch");
  if (state.m.empty()) {
    state.m.assign(theta.size(), 0.0);
    state.v.assign(theta.size(), 0.0);
  }
  require(state.m.size() == theta.size() && state.v.size() == theta.size(), ErrorKind::Shape,
          name + ": optimizer state size mismatch");
  for (double g : grad)
    require(std::isfinite(g), ErrorKind::NonFinite, "non-finite gradient in " + name);

  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    theta[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
  }
}

class Adam {
 public:
  Adam(std::vector<nn::Parameter> params, AdamConfig cfg = {})
      : params_(std::move(params)), cfg_(cfg), moments_(params_.size()) {}

  /// Parameters that never received a gradient are skipped.
  void step() {
    ++t_;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      if (p.tensor.grad().empty()) continue;
      adam_update(p.tensor.data(), p.tensor.grad(), moments_[i], cfg_, t_, p.name);
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.tensor.zero_grad();
  }

  std::size_t steps() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  std::vector<nn::Parameter> params_;
  AdamConfig cfg_;
  std::vector<AdamMoments> moments_;
  std::size_t t_ = 0;
};

}  // namespace octforce
