#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "gdpr/errors.hpp"

namespace gdpr::nn {

struct AdamConfig {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename T>
struct AdamMoments {
  std::vector<T> first;
  std::vector<T> second;
};

// One bias-corrected Adam update of `params` in place. `step` is the 1-based
// index of this update; moments start at zero.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamMoments<T>& moments,
               std::int64_t step, const AdamConfig& config) {
  if (grads.size() != params.size()) throw ShapeError("adam_step: gradient length mismatch");
  if (moments.first.empty() && moments.second.empty()) {
    moments.first.assign(params.size(), T{0});
    moments.second.assign(params.size(), T{0});
  }
  if (moments.first.size() != params.size() || moments.second.size() != params.size()) {
    throw ShapeError("adam_step: moment length mismatch");
  }
  if (step < 1) throw StateError("adam_step: step index must start at 1");
  const double b1 = config.beta1;
  const double b2 = config.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    const double m = b1 * moments.first[i] + (1.0 - b1) * g;
    const double v = b2 * moments.second[i] + (1.0 - b2) * g * g;
    moments.first[i] = static_cast<T>(m);
    moments.second[i] = static_cast<T>(v);
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    params[i] = static_cast<T>(params[i] - config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon));
  }
}

// Adam over an ordered list of parameter tensors sharing one step counter.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamConfig config = {}) : config_(config) {}

  void step(const std::vector<std::span<T>>& params, const std::vector<std::span<const T>>& grads) {
    if (params.size() != grads.size()) throw ShapeError("Adam::step: tensor count mismatch");
    if (moments_.empty()) moments_.resize(params.size());
    if (moments_.size() != params.size()) throw ShapeError("Adam::step: tensor count changed");
    ++steps_;
    for (std::size_t i = 0; i < params.size(); ++i) {
      adam_step(params[i], grads[i], moments_[i], steps_, config_);
    }
  }

  std::int64_t steps() const noexcept { return steps_; }
  const AdamConfig& config() const noexcept { return config_; }

 private:
  AdamConfig config_;
  std::int64_t steps_ = 0;
  std::vector<AdamMoments<T>> moments_;
};

}  // namespace gdpr::nn
