#include "tsa/adam.hpp"

#include <cmath>

#include "tsa/errors.hpp"

namespace tsa {

AdamState::AdamState(const ParamMap& params, AdamConfig config) : config_(config) {
  for (const auto& [name, tensor] : params) {
    Moments mo;
    mo.m.assign(tensor.size(), 0.0);
    mo.v.assign(tensor.size(), 0.0);
    moments_.emplace(name, std::move(mo));
  }
}

void AdamState::step(const ParamMap& params) {
  if (params.size() != moments_.size()) {
    throw UsageError("adam_step: parameter set changed since state was created");
  }
  double clip_factor = 1.0;
  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& [name, tensor] : params) {
      if (!tensor.requires_grad()) {
        throw UsageError("adam_step: parameter '" + name + "' has no gradient");
      }
      for (double g : tensor.grad()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (norm > config_.clip_norm) clip_factor = config_.clip_norm / norm;
  }

  ++step_;
  double lr = config_.lr;
  if (config_.warmup_steps > 0 && step_ < config_.warmup_steps) {
    lr *= static_cast<double>(step_) / static_cast<double>(config_.warmup_steps);
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));

  for (const auto& [name, tensor] : params) {
    auto it = moments_.find(name);
    if (it == moments_.end()) {
      throw UsageError("adam_step: unknown parameter '" + name + "'");
    }
    if (!tensor.requires_grad()) {
      throw UsageError("adam_step: parameter '" + name + "' has no gradient");
    }
    const auto& grad = tensor.grad();
    auto& value = tensor.values();
    auto& mo = it->second;
    if (grad.size() != mo.m.size()) {
      throw UsageError("adam_step: parameter '" + name + "' changed size");
    }
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i] * clip_factor;
      mo.m[i] = config_.beta1 * mo.m[i] + (1.0 - config_.beta1) * g;
      mo.v[i] = config_.beta2 * mo.v[i] + (1.0 - config_.beta2) * g * g;
      const double m_hat = mo.m[i] / bc1;
      const double v_hat = mo.v[i] / bc2;
      value[i] -= lr * m_hat / (std::sqrt(v_hat) + config_.eps);
    }
  }
}

}  // namespace tsa
