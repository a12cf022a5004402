#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "tsa/tensor.hpp"

namespace tsa {

// Named parameter set; std::map gives a stable iteration order for
// serialization, optimizer state, and gradient reports.
using ParamMap = std::map<std::string, Tensor>;

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  long warmup_steps = 0;  // 0 disables the linear warmup
  double clip_norm = 0.0;  // 0 disables global-norm gradient clipping
};

// Adam with bias correction. Moments are kept per named parameter; the
// update reads gradients but never clears them (callers zero between steps).
class AdamState {
 public:
  AdamState(const ParamMap& params, AdamConfig config);

  void step(const ParamMap& params);
  long step_count() const { return step_; }
  const AdamConfig& config() const { return config_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  AdamConfig config_;
  long step_ = 0;
  std::map<std::string, Moments> moments_;
};

// Spec-shaped convenience wrapper around AdamState::step.
inline void adam_step(const ParamMap& params, AdamState& state) { state.step(params); }

}  // namespace tsa
