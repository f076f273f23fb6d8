#pragma once

#include <cstdint>

#include "pairdis/tensor.hpp"

namespace pairdis {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct AdamState {
  AdamConfig hyper;
  NamedTensors m;
  NamedTensors v;
  std::int64_t t = 0;
};

// Bias-corrected Adam with decoupled weight decay:
//   p <- p - lr * wd * p, then p <- p - lr * m_hat / (sqrt(v_hat) + eps).
// `grads` must carry exactly the keys and shapes of `params`. Any NaN/Inf
// gradient raises poisoned-gradient before anything is modified.
void adam_step(NamedTensors& params, const NamedTensors& grads, AdamState& state);

}  // namespace pairdis
