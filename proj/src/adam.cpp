#include "pairdis/adam.hpp"

#include <cmath>

#include "pairdis/error.hpp"

namespace pairdis {

void adam_step(NamedTensors& params, const NamedTensors& grads, AdamState& state) {
  require(params.size() == grads.size(), ErrorKind::shape_error, "adam_step: parameter/gradient count mismatch");
  for (const auto& [name, p] : params) {
    auto it = grads.find(name);
    require(it != grads.end(), ErrorKind::shape_error, "adam_step: missing gradient for " + name);
    require(it->second.shape() == p.shape(), ErrorKind::shape_error,
            "adam_step: " + name + " shape " + shape_str(p.shape()) + " vs gradient " + shape_str(it->second.shape()));
    if (!it->second.all_finite()) fail(ErrorKind::poisoned_gradient, "non-finite gradient for " + name);
  }

  const AdamConfig& h = state.hyper;
  state.t += 1;
  const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    const Tensor& g = grads.at(name);
    Tensor& m = state.m.try_emplace(name, p.shape()).first->second;
    Tensor& v = state.v.try_emplace(name, p.shape()).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      p[i] -= h.lr * h.weight_decay * p[i];
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      p[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

}  // namespace pairdis
