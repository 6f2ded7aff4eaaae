#include "tdadur/nnet/adam.hpp"

#include <cmath>

#include "tdadur/error.hpp"

namespace tdadur::nn {

void adam_step(ParameterSet& params, const GradientSet& grads, AdamState& state, double lr,
               bool float32_storage, const AdamConfig& config) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (auto& [name, p] : params) {
    auto g = grads.find(name);
    if (g == grads.end()) continue;
    if (!g->second.same_shape(p)) {
      throw StructuralError("adam_step: gradient for '" + name + "' has shape " + g->second.shape_string() +
                            ", parameter has " + p.shape_string());
    }
    auto& m = state.m.try_emplace(name, Tensor::zeros_like(p)).first->second;
    auto& v = state.v.try_emplace(name, Tensor::zeros_like(p)).first->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = g->second[i];
      m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * gi;
      v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + config.eps);
    }
    if (float32_storage) {
      round_to_float(p);
      round_to_float(m);
      round_to_float(v);
    }
  }
}

}  // namespace tdadur::nn
