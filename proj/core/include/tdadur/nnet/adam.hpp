#pragma once

#include <cstdint>

#include "tdadur/nnet/tensor.hpp"

namespace tdadur::nn {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::int64_t step = 0;
  ParameterSet m;
  ParameterSet v;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// One bias-corrected Adam update. With `float32_storage`, parameters and
// moments are rounded to float after the update so that a checkpoint holds
// the training state exactly.
void adam_step(ParameterSet& params, const GradientSet& grads, AdamState& state, double lr,
               bool float32_storage = false, const AdamConfig& config = {});

}  // namespace tdadur::nn
