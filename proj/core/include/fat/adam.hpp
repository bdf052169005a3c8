#pragma once

#include <cstdint>

#include "fat/nn.hpp"

namespace fat {

// Bias-corrected Adam. Moment accumulators mirror the model parameter shapes.
struct AdamState {
  ModelGrads m;  // first moments
  ModelGrads v;  // second moments
  std::int64_t step = 0;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

AdamState init_adam(const MlpModel& model, double lr = 1e-3, double beta1 = 0.9,
                    double beta2 = 0.999, double eps = 1e-8);

void adam_step(MlpModel& model, const ModelGrads& grads, AdamState& state);

}  // namespace fat
