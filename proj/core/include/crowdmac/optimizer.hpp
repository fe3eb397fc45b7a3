#pragma once

#include <cstdint>

#include "crowdmac/tensor.hpp"

namespace crowdmac {

struct AdamWOptions {
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

// Linear warmup to `peak` over warmup_steps, then cosine decay reaching 0 at the last step
// (total_steps - 1). Steps are 0-based.
double learning_rate(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double peak);

// One decoupled-weight-decay Adam update. `step` is the 1-based update count used for bias
// correction. Gradients are checked for finiteness before anything is modified; a
// NumericalError names the first offending tensor.
void adamw_update(ParameterSet& params, const ParameterSet& grads, ParameterSet& m, ParameterSet& v,
                  std::int64_t step, double lr, const AdamWOptions& options);

}  // namespace crowdmac
