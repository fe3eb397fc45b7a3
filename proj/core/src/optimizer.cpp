#include "crowdmac/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "crowdmac/errors.hpp"

namespace crowdmac {

double learning_rate(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double peak) {
  if (total_steps <= 0) return 0.0;
  step = std::clamp<std::int64_t>(step, 0, total_steps - 1);
  warmup_steps = std::clamp<std::int64_t>(warmup_steps, 0, total_steps - 1);
  if (step < warmup_steps) {
    return peak * static_cast<double>(step + 1) / static_cast<double>(warmup_steps);
  }
  const std::int64_t decay_steps = total_steps - 1 - warmup_steps;
  if (decay_steps <= 0) return 0.0;
  const double progress = static_cast<double>(step - warmup_steps) / static_cast<double>(decay_steps);
  return 0.5 * peak * (1.0 + std::cos(std::numbers::pi * progress));
}

void adamw_update(ParameterSet& params, const ParameterSet& grads, ParameterSet& m, ParameterSet& v,
                  std::int64_t step, double lr, const AdamWOptions& options) {
  if (grads.tensors.size() != params.tensors.size() || m.tensors.size() != params.tensors.size() ||
      v.tensors.size() != params.tensors.size()) {
    throw ParameterError("adamw_update: parameter, gradient and moment sets differ in layout");
  }
  if (step < 1) throw ParameterError("adamw_update: step is 1-based");
  for (const auto& g : grads.tensors) {
    for (std::size_t k = 0; k < g.data.size(); ++k) {
      if (!std::isfinite(g.data[k])) {
        throw NumericalError("non-finite gradient in parameter '" + g.name + "' at element " + std::to_string(k));
      }
    }
  }

  const double b1 = options.beta1;
  const double b2 = options.beta2;
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(step));
  for (std::size_t i = 0; i < params.tensors.size(); ++i) {
    Tensor& p = params.tensors[i];
    const Tensor& g = grads.tensors[i];
    Tensor& mi = m.tensors[i];
    Tensor& vi = v.tensors[i];
    const double decay = p.decay ? lr * options.weight_decay : 0.0;
    for (std::size_t k = 0; k < p.data.size(); ++k) {
      const double gk = g.data[k];
      const double mk = b1 * mi.data[k] + (1.0 - b1) * gk;
      const double vk = b2 * vi.data[k] + (1.0 - b2) * gk * gk;
      mi.data[k] = static_cast<float>(mk);
      vi.data[k] = static_cast<float>(vk);
      const double update = (mk / correction1) / (std::sqrt(vk / correction2) + options.eps);
      p.data[k] = static_cast<float>(p.data[k] - decay * p.data[k] - lr * update);
    }
  }
}

}  // namespace crowdmac
