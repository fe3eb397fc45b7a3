#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "crowdmac/augment.hpp"
#include "crowdmac/masking.hpp"
#include "crowdmac/model.hpp"
#include "crowdmac/optimizer.hpp"

namespace crowdmac {

struct TrainConfig {
  double base_lr = 5e-4;
  // Peak learning rate is base_lr * batch_size / 256 when set.
  bool scale_lr_by_batch = true;
  double weight_decay = 1e-5;
  int epochs = 200;
  int warmup_epochs = 10;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.95;
  AugmentPolicy augment;

  double peak_lr() const;
  void validate() const;
};

struct LrSchedule {
  std::int64_t total_steps = 0;
  std::int64_t warmup_steps = 0;
  double peak = 0.0;

  double at(std::int64_t step) const { return learning_rate(step, total_steps, warmup_steps, peak); }
};

LrSchedule make_schedule(const TrainConfig& cfg, std::size_t dataset_size);

// Applies one AdamW step with the scheduled rate for state.step, then advances the step
// counter. Returns the rate used. Throws NumericalError on a non-finite gradient.
double backward_and_step(ModelState& state, const ParameterSet& grads, const TrainConfig& cfg,
                         const LrSchedule& schedule);

struct EpochStats {
  int epoch = 0;
  double mean_loss = 0.0;
  double lr = 0.0;
  double lambda = 0.0;
  int samples = 0;
  int skipped = 0;  // samples whose mask plan was degenerate
};

struct TrainResult {
  ModelState state;
  std::vector<EpochStats> curve;
};

// Called after every epoch with the state as of the end of that epoch.
using EpochCallback = std::function<void(const EpochStats&, const ModelState&)>;

// Per epoch: draw lambda, shuffle. Per sample: draw a task, augment, build its mask plan,
// accumulate the masked-MSE gradient; one optimizer step per batch. Every epoch draws from
// its own stream derived from (seed, epoch), so a resumed run matches an uninterrupted one.
TrainResult train(std::span<const DensitySequence> dataset, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const TDMConfig& tdm_cfg, const EpochCallback& on_epoch = {});

// Continues from state.epoch up to train_cfg.epochs.
TrainResult train(std::span<const DensitySequence> dataset, ModelState state, const TrainConfig& train_cfg,
                  const TDMConfig& tdm_cfg, const EpochCallback& on_epoch = {});

}  // namespace crowdmac
