#include "crowdmac/train.hpp"

#include <numeric>
#include <string>

#include "crowdmac/errors.hpp"
#include "crowdmac/random.hpp"

namespace crowdmac {

double TrainConfig::peak_lr() const {
  return scale_lr_by_batch ? base_lr * static_cast<double>(batch_size) / 256.0 : base_lr;
}

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw ParameterError("train.base_lr must be positive");
  if (!(weight_decay >= 0.0)) throw ParameterError("train.weight_decay must be >= 0");
  if (epochs < 1) throw ParameterError("train.epochs must be >= 1");
  if (warmup_epochs < 0) throw ParameterError("train.warmup_epochs must be >= 0");
  if (batch_size < 1) throw ParameterError("train.batch_size must be >= 1");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ParameterError("train: betas must lie in [0, 1)");
  augment.validate();
}

LrSchedule make_schedule(const TrainConfig& cfg, std::size_t dataset_size) {
  const auto per_epoch = static_cast<std::int64_t>((dataset_size + cfg.batch_size - 1) / cfg.batch_size);
  return {per_epoch * cfg.epochs, per_epoch * cfg.warmup_epochs, cfg.peak_lr()};
}

double backward_and_step(ModelState& state, const ParameterSet& grads, const TrainConfig& cfg,
                         const LrSchedule& schedule) {
  const double lr = schedule.at(state.step);
  AdamWOptions opts{cfg.beta1, cfg.beta2, 1e-8, cfg.weight_decay};
  adamw_update(state.params, grads, state.adam_m, state.adam_v, state.step + 1, lr, opts);
  ++state.step;
  return lr;
}

TrainResult train(std::span<const DensitySequence> dataset, const ModelConfig& model_cfg, const TrainConfig& train_cfg,
                  const TDMConfig& tdm_cfg, const EpochCallback& on_epoch) {
  return train(dataset, init_model(model_cfg, train_cfg.seed), train_cfg, tdm_cfg, on_epoch);
}

TrainResult train(std::span<const DensitySequence> dataset, ModelState state, const TrainConfig& train_cfg,
                  const TDMConfig& tdm_cfg, const EpochCallback& on_epoch) {
  train_cfg.validate();
  tdm_cfg.validate();
  state.config.validate();
  if (dataset.empty()) throw ParameterError("train: empty dataset");
  if (tdm_cfg.task_weights[static_cast<int>(MaskTask::Interpolation)] > 0.0 && tdm_cfg.lambda_max == 0.0 &&
      tdm_cfg.tm_function != TmFunction::Constant) {
    throw ParameterError("train: interpolation with lambda_max = 0 never masks a token");
  }

  const ModelConfig& cfg = state.config;
  const CubeGrid& grid = cfg.grid;
  const LrSchedule schedule = make_schedule(train_cfg, dataset.size());

  TrainResult result;
  std::vector<std::size_t> order(dataset.size());
  for (int epoch = state.epoch; epoch < train_cfg.epochs; ++epoch) {
    Rng rng(derive_seed(train_cfg.seed, static_cast<std::uint64_t>(epoch)));
    EpochStats stats;
    stats.epoch = epoch;
    double lambda = sample_lambda(rng, tdm_cfg.lambda_max);

    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);

    double loss_sum = 0.0;
    for (std::size_t first = 0; first < order.size(); first += static_cast<std::size_t>(train_cfg.batch_size)) {
      if (tdm_cfg.lambda_per_batch && first > 0) lambda = sample_lambda(rng, tdm_cfg.lambda_max);
      const std::size_t last = std::min(order.size(), first + static_cast<std::size_t>(train_cfg.batch_size));
      ParameterSet grads = state.params.zeros_like();
      int valid = 0;
      for (std::size_t i = first; i < last; ++i) {
        const MaskTask task = sample_task(rng, tdm_cfg.task_weights);
        const DensitySequence seq = augment(dataset[order[i]], rng, train_cfg.augment);
        const TokenField tokens = cubify(seq, grid);
        MaskPlan plan;
        try {
          plan = build_mask_plan(task, accumulated_density(seq, grid), tdm_cfg, lambda, cfg.obs_slices(), rng);
        } catch (const DegenerateMaskError&) {
          ++stats.skipped;
          continue;
        }
        const LossAndGradient lg = loss_and_gradient(state, tokens, plan);
        grads.add_scaled(lg.grads, 1.0f);
        loss_sum += lg.loss;
        ++valid;
      }
      if (valid == 0) continue;
      for (auto& t : grads.tensors) {
        for (float& g : t.data) g /= static_cast<float>(valid);
      }
      stats.samples += valid;
      stats.lr = backward_and_step(state, grads, train_cfg, schedule);
    }
    stats.lambda = lambda;
    stats.mean_loss = stats.samples > 0 ? loss_sum / stats.samples : 0.0;
    state.epoch = epoch + 1;
    result.curve.push_back(stats);
    if (on_epoch) on_epoch(stats, state);
  }
  result.state = std::move(state);
  return result;
}

}  // namespace crowdmac
