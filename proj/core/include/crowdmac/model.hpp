#pragma once

#include <cstdint>
#include <span>

#include "crowdmac/density.hpp"
#include "crowdmac/masking.hpp"
#include "crowdmac/tensor.hpp"
#include "crowdmac/tokenizer.hpp"

namespace crowdmac {

// Masked-autoencoder geometry and transformer sizes. The encoder runs at embed_dim over
// visible tokens; the (narrower) decoder runs at decoder_dim over every token position.
struct ModelConfig {
  CubeGrid grid;
  int obs_frames = 8;
  int embed_dim = 64;
  int encoder_depth = 4;
  int decoder_dim = 32;
  int decoder_depth = 2;
  int heads = 4;
  double mlp_ratio = 4.0;

  void validate() const;

  int token_len() const { return grid.token_len(); }
  int obs_slices() const { return obs_frames / grid.cube_t; }
  int pred_frames() const { return grid.frames - obs_frames; }
  int mlp_hidden(int dim) const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// Parameters plus AdamW moments. adam_m / adam_v mirror params tensor-for-tensor.
struct ModelState {
  ModelConfig config;
  ParameterSet params;
  ParameterSet adam_m;
  ParameterSet adam_v;
  std::int64_t step = 0;
  int epoch = 0;

  friend bool operator==(const ModelState&, const ModelState&) = default;
};

// Xavier-uniform weights, zero biases, unit norm gains, N(0, 0.02) mask token.
ModelState init_model(const ModelConfig& config, std::uint64_t seed);

// Parameter names and shapes for a config, zero-filled.
ParameterSet parameter_layout(const ModelConfig& config);

// Fixed sinusoidal table (n_tokens x dim) factored over (slice, block row, block column).
// dim must be even and >= 6.
BasicTensor<double> position_embedding(const CubeGrid& grid, int dim);

// Per-token affine projection of the raw cube values (n_tokens x embed_dim).
Tensor embed_tokens(const TokenField& tokens, const ModelState& state);

// Reconstruction of every token. The encoder sees only visible tokens; masked positions
// enter the decoder as the shared mask token.
TokenField forward(const DensitySequence& seq, const MaskPlan& plan, const ModelState& state);

// As forward, on tokens. `visible_order` permutes the order in which visible tokens are fed
// to the encoder; empty means ascending token index.
TokenField forward_tokens(const TokenField& tokens, const MaskPlan& plan, const ModelState& state,
                          std::span<const int> visible_order = {});

// Mean squared error over the values of masked tokens only.
double masked_mse_loss(const TokenField& recon, const TokenField& target, const MaskPlan& plan);

struct LossAndGradient {
  double loss = 0.0;
  ParameterSet grads;
};

// Masked MSE of reconstructing `tokens` under `plan`, with reverse-mode gradients.
LossAndGradient loss_and_gradient(const ModelState& state, const TokenField& tokens, const MaskPlan& plan);

// Double-precision variant on an arbitrary parameter set with the state's layout.
double loss_and_gradient(const ModelConfig& config, const BasicParameterSet<double>& params, const TokenField& tokens,
                         const MaskPlan& plan, BasicParameterSet<double>* grads);

// Forecast T_pred frames from T_obs observed frames: zero-filled future, inference mask,
// reconstruction clamped to [0, 1].
DensitySequence predict_future(const DensitySequence& observed, const ModelState& state);

}  // namespace crowdmac
