#include "crowdmac/model.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "crowdmac/errors.hpp"
#include "crowdmac/random.hpp"
#include "network.hpp"

namespace crowdmac {

using detail::Mat;

void ModelConfig::validate() const {
  grid.validate();
  if (obs_frames <= 0 || obs_frames >= grid.frames) {
    throw ParameterError("model: obs_frames must lie strictly between 0 and the window length");
  }
  if (obs_frames % grid.cube_t != 0) throw ParameterError("model: obs_frames must be a multiple of cube_t");
  if (embed_dim <= 0 || decoder_dim <= 0 || heads <= 0) throw ParameterError("model: dimensions must be positive");
  if (encoder_depth < 0 || decoder_depth < 0) throw ParameterError("model: depths must be >= 0");
  if (embed_dim % heads != 0) throw ParameterError("model: embed_dim must be divisible by heads");
  if (decoder_dim % heads != 0) throw ParameterError("model: decoder_dim must be divisible by heads");
  if (embed_dim % 2 != 0 || embed_dim < 6 || decoder_dim % 2 != 0 || decoder_dim < 6) {
    throw ParameterError("model: embed_dim and decoder_dim must be even and >= 6");
  }
  if (!(mlp_ratio > 0.0)) throw ParameterError("model: mlp_ratio must be positive");
}

int ModelConfig::mlp_hidden(int dim) const {
  return std::max(1, static_cast<int>(std::lround(dim * mlp_ratio)));
}

ParameterSet parameter_layout(const ModelConfig& config) {
  config.validate();
  std::vector<detail::TensorSpec> specs;
  detail::build_layout(config, &specs);
  ParameterSet out;
  for (const auto& s : specs) {
    out.tensors.push_back(
        {s.name, s.rows, s.cols, std::vector<float>(static_cast<std::size_t>(s.rows) * s.cols, 0.0f), s.decay});
  }
  return out;
}

ModelState init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  std::vector<detail::TensorSpec> specs;
  detail::build_layout(config, &specs);
  Rng rng(seed);
  ModelState state;
  state.config = config;
  for (const auto& s : specs) {
    Tensor t{s.name, s.rows, s.cols, std::vector<float>(static_cast<std::size_t>(s.rows) * s.cols, 0.0f), s.decay};
    switch (s.init) {
      case detail::Init::Xavier: {
        const double bound = std::sqrt(6.0 / (s.rows + s.cols));
        for (float& v : t.data) v = static_cast<float>((2.0 * uniform01(rng) - 1.0) * bound);
        break;
      }
      case detail::Init::Ones: std::fill(t.data.begin(), t.data.end(), 1.0f); break;
      case detail::Init::MaskToken:
        for (float& v : t.data) v = static_cast<float>(0.02 * standard_normal(rng));
        break;
      case detail::Init::Zeros: break;
    }
    state.params.tensors.push_back(std::move(t));
  }
  state.adam_m = state.params.zeros_like();
  state.adam_v = state.params.zeros_like();
  return state;
}

BasicTensor<double> position_embedding(const CubeGrid& grid, int dim) {
  grid.validate();
  if (dim < 6 || dim % 2 != 0) throw ParameterError("position_embedding: dim must be even and >= 6");
  const int pairs = dim / 2;
  // Channel pairs per axis (slice, block row, block column); spatial axes take the remainder.
  const int axis_pairs[3] = {pairs / 3, pairs / 3 + (pairs % 3 >= 1 ? 1 : 0), pairs / 3 + (pairs % 3 >= 2 ? 1 : 0)};

  BasicTensor<double> table{"pos_embed", grid.n_tokens(), dim,
                            std::vector<double>(static_cast<std::size_t>(grid.n_tokens()) * dim, 0.0), false};
  for (int r = 0; r < grid.n_temporal(); ++r) {
    for (int s = 0; s < grid.n_spatial(); ++s) {
      const int coords[3] = {r, s / grid.blocks_x(), s % grid.blocks_x()};
      const int row = grid.token_index(r, s);
      int offset = 0;
      for (int axis = 0; axis < 3; ++axis) {
        const int p = axis_pairs[axis];
        for (int k = 0; k < p; ++k) {
          const double omega = 1.0 / std::pow(10000.0, static_cast<double>(k) / p);
          const double angle = coords[axis] * omega;
          table.at(row, offset + k) = std::sin(angle);
          table.at(row, offset + p + k) = std::cos(angle);
        }
        offset += 2 * p;
      }
    }
  }
  return table;
}

namespace {

void check_tokens(const TokenField& tokens, const ModelConfig& config) {
  if (!(tokens.grid == config.grid)) throw ParameterError("token grid does not match the model geometry");
  if (tokens.values.size() != static_cast<std::size_t>(config.grid.n_tokens()) * config.token_len()) {
    throw ParameterError("token field size does not match the model geometry");
  }
}

void check_plan(const MaskPlan& plan, const ModelConfig& config) {
  if (plan.n_temporal != config.grid.n_temporal() || plan.n_spatial != config.grid.n_spatial() ||
      plan.mask.size() != static_cast<std::size_t>(config.grid.n_tokens())) {
    throw ParameterError("mask plan shape does not match the model geometry");
  }
}

TokenField to_field(const Mat<float>& m, const CubeGrid& grid) {
  TokenField out{grid, std::vector<float>(m.data(), m.data() + m.size())};
  return out;
}

template <class T>
double loss_and_gradient_impl(const ModelConfig& config, const BasicParameterSet<T>& params, const TokenField& tokens,
                              const MaskPlan& plan, BasicParameterSet<T>* grads) {
  check_tokens(tokens, config);
  check_plan(plan, config);
  const auto masked = plan.masked_indices();
  const auto visible = plan.visible_indices();
  if (masked.empty()) throw DegenerateMaskError("loss: mask plan has no masked tokens");
  if (visible.empty()) throw DegenerateMaskError("loss: mask plan has no visible tokens");

  const detail::Network<T> net(config, params);
  const Mat<T> target = detail::to_matrix<T>(tokens);
  detail::ForwardCache<T> cache;
  const Mat<T> out = net.forward(target, visible, masked, grads ? &cache : nullptr);

  const double count = static_cast<double>(masked.size()) * config.token_len();
  Mat<T> d_out = Mat<T>::Zero(out.rows(), out.cols());
  double sum = 0.0;
  for (const int m : masked) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      const double e = static_cast<double>(out(m, j)) - static_cast<double>(target(m, j));
      sum += e * e;
      d_out(m, j) = static_cast<T>(2.0 * e / count);
    }
  }
  const double loss = sum / count;
  if (!std::isfinite(loss)) throw NumericalError("non-finite reconstruction loss");
  if (grads) net.backward(cache, d_out, *grads);
  return loss;
}

}  // namespace

Tensor embed_tokens(const TokenField& tokens, const ModelState& state) {
  check_tokens(tokens, state.config);
  const detail::Layout layout = detail::build_layout(state.config, nullptr);
  const Tensor& w = state.params.tensors[static_cast<std::size_t>(layout.patch.w)];
  const Tensor& b = state.params.tensors[static_cast<std::size_t>(layout.patch.b)];
  const Mat<float> x = detail::to_matrix<float>(tokens);
  Mat<float> e = x * Eigen::Map<const Mat<float>>(w.data.data(), w.rows, w.cols);
  e.rowwise() += Eigen::Map<const Mat<float>>(b.data.data(), b.rows, b.cols).row(0);
  return Tensor{"embedding", static_cast<int>(e.rows()), static_cast<int>(e.cols()),
                std::vector<float>(e.data(), e.data() + e.size()), false};
}

TokenField forward_tokens(const TokenField& tokens, const MaskPlan& plan, const ModelState& state,
                          std::span<const int> visible_order) {
  check_tokens(tokens, state.config);
  check_plan(plan, state.config);
  std::vector<int> visible = plan.visible_indices();
  if (visible.empty()) throw DegenerateMaskError("forward: mask plan has no visible tokens");
  if (!visible_order.empty()) {
    std::vector<int> sorted(visible_order.begin(), visible_order.end());
    std::sort(sorted.begin(), sorted.end());
    if (sorted != visible) throw ParameterError("visible_order must be a permutation of the visible tokens");
    visible.assign(visible_order.begin(), visible_order.end());
  }
  const detail::Network<float> net(state.config, state.params);
  const Mat<float> out = net.forward(detail::to_matrix<float>(tokens), visible, plan.masked_indices(), nullptr);
  return to_field(out, state.config.grid);
}

TokenField forward(const DensitySequence& seq, const MaskPlan& plan, const ModelState& state) {
  return forward_tokens(cubify(seq, state.config.grid), plan, state);
}

double masked_mse_loss(const TokenField& recon, const TokenField& target, const MaskPlan& plan) {
  if (!(recon.grid == target.grid) || recon.values.size() != target.values.size()) {
    throw ParameterError("masked_mse_loss: reconstruction and target differ in shape");
  }
  if (plan.mask.size() != static_cast<std::size_t>(target.grid.n_tokens())) {
    throw ParameterError("masked_mse_loss: mask plan does not match the token grid");
  }
  const auto masked = plan.masked_indices();
  if (masked.empty()) throw DegenerateMaskError("masked_mse_loss: no masked tokens");
  double sum = 0.0;
  for (const int m : masked) {
    const auto a = recon.token(m);
    const auto b = target.token(m);
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double e = static_cast<double>(a[k]) - static_cast<double>(b[k]);
      sum += e * e;
    }
  }
  return sum / (static_cast<double>(masked.size()) * target.grid.token_len());
}

LossAndGradient loss_and_gradient(const ModelState& state, const TokenField& tokens, const MaskPlan& plan) {
  LossAndGradient out;
  out.grads = state.params.zeros_like();
  out.loss = loss_and_gradient_impl<float>(state.config, state.params, tokens, plan, &out.grads);
  return out;
}

double loss_and_gradient(const ModelConfig& config, const BasicParameterSet<double>& params, const TokenField& tokens,
                         const MaskPlan& plan, BasicParameterSet<double>* grads) {
  return loss_and_gradient_impl<double>(config, params, tokens, plan, grads);
}

DensitySequence predict_future(const DensitySequence& observed, const ModelState& state) {
  const ModelConfig& cfg = state.config;
  observed.check_shape();
  if (observed.length() != cfg.obs_frames || observed.height() != cfg.grid.height ||
      observed.width() != cfg.grid.width) {
    throw ParameterError("predict_future: expected " + std::to_string(cfg.obs_frames) + " frames of " +
                         std::to_string(cfg.grid.height) + "x" + std::to_string(cfg.grid.width) + ", got " +
                         std::to_string(observed.length()) + " of " + std::to_string(observed.height()) + "x" +
                         std::to_string(observed.width()));
  }
  DensitySequence full(cfg.grid.frames, cfg.grid.width, cfg.grid.height, observed.frame_interval);
  std::copy(observed.frames.begin(), observed.frames.end(), full.frames.begin());
  const MaskPlan plan = inference_mask(cfg.grid.n_temporal(), cfg.grid.n_spatial(), cfg.obs_slices());
  const DensitySequence recon = decubify(forward(full, plan, state), /*clamp=*/true);
  DensitySequence future = recon.slice(cfg.obs_frames, cfg.pred_frames());
  future.frame_interval = observed.frame_interval;
  return future;
}

}  // namespace crowdmac
