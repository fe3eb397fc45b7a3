#include "network.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "crowdmac/errors.hpp"

namespace crowdmac::detail {

namespace {

constexpr double kNormEps = 1e-6;

template <class T>
Eigen::Map<const Mat<T>> view(const BasicParameterSet<T>& p, int index) {
  const auto& t = p.tensors[static_cast<std::size_t>(index)];
  return Eigen::Map<const Mat<T>>(t.data.data(), t.rows, t.cols);
}

template <class T>
Eigen::Map<Mat<T>> view(BasicParameterSet<T>& p, int index) {
  auto& t = p.tensors[static_cast<std::size_t>(index)];
  return Eigen::Map<Mat<T>>(t.data.data(), t.rows, t.cols);
}

// Column sums into aligned storage. Reducing straight into a Map lets Eigen pick packet or
// scalar paths by the destination address, which makes results allocation-dependent.
template <class Derived>
Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> column_sums(const Eigen::MatrixBase<Derived>& m) {
  Eigen::Matrix<typename Derived::Scalar, 1, Eigen::Dynamic> out = m.colwise().sum();
  return out;
}

template <class T>
Mat<T> linear(const Mat<T>& x, const BasicParameterSet<T>& p, const LinearIdx& idx) {
  Mat<T> y = x * view(p, idx.w);
  y.rowwise() += view(p, idx.b).row(0);
  return y;
}

// Returns dL/dx and accumulates dL/dW, dL/db.
template <class T>
Mat<T> linear_backward(const Mat<T>& x, const Mat<T>& dy, const BasicParameterSet<T>& p, const LinearIdx& idx,
                       BasicParameterSet<T>& g) {
  view(g, idx.w).noalias() += x.transpose() * dy;
  view(g, idx.b).row(0) += column_sums(dy);
  return dy * view(p, idx.w).transpose();
}

template <class T>
Mat<T> layer_norm(const Mat<T>& x, const BasicParameterSet<T>& p, const NormIdx& idx, Mat<T>& hat, ColVec<T>& rstd) {
  const ColVec<T> mean = x.rowwise().mean();
  Mat<T> centered = x.colwise() - mean;
  const ColVec<T> var = centered.array().square().rowwise().mean();
  rstd = (var.array() + static_cast<T>(kNormEps)).rsqrt();
  hat = centered.array().colwise() * rstd.array();
  Mat<T> y = hat.array().rowwise() * view(p, idx.gain).row(0).array();
  y.rowwise() += view(p, idx.bias).row(0);
  return y;
}

template <class T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const Mat<T>& hat, const ColVec<T>& rstd, const BasicParameterSet<T>& p,
                           const NormIdx& idx, BasicParameterSet<T>& g) {
  view(g, idx.gain).row(0) += column_sums((dy.array() * hat.array()).matrix());
  view(g, idx.bias).row(0) += column_sums(dy);
  const Mat<T> dhat = dy.array().rowwise() * view(p, idx.gain).row(0).array();
  const ColVec<T> mean_dhat = dhat.rowwise().mean();
  const ColVec<T> mean_dhat_hat = (dhat.array() * hat.array()).rowwise().mean();
  Mat<T> dx = (dhat.colwise() - mean_dhat).array() - hat.array().colwise() * mean_dhat_hat.array();
  dx.array().colwise() *= rstd.array();
  return dx;
}

template <class T>
T gelu(T x) {
  return static_cast<T>(0.5) * x * (static_cast<T>(1) + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2)));
}

template <class T>
T gelu_grad(T x) {
  const T cdf = static_cast<T>(0.5) * (static_cast<T>(1) + std::erf(x * static_cast<T>(std::numbers::sqrt2 / 2)));
  const T pdf = std::exp(static_cast<T>(-0.5) * x * x) * static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
  return cdf + x * pdf;
}

template <class T>
void softmax_rows(Mat<T>& s) {
  const ColVec<T> top = s.rowwise().maxCoeff();
  s = (s.colwise() - top).array().exp();
  const ColVec<T> sum = s.rowwise().sum();
  s.array().colwise() /= sum.array();
}

template <class T>
Mat<T> table_as(const BasicTensor<double>& t) {
  Mat<T> m(t.rows, t.cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(t.data[static_cast<std::size_t>(i)]);
  return m;
}

}  // namespace

Layout build_layout(const ModelConfig& config, std::vector<TensorSpec>* specs) {
  Layout layout;
  int next = 0;
  const auto add = [&](std::string name, int rows, int cols, bool decay, Init init) {
    if (specs) specs->push_back({std::move(name), rows, cols, decay, init});
    return next++;
  };
  const auto add_linear = [&](const std::string& name, int in, int out) {
    LinearIdx idx;
    idx.w = add(name + ".weight", in, out, true, Init::Xavier);
    idx.b = add(name + ".bias", 1, out, false, Init::Zeros);
    return idx;
  };
  const auto add_norm = [&](const std::string& name, int dim) {
    NormIdx idx;
    idx.gain = add(name + ".weight", 1, dim, false, Init::Ones);
    idx.bias = add(name + ".bias", 1, dim, false, Init::Zeros);
    return idx;
  };
  const auto add_block = [&](const std::string& name, int dim, int hidden) {
    BlockIdx b;
    b.ln1 = add_norm(name + ".norm1", dim);
    b.qkv = add_linear(name + ".attn.qkv", dim, 3 * dim);
    b.proj = add_linear(name + ".attn.proj", dim, dim);
    b.ln2 = add_norm(name + ".norm2", dim);
    b.fc1 = add_linear(name + ".mlp.fc1", dim, hidden);
    b.fc2 = add_linear(name + ".mlp.fc2", hidden, dim);
    return b;
  };

  const int f = config.embed_dim;
  const int d = config.decoder_dim;
  layout.patch = add_linear("patch_embed.proj", config.token_len(), f);
  for (int i = 0; i < config.encoder_depth; ++i) {
    layout.encoder.push_back(add_block("encoder.blocks." + std::to_string(i), f, config.mlp_hidden(f)));
  }
  layout.encoder_norm = add_norm("encoder.norm", f);
  layout.decoder_embed = add_linear("decoder_embed", f, d);
  layout.mask_token = add("mask_token", 1, d, false, Init::MaskToken);
  for (int i = 0; i < config.decoder_depth; ++i) {
    layout.decoder.push_back(add_block("decoder.blocks." + std::to_string(i), d, config.mlp_hidden(d)));
  }
  layout.decoder_norm = add_norm("decoder.norm", d);
  layout.head = add_linear("decoder_pred", d, config.token_len());
  return layout;
}

template <class T>
Network<T>::Network(const ModelConfig& config, const BasicParameterSet<T>& params)
    : config_(config), params_(params), layout_(build_layout(config, nullptr)) {
  const std::size_t expected = static_cast<std::size_t>(layout_.head.b) + 1;
  if (params.tensors.size() != expected) {
    throw ParameterError("parameter set has " + std::to_string(params.tensors.size()) + " tensors, config expects " +
                         std::to_string(expected));
  }
  enc_pos_ = table_as<T>(position_embedding(config.grid, config.embed_dim));
  dec_pos_ = table_as<T>(position_embedding(config.grid, config.decoder_dim));
}

template <class T>
Mat<T> Network<T>::block_forward(const Mat<T>& x, const BlockIdx& idx, int heads, BlockCache<T>* cache) const {
  BlockCache<T> local;
  BlockCache<T>& c = cache ? *cache : local;
  const Eigen::Index n = x.rows();
  const int dim = static_cast<int>(x.cols());
  const int dh = dim / heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

  c.ln1_out = layer_norm(x, params_, idx.ln1, c.ln1_hat, c.ln1_rstd);
  c.qkv = linear(c.ln1_out, params_, idx.qkv);
  c.attn.resize(n, dim);
  c.probs.resize(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto q = c.qkv.middleCols(h * dh, dh);
    const auto k = c.qkv.middleCols(dim + h * dh, dh);
    const auto v = c.qkv.middleCols(2 * dim + h * dh, dh);
    Mat<T>& p = c.probs[static_cast<std::size_t>(h)];
    p.noalias() = (q * k.transpose()) * scale;
    softmax_rows(p);
    c.attn.middleCols(h * dh, dh).noalias() = p * v;
  }
  Mat<T> hidden = x + linear(c.attn, params_, idx.proj);

  c.ln2_out = layer_norm(hidden, params_, idx.ln2, c.ln2_hat, c.ln2_rstd);
  c.fc1_pre = linear(c.ln2_out, params_, idx.fc1);
  c.fc1_act = c.fc1_pre.unaryExpr([](T v) { return gelu(v); });
  hidden += linear(c.fc1_act, params_, idx.fc2);
  return hidden;
}

template <class T>
Mat<T> Network<T>::block_backward(const Mat<T>& dy, const BlockIdx& idx, int heads, const BlockCache<T>& c,
                                  BasicParameterSet<T>& g) const {
  const int dim = static_cast<int>(dy.cols());
  const int dh = dim / heads;
  const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));

  // MLP branch.
  Mat<T> d_act = linear_backward(c.fc1_act, dy, params_, idx.fc2, g);
  d_act.array() *= c.fc1_pre.unaryExpr([](T v) { return gelu_grad(v); }).array();
  const Mat<T> d_ln2 = linear_backward(c.ln2_out, d_act, params_, idx.fc1, g);
  Mat<T> d_hidden = dy + layer_norm_backward(d_ln2, c.ln2_hat, c.ln2_rstd, params_, idx.ln2, g);

  // Attention branch.
  const Mat<T> d_attn = linear_backward(c.attn, d_hidden, params_, idx.proj, g);
  Mat<T> d_qkv(c.qkv.rows(), c.qkv.cols());
  for (int h = 0; h < heads; ++h) {
    const auto q = c.qkv.middleCols(h * dh, dh);
    const auto k = c.qkv.middleCols(dim + h * dh, dh);
    const auto v = c.qkv.middleCols(2 * dim + h * dh, dh);
    const Mat<T>& p = c.probs[static_cast<std::size_t>(h)];
    const auto d_o = d_attn.middleCols(h * dh, dh);
    d_qkv.middleCols(2 * dim + h * dh, dh).noalias() = p.transpose() * d_o;
    Mat<T> d_s = d_o * v.transpose();
    const ColVec<T> row_dot = (d_s.array() * p.array()).rowwise().sum();
    d_s = (d_s.colwise() - row_dot).cwiseProduct(p) * scale;
    d_qkv.middleCols(h * dh, dh).noalias() = d_s * k;
    d_qkv.middleCols(dim + h * dh, dh).noalias() = d_s.transpose() * q;
  }
  const Mat<T> d_ln1 = linear_backward(c.ln1_out, d_qkv, params_, idx.qkv, g);
  d_hidden += layer_norm_backward(d_ln1, c.ln1_hat, c.ln1_rstd, params_, idx.ln1, g);
  return d_hidden;
}

template <class T>
Mat<T> Network<T>::forward(const Mat<T>& tokens, std::span<const int> visible, std::span<const int> masked,
                           ForwardCache<T>* cache) const {
  ForwardCache<T> local;
  ForwardCache<T>& c = cache ? *cache : local;
  const Eigen::Index n = tokens.rows();
  if (tokens.cols() != config_.token_len() || n != config_.grid.n_tokens()) {
    throw ParameterError("token matrix shape does not match the model config");
  }
  if (visible.empty()) throw DegenerateMaskError("forward: no visible tokens");
  c.visible.assign(visible.begin(), visible.end());
  c.masked.assign(masked.begin(), masked.end());

  const auto nv = static_cast<Eigen::Index>(visible.size());
  c.visible_tokens.resize(nv, tokens.cols());
  Mat<T> pos(nv, config_.embed_dim);
  for (Eigen::Index i = 0; i < nv; ++i) {
    c.visible_tokens.row(i) = tokens.row(visible[static_cast<std::size_t>(i)]);
    pos.row(i) = enc_pos_.row(visible[static_cast<std::size_t>(i)]);
  }
  Mat<T> x = linear(c.visible_tokens, params_, layout_.patch) + pos;

  c.encoder.resize(layout_.encoder.size());
  for (std::size_t i = 0; i < layout_.encoder.size(); ++i) {
    x = block_forward(x, layout_.encoder[i], config_.heads, &c.encoder[i]);
  }
  c.enc_out = layer_norm(x, params_, layout_.encoder_norm, c.enc_hat, c.enc_rstd);

  const Mat<T> projected = linear(c.enc_out, params_, layout_.decoder_embed);
  Mat<T> u(n, config_.decoder_dim);
  for (Eigen::Index i = 0; i < nv; ++i) u.row(visible[static_cast<std::size_t>(i)]) = projected.row(i);
  const auto mask_token = view(params_, layout_.mask_token).row(0);
  for (const int m : masked) u.row(m) = mask_token;
  u += dec_pos_;

  c.decoder.resize(layout_.decoder.size());
  for (std::size_t i = 0; i < layout_.decoder.size(); ++i) {
    u = block_forward(u, layout_.decoder[i], config_.heads, &c.decoder[i]);
  }
  c.dec_out = layer_norm(u, params_, layout_.decoder_norm, c.dec_hat, c.dec_rstd);
  return linear(c.dec_out, params_, layout_.head);
}

template <class T>
void Network<T>::backward(const ForwardCache<T>& c, const Mat<T>& d_out, BasicParameterSet<T>& g) const {
  Mat<T> du = linear_backward(c.dec_out, d_out, params_, layout_.head, g);
  du = layer_norm_backward(du, c.dec_hat, c.dec_rstd, params_, layout_.decoder_norm, g);
  for (std::size_t i = layout_.decoder.size(); i-- > 0;) {
    du = block_backward(du, layout_.decoder[i], config_.heads, c.decoder[i], g);
  }

  auto d_mask = view(g, layout_.mask_token);
  for (const int m : c.masked) d_mask.row(0) += du.row(m);
  const auto nv = static_cast<Eigen::Index>(c.visible.size());
  Mat<T> d_proj(nv, du.cols());
  for (Eigen::Index i = 0; i < nv; ++i) d_proj.row(i) = du.row(c.visible[static_cast<std::size_t>(i)]);

  Mat<T> dx = linear_backward(c.enc_out, d_proj, params_, layout_.decoder_embed, g);
  dx = layer_norm_backward(dx, c.enc_hat, c.enc_rstd, params_, layout_.encoder_norm, g);
  for (std::size_t i = layout_.encoder.size(); i-- > 0;) {
    dx = block_backward(dx, layout_.encoder[i], config_.heads, c.encoder[i], g);
  }
  view(g, layout_.patch.w).noalias() += c.visible_tokens.transpose() * dx;
  view(g, layout_.patch.b).row(0) += column_sums(dx);
}

template class Network<float>;
template class Network<double>;

}  // namespace crowdmac::detail
