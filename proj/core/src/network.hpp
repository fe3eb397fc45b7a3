// Transformer encoder-decoder with hand-written reverse pass. Private to crowdmac_core.
#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "crowdmac/model.hpp"

namespace crowdmac::detail {

template <class T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

struct LinearIdx {
  int w = -1;
  int b = -1;
};
struct NormIdx {
  int gain = -1;
  int bias = -1;
};
struct BlockIdx {
  NormIdx ln1;
  LinearIdx qkv;
  LinearIdx proj;
  NormIdx ln2;
  LinearIdx fc1;
  LinearIdx fc2;
};

// Position of every named tensor inside the parameter set.
struct Layout {
  LinearIdx patch;
  std::vector<BlockIdx> encoder;
  NormIdx encoder_norm;
  LinearIdx decoder_embed;
  int mask_token = -1;
  std::vector<BlockIdx> decoder;
  NormIdx decoder_norm;
  LinearIdx head;
};

enum class Init { Xavier, Zeros, Ones, MaskToken };

struct TensorSpec {
  std::string name;
  int rows;
  int cols;
  bool decay;
  Init init;
};

Layout build_layout(const ModelConfig& config, std::vector<TensorSpec>* specs);

template <class T>
struct BlockCache {
  Mat<T> ln1_hat;
  ColVec<T> ln1_rstd;
  Mat<T> ln1_out;
  Mat<T> qkv;
  std::vector<Mat<T>> probs;  // one N x N attention matrix per head
  Mat<T> attn;
  Mat<T> ln2_hat;
  ColVec<T> ln2_rstd;
  Mat<T> ln2_out;
  Mat<T> fc1_pre;
  Mat<T> fc1_act;
};

template <class T>
struct ForwardCache {
  std::vector<int> visible;
  std::vector<int> masked;
  Mat<T> visible_tokens;
  std::vector<BlockCache<T>> encoder;
  Mat<T> enc_hat;
  ColVec<T> enc_rstd;
  Mat<T> enc_out;
  std::vector<BlockCache<T>> decoder;
  Mat<T> dec_hat;
  ColVec<T> dec_rstd;
  Mat<T> dec_out;
};

template <class T>
class Network {
 public:
  Network(const ModelConfig& config, const BasicParameterSet<T>& params);

  // tokens: n_tokens x token_len. Returns n_tokens x token_len reconstructions.
  Mat<T> forward(const Mat<T>& tokens, std::span<const int> visible, std::span<const int> masked,
                 ForwardCache<T>* cache) const;

  // Accumulates parameter gradients of <d_out, output> into grads.
  void backward(const ForwardCache<T>& cache, const Mat<T>& d_out, BasicParameterSet<T>& grads) const;

  const Layout& layout() const { return layout_; }

 private:
  Mat<T> block_forward(const Mat<T>& x, const BlockIdx& idx, int heads, BlockCache<T>* cache) const;
  Mat<T> block_backward(const Mat<T>& dy, const BlockIdx& idx, int heads, const BlockCache<T>& cache,
                        BasicParameterSet<T>& grads) const;

  const ModelConfig& config_;
  const BasicParameterSet<T>& params_;
  Layout layout_;
  Mat<T> enc_pos_;
  Mat<T> dec_pos_;
};

extern template class Network<float>;
extern template class Network<double>;

template <class T>
Mat<T> to_matrix(const TokenField& tokens) {
  Mat<T> m(tokens.grid.n_tokens(), tokens.grid.token_len());
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(tokens.values[static_cast<std::size_t>(i)]);
  return m;
}

}  // namespace crowdmac::detail
