#pragma once

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace crowdmac {

// Named row-major 2-D tensor. Vectors are stored as 1 x n.
template <class T>
struct BasicTensor {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::vector<T> data;
  // Receives decoupled weight decay (weights only; biases, norms and the mask token do not).
  bool decay = false;

  std::size_t size() const { return data.size(); }
  T& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  T at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;
};

template <class T>
struct BasicParameterSet {
  std::vector<BasicTensor<T>> tensors;

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& t : tensors) n += t.size();
    return n;
  }

  const BasicTensor<T>* find(std::string_view name) const {
    for (const auto& t : tensors) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }
  BasicTensor<T>* find(std::string_view name) {
    for (auto& t : tensors) {
      if (t.name == name) return &t;
    }
    return nullptr;
  }

  // Same names and shapes, all values zero.
  BasicParameterSet zeros_like() const {
    BasicParameterSet out = *this;
    for (auto& t : out.tensors) std::fill(t.data.begin(), t.data.end(), T{0});
    return out;
  }

  template <class U>
  BasicParameterSet<U> cast() const {
    BasicParameterSet<U> out;
    out.tensors.reserve(tensors.size());
    for (const auto& t : tensors) {
      BasicTensor<U> c{t.name, t.rows, t.cols, std::vector<U>(t.data.begin(), t.data.end()), t.decay};
      out.tensors.push_back(std::move(c));
    }
    return out;
  }

  // this += scale * other; shapes must match.
  void add_scaled(const BasicParameterSet& other, T scale) {
    for (std::size_t i = 0; i < tensors.size(); ++i) {
      auto& dst = tensors[i].data;
      const auto& src = other.tensors[i].data;
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
    }
  }

  friend bool operator==(const BasicParameterSet&, const BasicParameterSet&) = default;
};

using Tensor = BasicTensor<float>;
using ParameterSet = BasicParameterSet<float>;

}  // namespace crowdmac
