#pragma once

#include <string>
#include <utility>
#include <vector>

#include "gvqa/rng.hpp"
#include "gvqa/tensor.hpp"

namespace gvqa {

// Named learnable tensors, in a stable registration order. The optimizer,
// checkpoint format, and gradient tests all key off these names.
using ParamList = std::vector<std::pair<std::string, Tensor>>;

inline Tensor param_normal(Rng& rng, Shape shape, double std) {
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (int i = 0; i < t.numel(); ++i) t.data()[i] = rng.normal(0.0, std);
  return t;
}

// 3x3 (or any odd) convolution, stride 1, shape-preserving zero padding.
struct Conv2d {
  Tensor weight;  // [kh,kw,Cin,Cout]
  Tensor bias;    // [Cout]

  Conv2d() = default;
  Conv2d(Rng& rng, int kh, int kw, int cin, int cout) {
    // He-style fan-in scaling keeps pre-activations near unit variance.
    weight = param_normal(rng, {kh, kw, cin, cout}, std::sqrt(2.0 / (kh * kw * cin)));
    bias = Tensor::zeros({cout}, true);
  }

  Tensor operator()(const Tensor& x) const { return conv2d(x, weight, bias); }

  void collect(const std::string& prefix, ParamList& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

// Two 3x3 convolutions with a ReLU between them; the caller applies whatever
// output nonlinearity it needs.
struct ConvStack {
  Conv2d first;
  Conv2d second;

  ConvStack() = default;
  ConvStack(Rng& rng, int cin, int hidden, int cout)
      : first(rng, 3, 3, cin, hidden), second(rng, 3, 3, hidden, cout) {}

  Tensor operator()(const Tensor& x) const { return second(relu(first(x))); }

  void collect(const std::string& prefix, ParamList& out) const {
    first.collect(prefix + ".conv1", out);
    second.collect(prefix + ".conv2", out);
  }
};

struct Linear {
  Tensor weight;  // [in,out]
  Tensor bias;    // [out]

  Linear() = default;
  Linear(Rng& rng, int in, int out_dim) {
    weight = param_normal(rng, {in, out_dim}, std::sqrt(2.0 / in));
    bias = Tensor::zeros({out_dim}, true);
  }

  // x: [in] -> [out]
  Tensor operator()(const Tensor& x) const {
    Tensor row = reshape(x, {1, weight.dim(0)});
    return add(reshape(matmul(row, weight), {weight.dim(1)}), bias);
  }

  void collect(const std::string& prefix, ParamList& out) const {
    out.emplace_back(prefix + ".weight", weight);
    out.emplace_back(prefix + ".bias", bias);
  }
};

}  // namespace gvqa
