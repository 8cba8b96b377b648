#pragma once

#include <string>
#include <vector>

#include "plainpt/params.hpp"
#include "plainpt/tensor.hpp"

namespace plainpt {

struct Linear {
  Linear() = default;
  // Without `with_bias` the layer is a pure projection and has no bias tensor.
  Linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out, bool with_bias = true);
  Tensor operator()(const Tensor& x) const { return bias.defined() ? add_bias(matmul(x, weight), bias) : matmul(x, weight); }

  Tensor weight;  // [in, out]
  Tensor bias;    // [out], or undefined
};

struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& prefix, std::size_t channels);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, kEps); }

  static constexpr double kEps = 1e-5;
  Tensor gamma;
  Tensor beta;
};

// Shared per-row MLP. Each layer is linear -> layer norm -> ReLU, except
// that the last layer stays linear when `linear_output` is set. Layers
// followed by a norm carry no bias: the norm's mean subtraction cancels it.
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& prefix, std::size_t in, std::vector<std::size_t> widths,
      bool linear_output);

  Tensor operator()(const Tensor& x) const;
  std::size_t out_channels() const { return widths_.back(); }
  const std::vector<Linear>& layers() const { return layers_; }

 private:
  std::vector<std::size_t> widths_;
  std::vector<Linear> layers_;
  std::vector<LayerNorm> norms_;
  bool linear_output_ = false;
};

}  // namespace plainpt
