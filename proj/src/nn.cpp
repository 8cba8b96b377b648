#include "plainpt/nn.hpp"

#include <stdexcept>

namespace plainpt {

Linear::Linear(ParameterStore& store, const std::string& prefix, std::size_t in, std::size_t out, bool with_bias)
    : weight(store.add_weight(prefix + ".weight", {in, out}, in)) {
  if (with_bias) bias = store.add_constant(prefix + ".bias", {out}, 0.0);
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& prefix, std::size_t channels)
    : gamma(store.add_constant(prefix + ".gamma", {channels}, 1.0)),
      beta(store.add_constant(prefix + ".beta", {channels}, 0.0)) {}

Mlp::Mlp(ParameterStore& store, const std::string& prefix, std::size_t in, std::vector<std::size_t> widths,
         bool linear_output)
    : widths_(std::move(widths)), linear_output_(linear_output) {
  if (widths_.empty()) throw std::invalid_argument("mlp '" + prefix + "' needs at least one layer");
  std::size_t fan_in = in;
  for (std::size_t i = 0; i < widths_.size(); ++i) {
    const std::string name = prefix + "." + std::to_string(i);
    const bool normed = !(linear_output_ && i + 1 == widths_.size());
    layers_.emplace_back(store, name, fan_in, widths_[i], !normed);
    if (normed) norms_.emplace_back(store, name + ".norm", widths_[i]);
    fan_in = widths_[i];
  }
}

Tensor Mlp::operator()(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    h = layers_[i](h);
    if (i < norms_.size()) h = relu(norms_[i](h));
  }
  return h;
}

}  // namespace plainpt
