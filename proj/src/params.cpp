#include "plainpt/params.hpp"

#include <cmath>
#include <stdexcept>

namespace plainpt {

Tensor ParameterStore::add(const std::string& name, Tensor tensor) {
  if (name.empty()) throw std::invalid_argument("parameter name must not be empty");
  tensor.set_requires_grad(true);
  if (!params_.emplace(name, tensor).second) throw std::invalid_argument("duplicate parameter '" + name + "'");
  return tensor;
}

Tensor ParameterStore::add_weight(const std::string& name, Shape shape, std::size_t fan_in) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = init_rng_.uniform(-bound, bound);
  return add(name, Tensor::from(std::move(shape), std::move(v)));
}

Tensor ParameterStore::add_constant(const std::string& name, Shape shape, double value) {
  return add(name, Tensor::full(std::move(shape), value));
}

Tensor ParameterStore::add_normal(const std::string& name, Shape shape, double stddev) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = stddev * init_rng_.normal();
  return add(name, Tensor::from(std::move(shape), std::move(v)));
}

const Tensor& ParameterStore::get(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw std::out_of_range("unknown parameter '" + name + "'");
  return it->second;
}

std::size_t ParameterStore::num_values() const {
  std::size_t n = 0;
  for (const auto& [_, t] : params_) n += t.numel();
  return n;
}

void ParameterStore::zero_grad() {
  for (auto& [_, t] : params_) {
    Tensor handle = t;
    handle.zero_grad();
  }
}

}  // namespace plainpt
