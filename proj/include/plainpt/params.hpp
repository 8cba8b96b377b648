#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "plainpt/rng.hpp"
#include "plainpt/tensor.hpp"

namespace plainpt {

// Named trainable tensors. std::map keeps iteration lexicographic, which the
// optimizer, gradient checks and checkpoints all rely on.
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed), init_rng_(seed, 0x1417) {}

  // Weight of a layer with `fan_in` inputs: uniform in +-sqrt(6 / fan_in).
  Tensor add_weight(const std::string& name, Shape shape, std::size_t fan_in);
  Tensor add_constant(const std::string& name, Shape shape, double value);
  Tensor add_normal(const std::string& name, Shape shape, double stddev);
  // Registers an existing tensor; throws if the name is taken.
  Tensor add(const std::string& name, Tensor tensor);

  bool contains(const std::string& name) const { return params_.count(name) != 0; }
  const Tensor& get(const std::string& name) const;
  const std::map<std::string, Tensor>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }
  std::size_t num_values() const;

  void zero_grad();
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  Rng init_rng_;
  std::map<std::string, Tensor> params_;
};

}  // namespace plainpt
