#include "plainpt/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace plainpt {

double clip_grad_norm(ParameterStore& store, double max_norm) {
  double sq = 0.0;
  for (const auto& [_, t] : store.all()) {
    for (double g : t.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (const auto& [_, t] : store.all()) {
      Tensor handle = t;
      if (!handle.has_grad()) continue;
      for (double& g : handle.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

void adamw_step(ParameterStore& store, OptimizerState& state, double lr) {
  if (!(lr > 0.0)) throw std::invalid_argument("adamw_step: learning rate must be positive");
  for (const auto& [name, t] : store.all()) {
    if (!t.has_grad()) throw std::invalid_argument("adamw_step: parameter '" + name + "' has no gradient");
  }
  clip_grad_norm(store, state.clip_norm);
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (const auto& [name, param] : store.all()) {
    Tensor p = param;
    auto& m = state.first_moment[name];
    auto& v = state.second_moment[name];
    if (m.empty()) {
      m.assign(p.numel(), 0.0);
      v.assign(p.numel(), 0.0);
    }
    auto values = p.mutable_data();
    auto grad = p.grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      values[i] -= lr * state.weight_decay * values[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * grad[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * grad[i] * grad[i];
      values[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + state.eps);
    }
  }
}

double lr_schedule(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double base_lr) {
  step = std::min(step, total_steps);
  if (step < warmup_steps) {
    return base_lr * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (total_steps <= warmup_steps) return base_lr;
  const double progress =
      static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
  return 0.5 * base_lr * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace plainpt
