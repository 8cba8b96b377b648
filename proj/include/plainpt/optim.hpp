#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "plainpt/params.hpp"

namespace plainpt {

struct OptimizerState {
  double base_lr = 5e-4;
  double weight_decay = 0.01;
  double clip_norm = 0.1;  // <= 0 disables clipping
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t step = 0;
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
};

// Scales every gradient in the store so the global L2 norm is at most
// `max_norm`. Returns the norm before clipping.
double clip_grad_norm(ParameterStore& store, double max_norm);

// One AdamW update with decoupled weight decay. Gradients are clipped to
// state.clip_norm first. Throws if a parameter has no gradient.
void adamw_step(ParameterStore& store, OptimizerState& state, double lr);

// Linear warmup from 0 to base_lr, then cosine decay to 0 at total_steps.
double lr_schedule(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double base_lr);

}  // namespace plainpt
