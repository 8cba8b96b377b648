#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "plainpt/gradcheck.hpp"

namespace plainpt {

struct GradCaseResult {
  std::string name;
  std::size_t seeds = 0;
  double eps = 0.0;
  double max_rel_error = 0.0;
  double max_rel_error_large = 0.0;  // over coordinates with |gradient| >= 1e-6
  double largest_failing_gradient = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  double seconds = 0.0;
  bool passed = false;
  std::string worst;  // parameter and coordinate of the worst error
};

struct GradSuiteOptions {
  std::size_t primitive_seeds = 20;
  std::size_t module_seeds = 3;
  std::size_t mae_seeds = 2;  // the full-model case costs ~25 s per seed
  double threshold = 1e-4;
  double module_eps = 1e-4;
  GradCheckOptions check;  // eps here applies to primitives
};

// Gradient checks for every differentiable op and the model components
// built from them, ending with the full MAE loss on a toy configuration.
// `on_result` is called as each case finishes.
std::vector<GradCaseResult> run_grad_suite(const GradSuiteOptions& options = {},
                                           const std::function<void(const GradCaseResult&)>& on_result = {});

std::string format_grad_result(const GradCaseResult& r);

}  // namespace plainpt
