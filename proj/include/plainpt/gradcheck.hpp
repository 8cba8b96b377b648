#pragma once

#include <cstddef>
#include <functional>
#include <string>

#include "plainpt/params.hpp"

namespace plainpt {

struct GradCheckOptions {
  double eps = 1e-6;
  // Exclude coordinates where p - eps, p and p + eps do not all take the same
  // ReLU / max / nearest-neighbour branches (see BranchTrace).
  bool skip_kinks = true;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_parameter;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;
  // Same maximum restricted to coordinates with a gradient of at least 1e-6,
  // where the finite difference is well above loss roundoff.
  double max_rel_error_large = 0.0;
  // Largest max(|analytic|, |numeric|) among coordinates with rel error >= 1e-4.
  double largest_failing_gradient = 0.0;
};

struct NondeterminismError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Compares reverse-mode gradients of the scalar `loss_fn` with central
// differences over every coordinate of every parameter in `store`.
// Relative error uses max(|analytic|, |numeric|, 1e-8) as denominator.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, ParameterStore& store,
                           const GradCheckOptions& options = {});

}  // namespace plainpt
