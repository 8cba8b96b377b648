#include "plainpt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace plainpt {

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn, ParameterStore& store,
                           const GradCheckOptions& options) {
  store.zero_grad();
  std::uint64_t branch0 = 0;
  Tensor loss;
  {
    BranchTrace trace;
    loss = loss_fn();
    branch0 = trace.fingerprint();
  }
  const double f0 = loss.item();
  {
    NoGradGuard guard;
    if (loss_fn().item() != f0) throw NondeterminismError("grad_check: loss differs between identical evaluations");
  }
  if (loss.requires_grad()) backward(loss);

  bool same_branch = true;
  auto eval = [&] {
    NoGradGuard guard;
    BranchTrace trace;
    const double v = loss_fn().item();
    same_branch = same_branch && trace.fingerprint() == branch0;
    return v;
  };

  GradCheckReport report;
  for (const auto& [name, param] : store.all()) {
    Tensor p = param;
    std::vector<double> analytic(p.numel(), 0.0);
    if (p.has_grad()) std::copy(p.grad().begin(), p.grad().end(), analytic.begin());
    auto values = p.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      same_branch = true;
      values[i] = saved + options.eps;
      const double up = eval();
      values[i] = saved - options.eps;
      const double down = eval();
      values[i] = saved;

      const double numeric = (up - down) / (2.0 * options.eps);
      if (options.skip_kinks && !same_branch) {
        ++report.skipped_kinks;
        continue;
      }
      const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
      const double rel = std::abs(analytic[i] - numeric) / denom;
      ++report.checked;
      if (std::max(std::abs(analytic[i]), std::abs(numeric)) >= 1e-6) {
        report.max_rel_error_large = std::max(report.max_rel_error_large, rel);
      }
      if (rel >= 1e-4) report.largest_failing_gradient = std::max(report.largest_failing_gradient, denom);
      if (rel > report.max_rel_error || report.worst_parameter.empty()) {
        if (rel >= report.max_rel_error) {
          report.max_rel_error = rel;
          report.worst_parameter = name;
          report.worst_index = i;
          report.worst_analytic = analytic[i];
          report.worst_numeric = numeric;
        }
      }
    }
  }
  store.zero_grad();
  return report;
}

}  // namespace plainpt
