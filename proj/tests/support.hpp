#pragma once

#include <cmath>
#include <vector>

#include "plainpt/geometry.hpp"
#include "plainpt/rng.hpp"
#include "plainpt/tensor.hpp"

namespace plainpt::testing {

inline PointCloud random_cloud(Rng& rng, std::size_t n, double extent = 1.0) {
  PointCloud pc;
  for (std::size_t i = 0; i < n; ++i) {
    pc.coords.push_back({rng.uniform(-extent, extent), rng.uniform(-extent, extent), rng.uniform(-extent, extent)});
  }
  return pc;
}

inline std::vector<double> random_values(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.uniform(lo, hi);
  return v;
}

inline Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  const std::size_t n = shape_numel(shape);
  return Tensor::from(std::move(shape), random_values(rng, n, lo, hi));
}

inline Tensor points_tensor(const std::vector<Vec3>& pts) {
  std::vector<double> v;
  for (const auto& p : pts) v.insert(v.end(), {p[0], p[1], p[2]});
  return Tensor::from({pts.size(), 3}, std::move(v));
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace plainpt::testing
