#include "plainpt/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>

#include "plainpt/rng.hpp"

namespace plainpt {

void PointCloud::validate() const {
  if (coords.empty()) throw std::invalid_argument("point cloud is empty");
  for (std::size_t i = 0; i < coords.size(); ++i) {
    for (double v : coords[i]) {
      if (!std::isfinite(v)) throw std::invalid_argument("point " + std::to_string(i) + " has a non-finite coordinate");
    }
  }
  if (extras.size() != coords.size() * extra_channels) {
    throw std::invalid_argument("extras hold " + std::to_string(extras.size()) + " values, expected " +
                                std::to_string(coords.size() * extra_channels));
  }
}

KeyPoints keys_from_indices(const PointCloud& pc, std::span<const std::size_t> indices) {
  KeyPoints keys;
  keys.source_indices.assign(indices.begin(), indices.end());
  keys.coords.reserve(indices.size());
  for (std::size_t i : indices) keys.coords.push_back(pc.coords.at(i));
  return keys;
}

std::vector<double> pairwise_sq_dist(std::span<const Vec3> a, std::span<const Vec3> b) {
  std::vector<double> d(a.size() * b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) d[i * b.size() + j] = sq_dist(a[i], b[j]);
  return d;
}

KeyPoints farthest_point_sampling(const PointCloud& pc, std::size_t m, const FpsOptions& options) {
  const std::size_t n = pc.size();
  if (m == 0 || m > n) {
    throw std::invalid_argument("farthest_point_sampling: requested " + std::to_string(m) + " of " +
                                std::to_string(n) + " points");
  }
  std::size_t current = options.start_index;
  if (options.random_start_seed) current = static_cast<std::size_t>(Rng(*options.random_start_seed).below(n));
  if (current >= n) throw std::invalid_argument("farthest_point_sampling: start index out of range");

  // Selected points are marked with -1 so duplicates of them stay eligible.
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  std::vector<std::size_t> picked;
  picked.reserve(m);
  for (std::size_t s = 0; s < m; ++s) {
    picked.push_back(current);
    min_d2[current] = -1.0;
    const Vec3 c = pc.coords[current];
    std::size_t best = n;
    double best_d2 = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_d2[i] < 0.0) continue;
      min_d2[i] = std::min(min_d2[i], sq_dist(pc.coords[i], c));
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    current = best;
  }
  return keys_from_indices(pc, picked);
}

namespace {

using Candidate = std::pair<double, std::size_t>;

void take_k_smallest(std::vector<Candidate>& cands, std::size_t k, std::size_t* out) {
  std::partial_sort(cands.begin(), cands.begin() + static_cast<long>(k), cands.end());
  for (std::size_t j = 0; j < k; ++j) out[j] = cands[j].second;
}

}  // namespace

std::vector<std::size_t> knn_search(std::span<const Vec3> queries, std::span<const Vec3> refs, std::size_t k,
                                    NeighborSearch method) {
  if (k > refs.size()) {
    throw std::invalid_argument("knn_search: k = " + std::to_string(k) + " exceeds " + std::to_string(refs.size()) +
                                " reference points");
  }
  std::vector<std::size_t> out(queries.size() * k);
  if (k == 0) return out;
  if (method == NeighborSearch::kGrid) {
    UniformGrid grid(refs);
    for (std::size_t q = 0; q < queries.size(); ++q) {
      auto row = grid.knn(queries[q], k);
      std::copy(row.begin(), row.end(), out.begin() + static_cast<long>(q * k));
    }
    return out;
  }
  std::vector<Candidate> cands(refs.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    for (std::size_t j = 0; j < refs.size(); ++j) cands[j] = {sq_dist(queries[q], refs[j]), j};
    take_k_smallest(cands, k, out.data() + q * k);
  }
  return out;
}

std::vector<std::size_t> nearest_index(std::span<const Vec3> points, std::span<const Vec3> centers) {
  if (centers.empty()) throw std::invalid_argument("nearest_index: no centers");
  std::vector<std::size_t> t(points.size(), 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    double best = sq_dist(points[i], centers[0]);
    for (std::size_t j = 1; j < centers.size(); ++j) {
      const double d2 = sq_dist(points[i], centers[j]);
      if (d2 < best) {
        best = d2;
        t[i] = j;
      }
    }
  }
  return t;
}

std::vector<std::size_t> nearest_key_assignment(const PointCloud& pc, const KeyPoints& keys) {
  return nearest_index(pc.coords, keys.coords);
}

// ---- grid -----------------------------------------------------------------

UniformGrid::UniformGrid(std::span<const Vec3> refs, double points_per_cell) : refs_(refs) {
  if (refs.empty()) throw std::invalid_argument("UniformGrid: no reference points");
  Vec3 lo = refs[0], hi = refs[0];
  for (const Vec3& p : refs)
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a]);
      hi[a] = std::max(hi[a], p[a]);
    }
  double volume = 1.0;
  int spread_axes = 0;
  double max_extent = 0.0;
  for (int a = 0; a < 3; ++a) {
    const double ext = hi[a] - lo[a];
    max_extent = std::max(max_extent, ext);
    if (ext > 0.0) {
      volume *= ext;
      ++spread_axes;
    }
  }
  const double cells_wanted = std::max(1.0, static_cast<double>(refs.size()) / points_per_cell);
  cell_ = spread_axes == 0 ? 1.0 : std::pow(volume / cells_wanted, 1.0 / spread_axes);
  if (!(cell_ > 0.0) || !std::isfinite(cell_)) cell_ = max_extent > 0.0 ? max_extent : 1.0;
  // Keep the dense table bounded.
  constexpr double kMaxCells = 1 << 22;
  for (;;) {
    double total = 1.0;
    for (int a = 0; a < 3; ++a) total *= std::floor((hi[a] - lo[a]) / cell_) + 1.0;
    if (total <= kMaxCells) break;
    cell_ *= 1.5;
  }
  origin_ = lo;
  for (int a = 0; a < 3; ++a) dims_[a] = static_cast<long>(std::floor((hi[a] - lo[a]) / cell_)) + 1;

  const std::size_t cells = static_cast<std::size_t>(dims_[0] * dims_[1] * dims_[2]);
  std::vector<std::size_t> cell_index(refs.size());
  cell_start_.assign(cells + 1, 0);
  for (std::size_t i = 0; i < refs.size(); ++i) {
    auto c = cell_of(refs[i]);
    cell_index[i] = static_cast<std::size_t>((c[2] * dims_[1] + c[1]) * dims_[0] + c[0]);
    ++cell_start_[cell_index[i] + 1];
  }
  for (std::size_t c = 0; c < cells; ++c) cell_start_[c + 1] += cell_start_[c];
  cell_items_.resize(refs.size());
  std::vector<std::size_t> fill(cell_start_.begin(), cell_start_.end() - 1);
  for (std::size_t i = 0; i < refs.size(); ++i) cell_items_[fill[cell_index[i]]++] = i;
}

std::array<long, 3> UniformGrid::cell_of(const Vec3& p) const {
  std::array<long, 3> c{};
  for (int a = 0; a < 3; ++a) {
    c[a] = static_cast<long>(std::floor((p[a] - origin_[a]) / cell_));
    c[a] = std::clamp(c[a], 0L, dims_[a] - 1);
  }
  return c;
}

std::vector<std::size_t> UniformGrid::knn(const Vec3& query, std::size_t k) const {
  if (k > refs_.size()) throw std::invalid_argument("UniformGrid::knn: k exceeds reference count");
  std::vector<std::size_t> out(k);
  if (k == 0) return out;
  // Unclamped cell of the query: every point closer than r * cell lies within
  // Chebyshev ring r of it.
  std::array<long, 3> qc{};
  for (int a = 0; a < 3; ++a) qc[a] = static_cast<long>(std::floor((query[a] - origin_[a]) / cell_));

  long first_ring = 0;
  for (int a = 0; a < 3; ++a) first_ring = std::max({first_ring, -qc[a], qc[a] - (dims_[a] - 1)});

  std::vector<Candidate> cands;
  for (long r = first_ring;; ++r) {
    bool covers_all = true;
    for (int a = 0; a < 3; ++a) {
      if (qc[a] - r > 0 || qc[a] + r < dims_[a] - 1) covers_all = false;
    }
    std::array<long, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(qc[a] - r, 0L);
      hi[a] = std::min(qc[a] + r, dims_[a] - 1);
    }
    for (long z = lo[2]; z <= hi[2]; ++z)
      for (long y = lo[1]; y <= hi[1]; ++y)
        for (long x = lo[0]; x <= hi[0]; ++x) {
          const long ring = std::max({std::abs(x - qc[0]), std::abs(y - qc[1]), std::abs(z - qc[2])});
          if (ring != r) continue;
          const std::size_t c = static_cast<std::size_t>((z * dims_[1] + y) * dims_[0] + x);
          for (std::size_t s = cell_start_[c]; s < cell_start_[c + 1]; ++s) {
            const std::size_t i = cell_items_[s];
            cands.emplace_back(sq_dist(query, refs_[i]), i);
          }
        }
    if (covers_all) break;
    if (cands.size() >= k) {
      std::nth_element(cands.begin(), cands.begin() + static_cast<long>(k - 1), cands.end());
      const double bound = static_cast<double>(r) * cell_;
      if (cands[k - 1].first < bound * bound) break;
    }
  }
  take_k_smallest(cands, k, out.data());
  return out;
}

}  // namespace plainpt
