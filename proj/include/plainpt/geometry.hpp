#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace plainpt {

using Vec3 = std::array<double, 3>;

inline double sq_dist(const Vec3& a, const Vec3& b) {
  const double dx = a[0] - b[0], dy = a[1] - b[1], dz = a[2] - b[2];
  return dx * dx + dy * dy + dz * dz;
}

// N points with optional per-point extra channels (colors in [0, 1]).
struct PointCloud {
  std::vector<Vec3> coords;
  std::vector<double> extras;  // row-major N x extra_channels
  std::size_t extra_channels = 0;

  std::size_t size() const { return coords.size(); }
  bool has_extras() const { return extra_channels > 0; }
  std::span<const double> extra_row(std::size_t i) const {
    return std::span<const double>(extras).subspan(i * extra_channels, extra_channels);
  }
  // Throws std::invalid_argument when empty, non-finite, or misaligned.
  void validate() const;
};

struct KeyPoints {
  std::vector<Vec3> coords;
  std::vector<std::size_t> source_indices;

  std::size_t size() const { return coords.size(); }
};

KeyPoints keys_from_indices(const PointCloud& pc, std::span<const std::size_t> indices);

// Row-major P x Q matrix of squared Euclidean distances.
std::vector<double> pairwise_sq_dist(std::span<const Vec3> a, std::span<const Vec3> b);

struct FpsOptions {
  std::size_t start_index = 0;
  // When set, the start index is drawn from this seed instead.
  std::optional<std::uint64_t> random_start_seed;
};

// Greedy farthest point sampling. Each pick maximises the squared distance
// to the already selected set; ties go to the lowest index.
KeyPoints farthest_point_sampling(const PointCloud& pc, std::size_t m, const FpsOptions& options = {});

enum class NeighborSearch { kBruteForce, kGrid };

// Q x k row-major indices into `refs`, each row sorted by ascending
// distance with index tie-break.
std::vector<std::size_t> knn_search(std::span<const Vec3> queries, std::span<const Vec3> refs, std::size_t k,
                                    NeighborSearch method = NeighborSearch::kBruteForce);

// t[i] = index of the key closest to point i; lowest key index on ties.
std::vector<std::size_t> nearest_key_assignment(const PointCloud& pc, const KeyPoints& keys);
std::vector<std::size_t> nearest_index(std::span<const Vec3> points, std::span<const Vec3> centers);

// Uniform bucket grid over a fixed reference set. Queries return exactly what
// the brute-force search returns, including tie order.
class UniformGrid {
 public:
  explicit UniformGrid(std::span<const Vec3> refs, double points_per_cell = 4.0);

  std::vector<std::size_t> knn(const Vec3& query, std::size_t k) const;
  double cell_size() const { return cell_; }

 private:
  std::array<long, 3> cell_of(const Vec3& p) const;

  std::span<const Vec3> refs_;
  Vec3 origin_{};
  double cell_ = 1.0;
  std::array<long, 3> dims_{1, 1, 1};
  std::vector<std::size_t> cell_start_;  // CSR offsets, size cells + 1
  std::vector<std::size_t> cell_items_;
};

}  // namespace plainpt
