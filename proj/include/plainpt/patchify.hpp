#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plainpt/geometry.hpp"
#include "plainpt/rng.hpp"
#include "plainpt/tensor.hpp"

namespace plainpt {

enum class Grouping { kBall, kKnn, kKMeans, kFpc };

std::string_view to_string(Grouping g);
Grouping parse_grouping(std::string_view name);

// How an oversized cluster is cut down to K points.
enum class ClusterSampling {
  kTruncate,  // first K in ascending point order
  kRandom,    // K drawn without replacement from a seeded stream
};

// M patches of exactly K point indices each.
struct PatchSet {
  KeyPoints keys;
  std::size_t samples = 0;          // K
  std::vector<std::size_t> assign;  // M x K, row-major
  Grouping grouping = Grouping::kFpc;
  std::optional<double> radius;
  std::vector<std::size_t> pre_dup_counts;  // cluster/neighbourhood sizes before truncation or duplication

  std::size_t num_patches() const { return keys.size(); }
  std::span<const std::size_t> row(std::size_t m) const {
    return std::span<const std::size_t>(assign).subspan(m * samples, samples);
  }
};

PatchSet ball_query_group(const PointCloud& pc, const KeyPoints& keys, std::size_t k, double radius);

PatchSet knn_group(const PointCloud& pc, const KeyPoints& keys, std::size_t k,
                   NeighborSearch method = NeighborSearch::kBruteForce);

struct KMeansResult {
  PatchSet patches;
  std::vector<Vec3> centroids;
  std::vector<std::size_t> labels;  // per point
  std::size_t iterations = 0;
  bool converged = false;
};

// Lloyd iterations seeded with `keys_init`. Patch keys are the member point
// nearest to each final centroid.
KMeansResult kmeans_cluster(const PointCloud& pc, const KeyPoints& keys_init, std::size_t k, std::size_t max_iters,
                            ClusterSampling sampling = ClusterSampling::kTruncate, Rng* rng = nullptr);
PatchSet kmeans_group(const PointCloud& pc, const KeyPoints& keys_init, std::size_t k, std::size_t max_iters,
                      ClusterSampling sampling = ClusterSampling::kTruncate, Rng* rng = nullptr);

// Farthest point clustering: every point joins its nearest key, then each
// cluster is cut or cyclically duplicated to exactly K entries.
PatchSet fpc_group(const PointCloud& pc, const KeyPoints& keys, std::size_t k,
                   ClusterSampling sampling = ClusterSampling::kTruncate, Rng* rng = nullptr);

struct PatchifyOptions {
  Grouping grouping = Grouping::kFpc;
  std::size_t patches = 512;
  std::size_t samples = 128;
  double radius = 0.2;
  std::size_t kmeans_iters = 10;
  ClusterSampling sampling = ClusterSampling::kTruncate;
  NeighborSearch search = NeighborSearch::kBruteForce;
};

// FPS key points followed by the selected grouping.
PatchSet patchify(const PointCloud& pc, const PatchifyOptions& options, Rng* rng = nullptr);

// Patch inputs centred on their key points.
struct PatchTensor {
  Tensor offsets;     // [M, K, 3]
  Tensor extras;      // [M, K, C_extra]; undefined without extra channels
  Tensor key_coords;  // [M, 3]

  std::size_t num_patches() const { return key_coords.dim(0); }
  std::size_t samples() const { return offsets.dim(1); }
  std::size_t extra_channels() const { return extras.defined() ? extras.dim(2) : 0; }
};

PatchTensor gather_patches(const PointCloud& pc, const PatchSet& ps);

}  // namespace plainpt
