#include "plainpt/patchify.hpp"

#include <algorithm>
#include <cassert>
#include <stdexcept>

namespace plainpt {

std::string_view to_string(Grouping g) {
  switch (g) {
    case Grouping::kBall: return "ball";
    case Grouping::kKnn: return "knn";
    case Grouping::kKMeans: return "kmeans";
    case Grouping::kFpc: return "fpc";
  }
  return "?";
}

Grouping parse_grouping(std::string_view name) {
  if (name == "ball") return Grouping::kBall;
  if (name == "knn") return Grouping::kKnn;
  if (name == "kmeans") return Grouping::kKMeans;
  if (name == "fpc") return Grouping::kFpc;
  throw std::invalid_argument("unknown grouping '" + std::string(name) + "' (expected ball, knn, kmeans or fpc)");
}

namespace {

// Writes exactly k entries: the first k members (or k sampled members), then
// cyclic repeats of the row's own prefix when the cluster is short.
void fill_row(std::vector<std::size_t> members, std::size_t k, ClusterSampling sampling, Rng* rng,
              std::size_t* row) {
  assert(!members.empty());
  if (members.size() > k && sampling == ClusterSampling::kRandom) {
    if (rng == nullptr) throw std::invalid_argument("random cluster sampling requires an rng");
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + static_cast<std::size_t>(rng->below(members.size() - i));
      std::swap(members[i], members[j]);
    }
    members.resize(k);
    std::sort(members.begin(), members.end());
  }
  const std::size_t c = std::min(members.size(), k);
  std::copy_n(members.begin(), c, row);
  for (std::size_t j = c; j < k; ++j) row[j] = row[j - c];
}

std::vector<std::vector<std::size_t>> members_by_label(std::span<const std::size_t> labels, std::size_t m) {
  std::vector<std::vector<std::size_t>> members(m);
  for (std::size_t i = 0; i < labels.size(); ++i) members[labels[i]].push_back(i);
  return members;
}

void require_samples(std::size_t k, const char* op) {
  if (k == 0) throw std::invalid_argument(std::string(op) + ": samples per patch must be >= 1");
}

}  // namespace

PatchSet ball_query_group(const PointCloud& pc, const KeyPoints& keys, std::size_t k, double radius) {
  require_samples(k, "ball_query_group");
  if (!(radius > 0.0)) throw std::invalid_argument("ball_query_group: radius must be positive");
  PatchSet ps;
  ps.keys = keys;
  ps.samples = k;
  ps.grouping = Grouping::kBall;
  ps.radius = radius;
  ps.assign.resize(keys.size() * k);
  ps.pre_dup_counts.resize(keys.size());
  const double r2 = radius * radius;
  for (std::size_t m = 0; m < keys.size(); ++m) {
    std::vector<std::size_t> found;
    std::size_t count = 0;
    for (std::size_t i = 0; i < pc.size(); ++i) {
      if (sq_dist(pc.coords[i], keys.coords[m]) < r2) {
        ++count;
        if (found.size() < k) found.push_back(i);
      }
    }
    ps.pre_dup_counts[m] = count;
    if (found.empty()) found.push_back(keys.source_indices.at(m));
    fill_row(std::move(found), k, ClusterSampling::kTruncate, nullptr, ps.assign.data() + m * k);
  }
  return ps;
}

PatchSet knn_group(const PointCloud& pc, const KeyPoints& keys, std::size_t k, NeighborSearch method) {
  require_samples(k, "knn_group");
  if (k > pc.size()) {
    throw std::invalid_argument("knn_group: k = " + std::to_string(k) + " exceeds " + std::to_string(pc.size()) +
                                " points");
  }
  PatchSet ps;
  ps.keys = keys;
  ps.samples = k;
  ps.grouping = Grouping::kKnn;
  ps.assign = knn_search(keys.coords, pc.coords, k, method);
  ps.pre_dup_counts.assign(keys.size(), k);
  return ps;
}

KMeansResult kmeans_cluster(const PointCloud& pc, const KeyPoints& keys_init, std::size_t k, std::size_t max_iters,
                            ClusterSampling sampling, Rng* rng) {
  require_samples(k, "kmeans_group");
  if (max_iters == 0) throw std::invalid_argument("kmeans_group: max_iters must be >= 1");
  const std::size_t m = keys_init.size(), n = pc.size();
  if (m == 0 || m > n) throw std::invalid_argument("kmeans_group: need between 1 and N centroids");

  KMeansResult res;
  res.centroids = keys_init.coords;

  // Nearest-centroid labels; an empty cluster takes the point lying farthest
  // from its own centroid among clusters that can spare one.
  auto assign = [&](const std::vector<Vec3>& centroids) {
    std::vector<std::size_t> labels = nearest_index(pc.coords, centroids);
    std::vector<std::size_t> sizes(m, 0);
    for (std::size_t l : labels) ++sizes[l];
    for (std::size_t c = 0; c < m; ++c) {
      if (sizes[c] != 0) continue;
      std::size_t pick = n;
      double pick_d2 = -1.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (sizes[labels[i]] < 2) continue;
        const double d2 = sq_dist(pc.coords[i], centroids[labels[i]]);
        if (d2 > pick_d2) {
          pick_d2 = d2;
          pick = i;
        }
      }
      --sizes[labels[pick]];
      labels[pick] = c;
      sizes[c] = 1;
    }
    return labels;
  };

  std::vector<std::size_t> labels = assign(res.centroids);
  for (std::size_t it = 0; it < max_iters; ++it) {
    std::vector<Vec3> sums(m, Vec3{0.0, 0.0, 0.0});
    std::vector<std::size_t> counts(m, 0);
    for (std::size_t i = 0; i < n; ++i) {
      for (int a = 0; a < 3; ++a) sums[labels[i]][a] += pc.coords[i][a];
      ++counts[labels[i]];
    }
    for (std::size_t c = 0; c < m; ++c)
      for (int a = 0; a < 3; ++a) res.centroids[c][a] = sums[c][a] / static_cast<double>(counts[c]);
    res.iterations = it + 1;
    std::vector<std::size_t> next = assign(res.centroids);
    if (next == labels) {
      res.converged = true;
      break;
    }
    labels = std::move(next);
  }

  auto members = members_by_label(labels, m);
  PatchSet& ps = res.patches;
  ps.samples = k;
  ps.grouping = Grouping::kKMeans;
  ps.assign.resize(m * k);
  ps.pre_dup_counts.resize(m);
  std::vector<std::size_t> key_indices(m);
  for (std::size_t c = 0; c < m; ++c) {
    std::size_t best = members[c][0];
    for (std::size_t i : members[c]) {
      if (sq_dist(pc.coords[i], res.centroids[c]) < sq_dist(pc.coords[best], res.centroids[c])) best = i;
    }
    key_indices[c] = best;
    ps.pre_dup_counts[c] = members[c].size();
    fill_row(std::move(members[c]), k, sampling, rng, ps.assign.data() + c * k);
  }
  ps.keys = keys_from_indices(pc, key_indices);
  res.labels = std::move(labels);
  return res;
}

PatchSet kmeans_group(const PointCloud& pc, const KeyPoints& keys_init, std::size_t k, std::size_t max_iters,
                      ClusterSampling sampling, Rng* rng) {
  return kmeans_cluster(pc, keys_init, k, max_iters, sampling, rng).patches;
}

PatchSet fpc_group(const PointCloud& pc, const KeyPoints& keys, std::size_t k, ClusterSampling sampling, Rng* rng) {
  require_samples(k, "fpc_group");
  const std::vector<std::size_t> t = nearest_key_assignment(pc, keys);
  auto members = members_by_label(t, keys.size());
  PatchSet ps;
  ps.keys = keys;
  ps.samples = k;
  ps.grouping = Grouping::kFpc;
  ps.assign.resize(keys.size() * k);
  ps.pre_dup_counts.resize(keys.size());
  for (std::size_t m = 0; m < keys.size(); ++m) {
    // A key's own point is at distance 0, so its cluster can only be empty
    // when duplicate coordinates send it to a lower-indexed twin key.
    if (members[m].empty()) {
      throw std::logic_error("fpc_group: key " + std::to_string(m) + " has no assigned points (duplicate key coordinates?)");
    }
    ps.pre_dup_counts[m] = members[m].size();
    fill_row(std::move(members[m]), k, sampling, rng, ps.assign.data() + m * k);
  }
  return ps;
}

PatchSet patchify(const PointCloud& pc, const PatchifyOptions& options, Rng* rng) {
  KeyPoints keys = farthest_point_sampling(pc, options.patches);
  switch (options.grouping) {
    case Grouping::kBall: return ball_query_group(pc, keys, options.samples, options.radius);
    case Grouping::kKnn: return knn_group(pc, keys, options.samples, options.search);
    case Grouping::kKMeans: return kmeans_group(pc, keys, options.samples, options.kmeans_iters, options.sampling, rng);
    case Grouping::kFpc: return fpc_group(pc, keys, options.samples, options.sampling, rng);
  }
  throw std::invalid_argument("patchify: bad grouping");
}

PatchTensor gather_patches(const PointCloud& pc, const PatchSet& ps) {
  const std::size_t m = ps.num_patches(), k = ps.samples, ce = pc.extra_channels;
  if (ps.assign.size() != m * k) throw std::invalid_argument("gather_patches: assignment matrix is not M x K");
  std::vector<double> offsets(m * k * 3), keys(m * 3), extras(m * k * ce);
  for (std::size_t p = 0; p < m; ++p) {
    const Vec3& key = ps.keys.coords[p];
    for (int a = 0; a < 3; ++a) keys[p * 3 + a] = key[a];
    for (std::size_t j = 0; j < k; ++j) {
      const std::size_t i = ps.assign[p * k + j];
      if (i >= pc.size()) throw std::out_of_range("gather_patches: point index out of range");
      for (int a = 0; a < 3; ++a) offsets[(p * k + j) * 3 + a] = pc.coords[i][a] - key[a];
      for (std::size_t c = 0; c < ce; ++c) extras[(p * k + j) * ce + c] = pc.extras[i * ce + c];
    }
  }
  PatchTensor pt;
  pt.offsets = Tensor::from({m, k, 3}, std::move(offsets));
  pt.key_coords = Tensor::from({m, 3}, std::move(keys));
  if (ce > 0) pt.extras = Tensor::from({m, k, ce}, std::move(extras));
  return pt;
}

}  // namespace plainpt
