#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <set>

#include "plainpt/patchify.hpp"
#include "support.hpp"

using namespace plainpt;
using plainpt::testing::random_cloud;

namespace {

PointCloud line_cloud(std::vector<double> xs) {
  PointCloud pc;
  for (double x : xs) pc.coords.push_back({x, 0.0, 0.0});
  return pc;
}

std::vector<std::size_t> row(const PatchSet& ps, std::size_t m) {
  auto r = ps.row(m);
  return {r.begin(), r.end()};
}

std::set<std::size_t> unique_row(const PatchSet& ps, std::size_t m) {
  auto r = ps.row(m);
  return {r.begin(), r.end()};
}

}  // namespace

TEST_CASE("ball query") {
  PointCloud pc = line_cloud({0.0, 0.3, 0.1});
  const KeyPoints keys = keys_from_indices(pc, std::vector<std::size_t>{0});
  const PatchSet ps = ball_query_group(pc, keys, 4, 0.2);
  CHECK(row(ps, 0) == std::vector<std::size_t>{0, 2, 0, 2});
  CHECK(ps.pre_dup_counts[0] == 2);

  PointCloud lonely = line_cloud({0.0, 5.0});
  const PatchSet one = ball_query_group(lonely, keys_from_indices(lonely, std::vector<std::size_t>{1}), 4, 0.2);
  CHECK(row(one, 0) == std::vector<std::size_t>{1, 1, 1, 1});

  // A point exactly on the sphere is outside.
  PointCloud edge = line_cloud({0.0, 0.25});
  const PatchSet e = ball_query_group(edge, keys_from_indices(edge, std::vector<std::size_t>{0}), 2, 0.25);
  CHECK(row(e, 0) == std::vector<std::size_t>{0, 0});

  CHECK_THROWS(ball_query_group(pc, keys, 4, 0.0));
  CHECK_THROWS(ball_query_group(pc, keys, 0, 0.2));
}

TEST_CASE("ball query keeps offsets inside the radius") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    const PointCloud pc = random_cloud(rng, 500);
    const KeyPoints keys = farthest_point_sampling(pc, 20);
    const PatchSet ps = ball_query_group(pc, keys, 16, 0.3);
    const PatchTensor pt = gather_patches(pc, ps);
    auto off = pt.offsets.data();
    for (std::size_t i = 0; i < off.size(); i += 3) {
      CHECK(std::sqrt(off[i] * off[i] + off[i + 1] * off[i + 1] + off[i + 2] * off[i + 2]) < 0.3);
    }
  }
}

TEST_CASE("ball query membership does not depend on storage order") {
  Rng rng(3);
  const PointCloud pc = random_cloud(rng, 200);
  std::vector<std::size_t> perm(200);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span<std::size_t>(perm));
  PointCloud shuffled;
  for (std::size_t i : perm) shuffled.coords.push_back(pc.coords[i]);
  std::vector<std::size_t> inverse(200);
  for (std::size_t i = 0; i < 200; ++i) inverse[perm[i]] = i;

  const KeyPoints keys = keys_from_indices(pc, std::vector<std::size_t>{5, 50, 150});
  std::vector<std::size_t> moved_idx;
  for (std::size_t k : keys.source_indices) moved_idx.push_back(inverse[k]);
  const KeyPoints moved_keys = keys_from_indices(shuffled, moved_idx);
  // K = N collects every in-radius point, so the sets must agree.
  const PatchSet a = ball_query_group(pc, keys, 200, 0.5);
  const PatchSet b = ball_query_group(shuffled, moved_keys, 200, 0.5);
  for (std::size_t m = 0; m < 3; ++m) {
    std::set<std::size_t> mapped;
    for (std::size_t i : unique_row(b, m)) mapped.insert(perm[i]);
    CHECK(mapped == unique_row(a, m));
    CHECK(a.pre_dup_counts[m] == b.pre_dup_counts[m]);
  }
}

TEST_CASE("knn grouping") {
  Rng rng(4);
  const PointCloud pc = random_cloud(rng, 10);
  const KeyPoints keys = farthest_point_sampling(pc, 3);
  const PatchSet all = knn_group(pc, keys, 10);
  for (std::size_t m = 0; m < 3; ++m) CHECK(unique_row(all, m).size() == 10);
  CHECK_THROWS(knn_group(pc, keys, 11));

  // Two far clusters: each key's neighbourhood is its own cluster.
  PointCloud two;
  for (int i = 0; i < 5; ++i) two.coords.push_back({0.01 * i, 0, 0});
  for (int i = 0; i < 5; ++i) two.coords.push_back({100 + 0.01 * i, 0, 0});
  const KeyPoints ck = keys_from_indices(two, std::vector<std::size_t>{2, 7});
  const PatchSet ps = knn_group(two, ck, 5);
  CHECK(unique_row(ps, 0) == std::set<std::size_t>{0, 1, 2, 3, 4});
  CHECK(unique_row(ps, 1) == std::set<std::size_t>{5, 6, 7, 8, 9});
  CHECK(ps.pre_dup_counts == std::vector<std::size_t>{5, 5});

  // M * K > N forces overlap.
  const PatchSet over = knn_group(pc, keys, 4);
  std::size_t total = 0;
  std::set<std::size_t> uni;
  for (std::size_t m = 0; m < 3; ++m) {
    total += unique_row(over, m).size();
    for (std::size_t i : unique_row(over, m)) uni.insert(i);
  }
  CHECK(uni.size() < total);
}

TEST_CASE("fpc on collinear points") {
  const PointCloud pc = line_cloud({0, 1, 10, 11});
  const KeyPoints keys = keys_from_indices(pc, std::vector<std::size_t>{0, 2});
  const PatchSet ps = fpc_group(pc, keys, 2);
  CHECK(row(ps, 0) == std::vector<std::size_t>{0, 1});
  CHECK(row(ps, 1) == std::vector<std::size_t>{2, 3});

  const PatchSet dup = fpc_group(pc, keys, 3);
  CHECK(row(dup, 0) == std::vector<std::size_t>{0, 1, 0});

  const PointCloud single = line_cloud({0, 50});
  const PatchSet s = fpc_group(single, keys_from_indices(single, std::vector<std::size_t>{0, 1}), 3);
  CHECK(row(s, 1) == std::vector<std::size_t>{1, 1, 1});

  const PatchSet cut = fpc_group(line_cloud({0, 1, 2, 3, 10}), keys_from_indices(line_cloud({0, 1, 2, 3, 10}),
                                                                                  std::vector<std::size_t>{0, 4}),
                                 2);
  CHECK(row(cut, 0) == std::vector<std::size_t>{0, 1});
  CHECK(cut.pre_dup_counts == std::vector<std::size_t>{4, 1});
}

TEST_CASE("fpc random sampling is seeded and stays inside the cluster") {
  Rng rng(6);
  const PointCloud pc = random_cloud(rng, 300);
  const KeyPoints keys = farthest_point_sampling(pc, 8);
  Rng a(1), b(1);
  const PatchSet pa = fpc_group(pc, keys, 10, ClusterSampling::kRandom, &a);
  const PatchSet pb = fpc_group(pc, keys, 10, ClusterSampling::kRandom, &b);
  CHECK(pa.assign == pb.assign);
  const auto t = nearest_key_assignment(pc, keys);
  for (std::size_t m = 0; m < 8; ++m)
    for (std::size_t i : pa.row(m)) CHECK(t[i] == m);
  CHECK_THROWS(fpc_group(pc, keys, 10, ClusterSampling::kRandom, nullptr));
}

TEST_CASE("kmeans converges in one step on symmetric clusters") {
  PointCloud pc;
  pc.coords = {{0, 0, 0}, {1, 0, 0}, {10, 0, 0}, {11, 0, 0}};
  const KeyPoints init = keys_from_indices(pc, std::vector<std::size_t>{0, 2});
  const KMeansResult r = kmeans_cluster(pc, init, 2, 10);
  CHECK(r.iterations == 1);
  CHECK(r.converged);
  CHECK(r.centroids[0] == Vec3{0.5, 0, 0});
  CHECK(r.centroids[1] == Vec3{10.5, 0, 0});
  CHECK(r.labels == std::vector<std::size_t>{0, 0, 1, 1});
  // Both members tie for nearest to the mean; the lower index wins.
  CHECK(r.patches.keys.source_indices == std::vector<std::size_t>{0, 2});

  CHECK_THROWS(kmeans_group(pc, init, 2, 0));

  const KeyPoints one = keys_from_indices(pc, std::vector<std::size_t>{1});
  const PatchSet all = kmeans_group(pc, one, 4, 5);
  CHECK(unique_row(all, 0) == std::set<std::size_t>{0, 1, 2, 3});
}

TEST_CASE("kmeans reseeds empty clusters") {
  PointCloud pc;
  pc.coords = {{0, 0, 0}, {0, 0, 0}, {1, 0, 0}, {5, 0, 0}};
  // Two centroids start on the same point, so one cluster starts empty.
  const KeyPoints init = keys_from_indices(pc, std::vector<std::size_t>{0, 1});
  const KMeansResult r = kmeans_cluster(pc, init, 2, 10);
  std::vector<std::size_t> sizes(2, 0);
  for (std::size_t l : r.labels) ++sizes[l];
  CHECK(sizes[0] > 0);
  CHECK(sizes[1] > 0);
}

TEST_CASE("grouping names round-trip") {
  for (Grouping g : {Grouping::kBall, Grouping::kKnn, Grouping::kKMeans, Grouping::kFpc}) {
    CHECK(parse_grouping(to_string(g)) == g);
  }
  CHECK_THROWS(parse_grouping("voxel"));
}

TEST_CASE("patchify defaults follow the detection configuration") {
  const PatchifyOptions o;
  CHECK(o.grouping == Grouping::kFpc);
  CHECK(o.patches == 512);
  CHECK(o.samples == 128);
  CHECK(o.radius == 0.2);
}

TEST_CASE("every grouping emits M x K valid indices, non-overlapping where promised") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(seed);
    const PointCloud pc = random_cloud(rng, 600);
    for (Grouping g : {Grouping::kBall, Grouping::kKnn, Grouping::kKMeans, Grouping::kFpc}) {
      PatchifyOptions o;
      o.grouping = g;
      o.patches = 24;
      o.samples = 16;
      o.radius = 0.3;
      const PatchSet ps = patchify(pc, o);
      CAPTURE(to_string(g));
      REQUIRE(ps.assign.size() == 24 * 16);
      CHECK(ps.num_patches() == 24);
      for (std::size_t i : ps.assign) CHECK(i < pc.size());
      if (g == Grouping::kFpc || g == Grouping::kKMeans) {
        std::set<std::size_t> seen;
        std::size_t total = 0;
        for (std::size_t m = 0; m < 24; ++m) {
          const auto u = unique_row(ps, m);
          total += u.size();
          seen.insert(u.begin(), u.end());
        }
        CHECK(seen.size() == total);
      }
    }
  }
}

TEST_CASE("gather_patches centres on keys and ignores translation") {
  Rng rng(9);
  PointCloud pc = random_cloud(rng, 100);
  pc.extra_channels = 3;
  for (std::size_t i = 0; i < 100; ++i) pc.extras.insert(pc.extras.end(), {0.1, 0.2, 0.3});
  PatchifyOptions o;
  o.patches = 6;
  o.samples = 8;
  const PatchSet ps = patchify(pc, o);
  const PatchTensor pt = gather_patches(pc, ps);
  CHECK(pt.offsets.shape() == Shape{6, 8, 3});
  CHECK(pt.extras.shape() == Shape{6, 8, 3});
  CHECK(pt.extras[2] == 0.3);
  for (std::size_t m = 0; m < 6; ++m) {
    for (std::size_t k = 0; k < 8; ++k) {
      const Vec3& p = pc.coords[ps.row(m)[k]];
      for (int a = 0; a < 3; ++a) {
        CHECK(pt.offsets[(m * 8 + k) * 3 + a] + pt.key_coords[m * 3 + a] == doctest::Approx(p[a]).epsilon(1e-15));
      }
    }
  }

  PointCloud moved = pc;
  for (auto& p : moved.coords) p = {p[0] + 4.0, p[1] + 2.0, p[2] - 8.0};
  PatchSet moved_ps = ps;
  moved_ps.keys = keys_from_indices(moved, ps.keys.source_indices);
  const PatchTensor mt = gather_patches(moved, moved_ps);
  CHECK(plainpt::testing::max_abs_diff(mt.offsets.data(), pt.offsets.data()) < 1e-14);

  PointCloud lone = line_cloud({0, 9});
  const PatchSet only_key = ball_query_group(lone, keys_from_indices(lone, std::vector<std::size_t>{0}), 3, 0.1);
  const PatchTensor lt = gather_patches(lone, only_key);
  for (double v : lt.offsets.data()) CHECK(v == 0.0);
}
