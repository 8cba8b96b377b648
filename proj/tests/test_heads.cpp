#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numeric>

#include "plainpt/heads.hpp"
#include "support.hpp"

using namespace plainpt;
using namespace plainpt::testing;

namespace {

std::vector<Vec3> random_points(Rng& rng, std::size_t n) {
  std::vector<Vec3> v(n);
  for (auto& p : v) p = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
  return v;
}

}  // namespace

TEST_CASE("inverse distance weights") {
  const std::vector<double> d = {1.0, 2.0, 4.0};
  const auto w = inverse_distance_weights(d, 1e-8);
  CHECK(w[0] == doctest::Approx(4.0 / 7.0));
  CHECK(w[1] == doctest::Approx(2.0 / 7.0));
  CHECK(w[2] == doctest::Approx(1.0 / 7.0));

  // A query sitting on a key: the clamp keeps the weight finite and dominant.
  const std::vector<double> hit = {0.0, 0.5, 1.0};
  const auto h = inverse_distance_weights(hit, 1e-8);
  CHECK(std::isfinite(h[0]));
  CHECK(h[0] > 1.0 - 1e-7);
  CHECK(h[0] == doctest::Approx(1e8 / (1e8 + 2.0 + 1.0)).epsilon(1e-15));
}

TEST_CASE("interpolation weights are convex") {
  ParameterStore store(1);
  SegmentationHead head(store, "seg", 8, 4, 12, 0.0);
  Rng rng(2);
  const auto keys = random_points(rng, 9);
  const auto queries = random_points(rng, 20);
  const Tensor feats = random_tensor(rng, {9, 8});
  const Interpolation in = head.interpolate(queries, keys, feats, InterpolationSpec{});
  CHECK(in.features.shape() == Shape{20, 12});
  for (std::size_t q = 0; q < 20; ++q) {
    double s = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      CHECK(in.weights[q * 5 + j] >= 0.0);
      s += in.weights[q * 5 + j];
    }
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  CHECK_THROWS(head.interpolate(queries, keys, feats, InterpolationSpec{10, 1e-8}));
  CHECK_THROWS(head.interpolate(queries, keys, feats, InterpolationSpec{0, 1e-8}));
  CHECK_THROWS_AS(head.interpolate(queries, keys, random_tensor(rng, {8, 8}), InterpolationSpec{}), ShapeError);
}

TEST_CASE("equidistant keys with identical features interpolate to that feature") {
  ParameterStore store(3);
  SegmentationHead head(store, "seg", 6, 3, 10, 0.0);
  const std::vector<Vec3> keys = {{-1, 0, 0}, {1, 0, 0}};
  const std::vector<Vec3> mid = {{0, 0.3, 0}};
  Rng rng(4);
  std::vector<double> f = random_values(rng, 6);
  f.insert(f.end(), f.begin(), f.end());
  const Tensor feats = Tensor::from({2, 6}, f);
  const Interpolation two = head.interpolate(mid, keys, feats, InterpolationSpec{2, 1e-8});
  const Interpolation one = head.interpolate(mid, keys, feats, InterpolationSpec{1, 1e-8});
  CHECK(two.weights[0] == 0.5);
  CHECK(max_abs_diff(two.features.data(), one.features.data()) < 1e-15);
}

TEST_CASE("one key gives the same logits to every query at the same distance") {
  ParameterStore store(5);
  SegmentationHead head(store, "seg", 8, 13, 96, 0.5);
  const std::vector<Vec3> key = {{0.1, 0.2, 0.3}};
  std::vector<Vec3> queries;
  Rng rng(6);
  for (int i = 0; i < 10; ++i) {
    Vec3 d = {rng.normal(), rng.normal(), rng.normal()};
    const double n = std::sqrt(d[0] * d[0] + d[1] * d[1] + d[2] * d[2]);
    queries.push_back({0.1 + 0.5 * d[0] / n, 0.2 + 0.5 * d[1] / n, 0.3 + 0.5 * d[2] / n});
  }
  const Tensor feats = random_tensor(rng, {1, 8});
  const Tensor logits = head(queries, key, feats, InterpolationSpec{1, 1e-8}, ForwardContext{});
  CHECK(logits.shape() == Shape{10, 13});
  for (std::size_t q = 1; q < 10; ++q)
    for (std::size_t c = 0; c < 13; ++c) CHECK(logits[q * 13 + c] == doctest::Approx(logits[c]).epsilon(1e-12));
}

TEST_CASE("logits do not depend on the order of keys") {
  ParameterStore store(7);
  SegmentationHead head(store, "seg", 8, 4, 12, 0.0);
  Rng rng(8);
  const auto keys = random_points(rng, 7);
  const auto queries = random_points(rng, 15);
  const Tensor feats = random_tensor(rng, {7, 8});
  std::vector<std::size_t> perm(7);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(std::span<std::size_t>(perm));
  std::vector<Vec3> pk;
  std::vector<double> pf;
  for (std::size_t i : perm) {
    pk.push_back(keys[i]);
    pf.insert(pf.end(), feats.data().begin() + i * 8, feats.data().begin() + (i + 1) * 8);
  }
  const Tensor a = head(queries, keys, feats, InterpolationSpec{}, ForwardContext{});
  const Tensor b = head(queries, pk, Tensor::from({7, 8}, pf), InterpolationSpec{}, ForwardContext{});
  CHECK(max_abs_diff(a.data(), b.data()) < 1e-12);
}

TEST_CASE("dropout in the classifier only applies in training mode") {
  ParameterStore store(9);
  SegmentationHead head(store, "seg", 8, 4);
  Rng rng(10);
  const auto keys = random_points(rng, 6);
  const auto queries = random_points(rng, 12);
  const Tensor feats = random_tensor(rng, {6, 8});
  const Tensor eval = head(queries, keys, feats, InterpolationSpec{}, ForwardContext{});
  CHECK(values(eval) == values(head(queries, keys, feats, InterpolationSpec{}, ForwardContext{})));
  Rng drop(11);
  CHECK(values(head(queries, keys, feats, InterpolationSpec{}, ForwardContext{true, &drop})) != values(eval));
  CHECK_THROWS(SegmentationHead(store, "bad", 8, 1));
}
