#include "plainpt/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "plainpt/rng.hpp"

namespace plainpt {

namespace {

enum class Shape3 { kPlane, kBox, kSphere, kCylinder };

struct Primitive {
  Shape3 shape;
  Vec3 center;
  Vec3 size;       // plane: extents along its two axes (+ normal axis index in size[2]); box: half extents;
                   // sphere: radius in size[0]; cylinder: radius, half height
  double weight;   // area x density factor
  Vec3 color;
};

constexpr double kPi = std::numbers::pi;

Vec3 sample_box_surface(const Primitive& p, Rng& rng) {
  const double ax = p.size[0], ay = p.size[1], az = p.size[2];
  const double faces[3] = {ay * az, ax * az, ax * ay};
  double u = rng.uniform() * (faces[0] + faces[1] + faces[2]);
  int axis = u < faces[0] ? 0 : (u < faces[0] + faces[1] ? 1 : 2);
  Vec3 q{rng.uniform(-ax, ax), rng.uniform(-ay, ay), rng.uniform(-az, az)};
  q[axis] = rng.bernoulli(0.5) ? p.size[axis] : -p.size[axis];
  return {p.center[0] + q[0], p.center[1] + q[1], p.center[2] + q[2]};
}

Vec3 sample(const Primitive& p, Rng& rng) {
  switch (p.shape) {
    case Shape3::kPlane: {
      const int normal = static_cast<int>(p.size[2]);
      Vec3 q = p.center;
      const int a0 = normal == 0 ? 1 : 0, a1 = normal == 2 ? 1 : 2;
      q[a0] += rng.uniform(-0.5, 0.5) * p.size[0];
      q[a1] += rng.uniform(-0.5, 0.5) * p.size[1];
      return q;
    }
    case Shape3::kBox: return sample_box_surface(p, rng);
    case Shape3::kSphere: {
      const double z = rng.uniform(-1.0, 1.0), phi = rng.uniform(0.0, 2.0 * kPi), r = std::sqrt(1.0 - z * z);
      return {p.center[0] + p.size[0] * r * std::cos(phi), p.center[1] + p.size[0] * r * std::sin(phi),
              p.center[2] + p.size[0] * z};
    }
    case Shape3::kCylinder: {
      const double phi = rng.uniform(0.0, 2.0 * kPi);
      return {p.center[0] + p.size[0] * std::cos(phi), p.center[1] + p.size[0] * std::sin(phi),
              p.center[2] + rng.uniform(-p.size[1], p.size[1])};
    }
  }
  return p.center;
}

double area(const Primitive& p) {
  switch (p.shape) {
    case Shape3::kPlane: return p.size[0] * p.size[1];
    case Shape3::kBox: return 8.0 * (p.size[0] * p.size[1] + p.size[1] * p.size[2] + p.size[0] * p.size[2]);
    case Shape3::kSphere: return 4.0 * kPi * p.size[0] * p.size[0];
    case Shape3::kCylinder: return 4.0 * kPi * p.size[0] * p.size[1];
  }
  return 0.0;
}

}  // namespace

PointCloud synthetic_scene(std::uint64_t seed, const SceneOptions& options) {
  if (options.points == 0) throw std::invalid_argument("synthetic_scene: points must be positive");
  if (options.min_objects > options.max_objects) throw std::invalid_argument("synthetic_scene: min_objects > max_objects");
  Rng layout(seed, 0x5ce1e);
  const double room = options.room_size, half = room / 2.0;
  auto color = [&] { return Vec3{layout.uniform(), layout.uniform(), layout.uniform()}; };

  std::vector<Primitive> prims;
  prims.push_back({Shape3::kPlane, {0.0, 0.0, 0.0}, {room, room, 2.0}, 0.0, color()});
  prims.push_back({Shape3::kPlane, {-half, 0.0, 1.25}, {room, 2.5, 0.0}, 0.0, color()});
  prims.push_back({Shape3::kPlane, {0.0, half, 1.25}, {room, 2.5, 1.0}, 0.0, color()});

  const std::size_t objects =
      options.min_objects + static_cast<std::size_t>(layout.below(options.max_objects - options.min_objects + 1));
  for (std::size_t i = 0; i < objects; ++i) {
    const auto kind = static_cast<Shape3>(1 + layout.below(3));
    const double x = layout.uniform(-half + 0.5, half - 0.3), y = layout.uniform(-half + 0.3, half - 0.5);
    Primitive p{kind, {x, y, 0.0}, {}, 0.0, color()};
    switch (kind) {
      case Shape3::kBox:
        p.size = {layout.uniform(0.15, 0.6), layout.uniform(0.15, 0.6), layout.uniform(0.1, 0.5)};
        p.center[2] = p.size[2];
        break;
      case Shape3::kSphere:
        p.size = {layout.uniform(0.1, 0.4), 0.0, 0.0};
        p.center[2] = p.size[0] + layout.uniform(0.0, 0.8);
        break;
      case Shape3::kCylinder:
        p.size = {layout.uniform(0.05, 0.3), layout.uniform(0.2, 0.8), 0.0};
        p.center[2] = p.size[1];
        break;
      case Shape3::kPlane: break;
    }
    prims.push_back(p);
  }
  double total = 0.0;
  for (auto& p : prims) {
    // Log-uniform density factor over [1/3, 3].
    p.weight = area(p) * std::exp(layout.uniform(-std::log(3.0), std::log(3.0)));
    total += p.weight;
  }

  Rng points(seed, 0x9017);
  PointCloud pc;
  pc.coords.reserve(options.points);
  if (options.colors) pc.extra_channels = 3;
  for (std::size_t i = 0; i < options.points; ++i) {
    double u = points.uniform() * total;
    std::size_t which = 0;
    while (which + 1 < prims.size() && u >= prims[which].weight) u -= prims[which++].weight;
    const Primitive& p = prims[which];
    Vec3 q = sample(p, points);
    for (double& v : q) v += options.jitter * points.normal();
    pc.coords.push_back(q);
    if (options.colors) {
      for (double c : p.color) pc.extras.push_back(std::clamp(c + 0.05 * points.normal(), 0.0, 1.0));
    }
  }
  return pc;
}

}  // namespace plainpt
