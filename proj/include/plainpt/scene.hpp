#pragma once

#include <cstdint>

#include "plainpt/geometry.hpp"

namespace plainpt {

struct SceneOptions {
  std::size_t points = 20000;
  double room_size = 4.0;   // metres, square floor
  double jitter = 0.005;    // Gaussian noise stddev, metres
  std::size_t min_objects = 3;
  std::size_t max_objects = 6;
  bool colors = false;
};

// Indoor-like scene: floor, two walls and a seeded mix of boxes, spheres and
// cylinders. Every primitive gets its own sampling density, so point density
// varies across the scene. Output is a pure function of (seed, options).
PointCloud synthetic_scene(std::uint64_t seed, const SceneOptions& options = {});

}  // namespace plainpt
