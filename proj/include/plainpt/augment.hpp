#pragma once

#include "plainpt/geometry.hpp"
#include "plainpt/rng.hpp"

namespace plainpt {

struct AugmentFlags {
  bool flip = true;       // negate x with probability 0.5
  bool rotate = true;     // uniform angle about +z
  bool scale = true;
  bool translate = true;
  double scale_min = 0.8;
  double scale_max = 1.2;
  double translate_range = 0.5;  // metres, per axis
};

// What a call to augment() actually applied.
struct AugmentRecord {
  bool flipped = false;
  double angle = 0.0;
  double scale = 1.0;
  Vec3 translation{0.0, 0.0, 0.0};
};

PointCloud rotate_z(const PointCloud& pc, double angle);

// Applied in order flip, rotate, scale, translate. Extras pass through.
PointCloud augment(const PointCloud& pc, Rng& rng, const AugmentFlags& flags, AugmentRecord* record = nullptr);

}  // namespace plainpt
