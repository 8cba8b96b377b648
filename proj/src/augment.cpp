#include "plainpt/augment.hpp"

#include <cmath>
#include <numbers>

namespace plainpt {

PointCloud rotate_z(const PointCloud& pc, double angle) {
  PointCloud out = pc;
  const double c = std::cos(angle), s = std::sin(angle);
  for (Vec3& p : out.coords) {
    const double x = p[0], y = p[1];
    p[0] = c * x - s * y;
    p[1] = s * x + c * y;
  }
  return out;
}

PointCloud augment(const PointCloud& pc, Rng& rng, const AugmentFlags& flags, AugmentRecord* record) {
  AugmentRecord rec;
  PointCloud out = pc;
  if (flags.flip && rng.bernoulli(0.5)) {
    rec.flipped = true;
    for (Vec3& p : out.coords) p[0] = -p[0];
  }
  if (flags.rotate) {
    rec.angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    out = rotate_z(out, rec.angle);
  }
  if (flags.scale) {
    rec.scale = rng.uniform(flags.scale_min, flags.scale_max);
    for (Vec3& p : out.coords)
      for (double& v : p) v *= rec.scale;
  }
  if (flags.translate) {
    for (double& t : rec.translation) t = rng.uniform(-flags.translate_range, flags.translate_range);
    for (Vec3& p : out.coords)
      for (int a = 0; a < 3; ++a) p[a] += rec.translation[a];
  }
  if (record != nullptr) *record = rec;
  return out;
}

}  // namespace plainpt
