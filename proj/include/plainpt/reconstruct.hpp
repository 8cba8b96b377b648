#pragma once

#include <cstdint>

#include "plainpt/checkpoint.hpp"
#include "plainpt/geometry.hpp"

namespace plainpt {

struct ReconstructOptions {
  double mask_ratio = 0.25;
  double drop_ratio = 0.5;
  std::uint64_t seed = 0;
};

// The three panels of a reconstruction figure. Every patch keeps one color
// across panels: all patches, the reserved (visible) ones, and the reserved
// ones plus the predicted points of every masked patch.
struct ReconstructionClouds {
  PointCloud original;
  PointCloud masked;
  PointCloud reconstructed;
  double loss = 0.0;
  std::size_t masked_patches = 0;
};

ReconstructionClouds reconstruct_cloud(const PointCloud& pc, const Checkpoint& ckpt, const ReconstructOptions& options);

}  // namespace plainpt
