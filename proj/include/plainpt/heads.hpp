#pragma once

#include <span>
#include <string>
#include <vector>

#include "plainpt/geometry.hpp"
#include "plainpt/nn.hpp"
#include "plainpt/params.hpp"
#include "plainpt/tensor.hpp"

namespace plainpt {

struct InterpolationSpec {
  std::size_t neighbors = 5;
  double epsilon = 1e-8;  // lower clamp on distances before inversion
};

struct Interpolation {
  Tensor features;                     // [Q, hidden]
  std::vector<std::size_t> neighbors;  // [Q, n] key indices
  std::vector<double> weights;         // [Q, n], rows sum to 1
};

// Inverse-distance weights of one query's neighbours, normalised to sum 1.
std::vector<double> inverse_distance_weights(std::span<const double> distances, double epsilon);

// Per-point semantic segmentation on top of patch features: project patch
// features, interpolate them to query points from the nearest keys, and
// classify.
class SegmentationHead {
 public:
  SegmentationHead(ParameterStore& store, const std::string& prefix, std::size_t in_channels,
                   std::size_t num_classes, std::size_t hidden = 96, double dropout = 0.5);

  Interpolation interpolate(std::span<const Vec3> queries, std::span<const Vec3> keys, const Tensor& features,
                            const InterpolationSpec& spec) const;

  // Logits [Q, num_classes].
  Tensor operator()(std::span<const Vec3> queries, std::span<const Vec3> keys, const Tensor& features,
                    const InterpolationSpec& spec, const ForwardContext& ctx) const;

  std::size_t num_classes() const { return num_classes_; }

 private:
  std::size_t hidden_;
  std::size_t num_classes_;
  double dropout_;
  Mlp patch_proj_;     // C -> hidden -> hidden
  Mlp neighbor_proj_;  // hidden + 1 (distance) -> hidden -> hidden
  Linear cls_hidden_;
  LayerNorm cls_norm_;
  Linear cls_out_;
};

}  // namespace plainpt
