#include "plainpt/heads.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace plainpt {

std::vector<double> inverse_distance_weights(std::span<const double> distances, double epsilon) {
  std::vector<double> w(distances.size());
  double total = 0.0;
  for (std::size_t i = 0; i < distances.size(); ++i) total += (w[i] = 1.0 / std::max(distances[i], epsilon));
  for (double& v : w) v /= total;
  return w;
}

SegmentationHead::SegmentationHead(ParameterStore& store, const std::string& prefix, std::size_t in_channels,
                                   std::size_t num_classes, std::size_t hidden, double dropout)
    : hidden_(hidden),
      num_classes_(num_classes),
      dropout_(dropout),
      patch_proj_(store, prefix + ".patch_proj", in_channels, {hidden, hidden}, true),
      neighbor_proj_(store, prefix + ".neighbor_proj", hidden + 1, {hidden, hidden}, true),
      cls_hidden_(store, prefix + ".cls.0", hidden, hidden, false),
      cls_norm_(store, prefix + ".cls.0.norm", hidden),
      cls_out_(store, prefix + ".cls.1", hidden, num_classes) {
  if (num_classes < 2) throw std::invalid_argument("segmentation head needs at least 2 classes");
}

Interpolation SegmentationHead::interpolate(std::span<const Vec3> queries, std::span<const Vec3> keys,
                                            const Tensor& features, const InterpolationSpec& spec) const {
  if (spec.neighbors == 0 || spec.neighbors > keys.size()) {
    throw std::invalid_argument("interpolate_features: need 1 <= neighbors <= " + std::to_string(keys.size()));
  }
  if (features.rank() != 2 || features.dim(0) != keys.size()) {
    throw ShapeError("interpolate_features: features " + shape_str(features.shape()) + " for " +
                     std::to_string(keys.size()) + " keys");
  }
  const std::size_t n = spec.neighbors, q = queries.size();
  Interpolation out;
  out.neighbors = knn_search(queries, keys, n);
  std::vector<double> dist(q * n);
  out.weights.resize(q * n);
  for (std::size_t i = 0; i < q; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      dist[i * n + j] = std::sqrt(sq_dist(queries[i], keys[out.neighbors[i * n + j]]));
    }
    auto w = inverse_distance_weights(std::span<const double>(dist).subspan(i * n, n), spec.epsilon);
    std::copy(w.begin(), w.end(), out.weights.begin() + static_cast<long>(i * n));
  }
  Tensor projected = patch_proj_(features);
  const Tensor parts[] = {gather_rows(projected, out.neighbors), Tensor::from({q * n, 1}, dist)};
  out.features = group_weighted_sum(neighbor_proj_(concat_last(parts)), out.weights, n);
  return out;
}

Tensor SegmentationHead::operator()(std::span<const Vec3> queries, std::span<const Vec3> keys, const Tensor& features,
                                    const InterpolationSpec& spec, const ForwardContext& ctx) const {
  Tensor h = interpolate(queries, keys, features, spec).features;
  h = dropout(relu(cls_norm_(cls_hidden_(h))), dropout_, ctx);
  return cls_out_(h);
}

}  // namespace plainpt
