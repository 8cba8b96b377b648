#include "plainpt/reconstruct.hpp"

#include <algorithm>
#include <stdexcept>

#include "plainpt/config.hpp"
#include "plainpt/mae.hpp"
#include "plainpt/pointcloud_io.hpp"

namespace plainpt {

namespace {

void append_point(PointCloud& out, const Vec3& p, const std::array<double, 3>& color) {
  out.coords.push_back(p);
  out.extras.insert(out.extras.end(), color.begin(), color.end());
}

void append_patch(PointCloud& out, const PointCloud& pc, const PatchSet& ps, std::size_t m,
                  const std::array<double, 3>& color) {
  auto row = ps.row(m);
  std::vector<std::size_t> unique(row.begin(), row.end());
  std::sort(unique.begin(), unique.end());
  unique.erase(std::unique(unique.begin(), unique.end()), unique.end());
  for (std::size_t i : unique) append_point(out, pc.coords[i], color);
}

}  // namespace

ReconstructionClouds reconstruct_cloud(const PointCloud& input, const Checkpoint& ckpt,
                                       const ReconstructOptions& options) {
  const RunConfig cfg = parse_run_config(ckpt.config_text, "checkpoint config");
  if (options.mask_ratio < 0 || options.drop_ratio < 0 || options.mask_ratio + options.drop_ratio >= 1.0) {
    throw std::invalid_argument("mask and drop ratios must be non-negative and sum to less than 1");
  }
  PointCloud pc = input;
  pc.validate();
  if (cfg.model.extra_channels > 0 && pc.extra_channels != cfg.model.extra_channels) {
    throw std::invalid_argument("checkpoint expects " + std::to_string(cfg.model.extra_channels) +
                                " color channels per point");
  }
  if (cfg.model.extra_channels == 0) {
    pc.extras.clear();
    pc.extra_channels = 0;
  }
  if (pc.size() < cfg.patchify.patches) {
    throw std::invalid_argument("cloud has " + std::to_string(pc.size()) + " points but the model needs " +
                                std::to_string(cfg.patchify.patches) + " patches");
  }

  ParameterStore store(ckpt.seed);
  MaeModel model(cfg.model, store);
  apply_checkpoint(ckpt, store);

  Rng rng(options.seed, 0x2ec);
  Rng group_rng = rng.split(1);
  const PatchSet ps = patchify(pc, cfg.patchify, &group_rng);
  const PatchTensor pt = gather_patches(pc, ps);
  Rng part_rng = rng.split(2);
  const MaskRatios ratios{options.drop_ratio, options.mask_ratio, 1.0 - options.drop_ratio - options.mask_ratio};
  const MaskPartition part = partition_patches(ps.num_patches(), ratios, part_rng);

  NoGradGuard guard;
  const Reconstruction rec = model.forward(pt, part, ForwardContext{});

  ReconstructionClouds out;
  out.loss = mae_loss(rec).item();
  out.masked_patches = part.masked.size();
  const auto palette = patch_palette(ps.num_patches(), options.seed);
  for (auto* cloud : {&out.original, &out.masked, &out.reconstructed}) cloud->extra_channels = 3;
  for (std::size_t m = 0; m < ps.num_patches(); ++m) append_patch(out.original, pc, ps, m, palette[m]);
  for (std::size_t m : part.reserved) {
    append_patch(out.masked, pc, ps, m, palette[m]);
    append_patch(out.reconstructed, pc, ps, m, palette[m]);
  }
  const std::size_t k = ps.samples;
  auto pred = rec.pred_offsets.data();
  for (std::size_t j = 0; j < part.masked.size(); ++j) {
    const Vec3& key = ps.keys.coords[part.masked[j]];
    for (std::size_t s = 0; s < k; ++s) {
      const double* o = &pred[(j * k + s) * 3];
      append_point(out.reconstructed, {key[0] + o[0], key[1] + o[1], key[2] + o[2]}, palette[part.masked[j]]);
    }
  }
  return out;
}

}  // namespace plainpt
