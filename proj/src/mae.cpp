#include "plainpt/mae.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace plainpt {

MaskPartition partition_patches(std::size_t m, const MaskRatios& ratios, Rng& rng) {
  if (ratios.drop < 0.0 || ratios.mask < 0.0 || ratios.reserve < 0.0 ||
      std::abs(ratios.drop + ratios.mask + ratios.reserve - 1.0) > 1e-9) {
    throw std::invalid_argument("partition_patches: ratios must be non-negative and sum to 1");
  }
  if (!(ratios.reserve > 0.0)) throw std::invalid_argument("partition_patches: reserve ratio must be positive");
  const auto n_drop = static_cast<std::size_t>(std::floor(ratios.drop * static_cast<double>(m)));
  const auto n_mask = static_cast<std::size_t>(std::floor(ratios.mask * static_cast<double>(m)));
  if (n_drop + n_mask >= m) {
    throw std::invalid_argument("partition_patches: no reserved patches left for M = " + std::to_string(m));
  }
  std::vector<std::size_t> perm(m);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(perm));

  MaskPartition part;
  part.ratios = ratios;
  part.dropped.assign(perm.begin(), perm.begin() + static_cast<long>(n_drop));
  part.masked.assign(perm.begin() + static_cast<long>(n_drop), perm.begin() + static_cast<long>(n_drop + n_mask));
  part.reserved.assign(perm.begin() + static_cast<long>(n_drop + n_mask), perm.end());
  std::sort(part.dropped.begin(), part.dropped.end());
  std::sort(part.masked.begin(), part.masked.end());
  std::sort(part.reserved.begin(), part.reserved.end());
  return part;
}

double chamfer_l2(std::span<const Vec3> p, std::span<const Vec3> q) {
  if (p.empty() || q.empty()) throw std::invalid_argument("chamfer_l2: empty point set");
  auto directed = [](std::span<const Vec3> from, std::span<const Vec3> to) {
    double total = 0.0;
    for (const Vec3& a : from) {
      double best = std::numeric_limits<double>::infinity();
      for (const Vec3& b : to) best = std::min(best, sq_dist(a, b));
      total += best;
    }
    return total / static_cast<double>(from.size());
  };
  return directed(p, q) + directed(q, p);
}

void MaeConfig::validate() const {
  encoder.validate();
  EncoderConfig dec{decoder.layers, decoder.channels, decoder.heads, decoder.ffn_channels, decoder.dropout,
                    encoder.pos_injection, encoder.norm};
  dec.validate();
  if (decoder.channels != encoder.channels) {
    throw std::invalid_argument("decoder channels must equal encoder channels");
  }
  if (encoder.channels % 4 != 0) throw std::invalid_argument("channels must be divisible by 4");
  if (samples == 0) throw std::invalid_argument("samples per patch must be >= 1");
}

namespace {

EncoderConfig decoder_stack_config(const MaeConfig& cfg) {
  return {cfg.decoder.layers,  cfg.decoder.channels,      cfg.decoder.heads, cfg.decoder.ffn_channels,
          cfg.decoder.dropout, cfg.encoder.pos_injection, cfg.encoder.norm};
}

Tensor patch_inputs(const PatchTensor& pt, std::span<const std::size_t> idx) {
  Tensor offsets = gather_rows(pt.offsets, idx);
  if (!pt.extras.defined()) return offsets;
  const Tensor parts[] = {offsets, gather_rows(pt.extras, idx)};
  return concat_last(parts);
}

}  // namespace

MaeModel::MaeModel(const MaeConfig& cfg, ParameterStore& store) : cfg_(cfg) {
  cfg.validate();
  const std::size_t c = cfg.encoder.channels;
  patch_embed_ = PatchEmbed(store, "encoder.patch_embed", 3 + cfg.extra_channels, c);
  enc_pos_ = PositionEmbedding(store, "encoder.pos_embed", cfg.pos_embed, c, cfg.fourier_sigma, store.seed());
  encoder_ = TransformerEncoder(store, "encoder.transformer", cfg.encoder);
  projection_ = Mlp(store, "decoder.projection", c, {c, c, c}, true);
  mask_token_ = store.add_normal("decoder.mask_token", {1, c}, 0.02);
  dec_pos_ = PositionEmbedding(store, "decoder.pos_embed", cfg.pos_embed, c, cfg.fourier_sigma, store.seed() + 1);
  decoder_ = TransformerEncoder(store, "decoder.transformer", decoder_stack_config(cfg));
  dec_norm_ = LayerNorm(store, "decoder.norm", c);
  head_ = Linear(store, "decoder.head", c, 3 * cfg.samples);
}

Tensor MaeModel::encode(const PatchTensor& pt, std::span<const std::size_t> indices, const ForwardContext& ctx) const {
  Tensor features = patch_embed_(patch_inputs(pt, indices));
  Tensor pos = enc_pos_(gather_rows(pt.key_coords, indices));
  return encoder_(features, pos, ctx);
}

Reconstruction MaeModel::forward(const PatchTensor& pt, const MaskPartition& part, const ForwardContext& ctx) const {
  if (part.num_patches() != pt.num_patches()) {
    throw std::invalid_argument("mae_forward: partition covers " + std::to_string(part.num_patches()) +
                                " patches but the input has " + std::to_string(pt.num_patches()));
  }
  if (pt.samples() != cfg_.samples || pt.extra_channels() != cfg_.extra_channels) {
    throw std::invalid_argument("mae_forward: patch tensor does not match the model configuration");
  }
  if (part.reserved.empty()) throw std::invalid_argument("mae_forward: no reserved patches");

  Reconstruction rec;
  rec.masked = part.masked;
  rec.encoder_out = encode(pt, part.reserved, ctx);

  std::vector<std::size_t> visible = part.reserved;
  visible.insert(visible.end(), part.masked.begin(), part.masked.end());
  std::vector<Tensor> rows{projection_(rec.encoder_out)};
  if (!part.masked.empty()) rows.push_back(gather_rows(mask_token_, std::vector<std::size_t>(part.masked.size(), 0)));
  Tensor tokens = concat_rows(rows);
  Tensor pos = dec_pos_(gather_rows(pt.key_coords, visible));
  rec.decoder_in = add(tokens, pos);

  Tensor decoded = decoder_(tokens, pos, ctx);
  const std::size_t k = cfg_.samples, n_masked = part.masked.size();
  if (n_masked == 0) {
    rec.pred_offsets = Tensor::zeros({0, k, 3});
    rec.target_offsets = Tensor::zeros({0, k, 3});
    return rec;
  }
  Tensor masked_out = slice_rows(decoded, part.reserved.size(), n_masked);
  rec.pred_offsets = reshape(head_(dec_norm_(masked_out)), {n_masked, k, 3});
  rec.target_offsets = gather_rows(pt.offsets, part.masked);
  return rec;
}

Tensor mae_loss(const Reconstruction& rec) {
  if (rec.pred_offsets.shape() != rec.target_offsets.shape()) {
    throw ShapeError("mae_loss: prediction " + shape_str(rec.pred_offsets.shape()) + " vs target " +
                     shape_str(rec.target_offsets.shape()));
  }
  return chamfer_l2_batch(rec.pred_offsets, rec.target_offsets);
}

}  // namespace plainpt
