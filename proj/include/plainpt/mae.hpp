#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "plainpt/embed.hpp"
#include "plainpt/geometry.hpp"
#include "plainpt/nn.hpp"
#include "plainpt/patchify.hpp"
#include "plainpt/rng.hpp"
#include "plainpt/transformer.hpp"

namespace plainpt {

struct MaskRatios {
  double drop = 0.5;
  double mask = 0.25;
  double reserve = 0.25;
};

// Disjoint dropped / masked / reserved patch indices, each ascending.
struct MaskPartition {
  std::vector<std::size_t> dropped;
  std::vector<std::size_t> masked;
  std::vector<std::size_t> reserved;
  MaskRatios ratios;

  std::size_t num_patches() const { return dropped.size() + masked.size() + reserved.size(); }
};

// Sizes: floor(drop * M) dropped, floor(mask * M) masked, the rest reserved.
MaskPartition partition_patches(std::size_t m, const MaskRatios& ratios, Rng& rng);

// Mean over p of the squared distance to the nearest q, plus the same from q
// to p.
double chamfer_l2(std::span<const Vec3> p, std::span<const Vec3> q);

struct DecoderConfig {
  std::size_t layers = 2;
  std::size_t channels = 256;
  std::size_t heads = 4;
  std::size_t ffn_channels = 256;
  double dropout = 0.1;
};

struct MaeConfig {
  EncoderConfig encoder;
  DecoderConfig decoder;
  PosEmbedKind pos_embed = PosEmbedKind::kGlobal;
  double fourier_sigma = 1.0;
  std::size_t samples = 32;         // K
  std::size_t extra_channels = 0;   // e.g. 3 for colors; fed to the encoder, never reconstructed

  void validate() const;
};

struct Reconstruction {
  Tensor pred_offsets;    // [|masked|, K, 3]
  Tensor target_offsets;  // [|masked|, K, 3]
  std::vector<std::size_t> masked;
  Tensor encoder_out;     // [|reserved|, C]
  Tensor decoder_in;      // [|reserved| + |masked|, C], position embedding included
};

class MaeModel {
 public:
  MaeModel(const MaeConfig& cfg, ParameterStore& store);

  // Encodes reserved patches only, decodes reserved + masked positions and
  // predicts K offsets per masked patch. Dropped patches are never read.
  Reconstruction forward(const PatchTensor& patches, const MaskPartition& part, const ForwardContext& ctx) const;

  // Encoder path alone: features of the given patches with pooling over
  // exactly their keys.
  Tensor encode(const PatchTensor& patches, std::span<const std::size_t> indices, const ForwardContext& ctx) const;

  const MaeConfig& config() const { return cfg_; }
  const PositionEmbedding& encoder_pos() const { return enc_pos_; }
  const Linear& head() const { return head_; }
  const Tensor& mask_token() const { return mask_token_; }

 private:
  MaeConfig cfg_;
  PatchEmbed patch_embed_;
  PositionEmbedding enc_pos_;
  TransformerEncoder encoder_;
  Mlp projection_;
  Tensor mask_token_;
  PositionEmbedding dec_pos_;
  TransformerEncoder decoder_;
  LayerNorm dec_norm_;  // on decoder outputs, ahead of the head
  Linear head_;
};

// Mean over masked patches of the Chamfer-L2 distance between predicted and
// target offsets; 0 when nothing is masked.
Tensor mae_loss(const Reconstruction& rec);

}  // namespace plainpt
