#pragma once

#include <cstdint>
#include <string>
#include <string_view>

#include "plainpt/nn.hpp"
#include "plainpt/params.hpp"
#include "plainpt/tensor.hpp"

namespace plainpt {

// Shared PointNet: per-point MLP of widths (C/4, C/2, C) followed by a max
// over the K points of each patch.
class PatchEmbed {
 public:
  PatchEmbed() = default;
  PatchEmbed(ParameterStore& store, const std::string& prefix, std::size_t in_channels, std::size_t channels);

  // patches: [M, K, C_in] -> [M, C]
  Tensor operator()(const Tensor& patches) const;

 private:
  Mlp mlp_;
};

enum class PosEmbedKind { kNone, kFourier, kMlp, kGlobal };

std::string_view to_string(PosEmbedKind kind);
PosEmbedKind parse_pos_embed(std::string_view name);

// Maps key-point coordinates [M, 3] to [M, C].
class PositionEmbedding {
 public:
  PositionEmbedding() = default;
  PositionEmbedding(ParameterStore& store, const std::string& prefix, PosEmbedKind kind, std::size_t channels,
                    double fourier_sigma = 1.0, std::uint64_t fourier_seed = 0);

  Tensor operator()(const Tensor& keys) const;
  // Max-pooled MLP1 feature over `keys` ([1, C]); global kind only.
  Tensor global_feature(const Tensor& keys) const;

  PosEmbedKind kind() const { return kind_; }
  std::size_t channels() const { return channels_; }
  const Tensor& fourier_basis() const { return basis_; }
  const Mlp& output_mlp() const { return kind_ == PosEmbedKind::kGlobal ? mlp2_ : mlp1_; }

 private:
  PosEmbedKind kind_ = PosEmbedKind::kNone;
  std::size_t channels_ = 0;
  Mlp mlp1_;     // per-key MLP (mlp kind) or the pre-pooling MLP (global kind)
  Mlp mlp2_;     // post-concatenation MLP (global kind)
  Tensor basis_;  // [3, C/2] Fourier frequencies
};

}  // namespace plainpt
