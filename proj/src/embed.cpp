#include "plainpt/embed.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace plainpt {

PatchEmbed::PatchEmbed(ParameterStore& store, const std::string& prefix, std::size_t in_channels,
                       std::size_t channels)
    : mlp_(store, prefix + ".mlp", in_channels, {channels / 4, channels / 2, channels}, false) {}

Tensor PatchEmbed::operator()(const Tensor& patches) const {
  if (patches.rank() != 3) throw ShapeError("patch_embed: expected [M, K, C_in], got " + shape_str(patches.shape()));
  return max_reduce(mlp_(patches), 1).values;
}

std::string_view to_string(PosEmbedKind kind) {
  switch (kind) {
    case PosEmbedKind::kNone: return "none";
    case PosEmbedKind::kFourier: return "fourier";
    case PosEmbedKind::kMlp: return "mlp";
    case PosEmbedKind::kGlobal: return "global";
  }
  return "?";
}

PosEmbedKind parse_pos_embed(std::string_view name) {
  if (name == "none") return PosEmbedKind::kNone;
  if (name == "fourier") return PosEmbedKind::kFourier;
  if (name == "mlp") return PosEmbedKind::kMlp;
  if (name == "global") return PosEmbedKind::kGlobal;
  throw std::invalid_argument("unknown position embedding '" + std::string(name) +
                              "' (expected none, fourier, mlp or global)");
}

PositionEmbedding::PositionEmbedding(ParameterStore& store, const std::string& prefix, PosEmbedKind kind,
                                     std::size_t channels, double fourier_sigma, std::uint64_t fourier_seed)
    : kind_(kind), channels_(channels) {
  switch (kind) {
    case PosEmbedKind::kNone: break;
    case PosEmbedKind::kFourier: {
      if (channels % 2 != 0) throw std::invalid_argument("fourier position embedding needs an even channel count");
      Rng rng(fourier_seed, 0xf0u);
      std::vector<double> b(3 * channels / 2);
      for (double& v : b) v = fourier_sigma * rng.normal();
      basis_ = Tensor::from({3, channels / 2}, std::move(b));
      break;
    }
    case PosEmbedKind::kMlp:
      mlp1_ = Mlp(store, prefix + ".mlp", 3, {channels, channels, channels}, true);
      break;
    case PosEmbedKind::kGlobal:
      mlp1_ = Mlp(store, prefix + ".local", 3, {channels / 4, channels / 4, channels}, false);
      mlp2_ = Mlp(store, prefix + ".fuse", channels + 3, {channels, channels, channels}, true);
      break;
  }
}

Tensor PositionEmbedding::global_feature(const Tensor& keys) const {
  if (kind_ != PosEmbedKind::kGlobal) throw std::logic_error("global_feature: not a global position embedding");
  Tensor pooled = max_reduce(mlp1_(keys), 0).values;
  return reshape(pooled, {1, channels_});
}

Tensor PositionEmbedding::operator()(const Tensor& keys) const {
  if (keys.rank() != 2 || keys.dim(1) != 3) throw ShapeError("pos_embed: expected [M, 3], got " + shape_str(keys.shape()));
  const std::size_t m = keys.dim(0);
  switch (kind_) {
    case PosEmbedKind::kNone:
      return Tensor::zeros({m, channels_});
    case PosEmbedKind::kFourier: {
      // Constant in the parameters: computed outside the tape.
      const std::size_t half = channels_ / 2;
      std::vector<double> out(m * channels_);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < half; ++j) {
          double proj = 0.0;
          for (std::size_t a = 0; a < 3; ++a) proj += keys[i * 3 + a] * basis_[a * half + j];
          const double angle = 2.0 * std::numbers::pi * proj;
          out[i * channels_ + j] = std::sin(angle);
          out[i * channels_ + half + j] = std::cos(angle);
        }
      return Tensor::from({m, channels_}, std::move(out));
    }
    case PosEmbedKind::kMlp:
      return mlp1_(keys);
    case PosEmbedKind::kGlobal: {
      if (m == 0) throw ShapeError("pos_embed: global pooling over an empty key set");
      Tensor g = global_feature(keys);
      std::vector<std::size_t> rows(m, 0);
      const Tensor parts[] = {gather_rows(g, rows), keys};
      return mlp2_(concat_last(parts));
    }
  }
  throw std::logic_error("pos_embed: bad kind");
}

}  // namespace plainpt
