#include "plainpt/transformer.hpp"

#include <cmath>
#include <stdexcept>

namespace plainpt {

std::string_view to_string(PosInjection p) { return p == PosInjection::kFirst ? "first" : "all"; }

PosInjection parse_pos_injection(std::string_view name) {
  if (name == "first") return PosInjection::kFirst;
  if (name == "all") return PosInjection::kAll;
  throw std::invalid_argument("unknown pos_injection '" + std::string(name) + "' (expected first or all)");
}

std::string_view to_string(NormPlacement p) { return p == NormPlacement::kPre ? "pre" : "post"; }

NormPlacement parse_norm_placement(std::string_view name) {
  if (name == "pre") return NormPlacement::kPre;
  if (name == "post") return NormPlacement::kPost;
  throw std::invalid_argument("unknown norm placement '" + std::string(name) + "' (expected pre or post)");
}

void EncoderConfig::validate() const {
  if (channels == 0 || heads == 0 || channels % heads != 0) {
    throw std::invalid_argument("encoder: channels (" + std::to_string(channels) + ") must be divisible by heads (" +
                                std::to_string(heads) + ")");
  }
  if (ffn_channels == 0) throw std::invalid_argument("encoder: ffn_channels must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw std::invalid_argument("encoder: dropout must lie in [0, 1)");
}

MultiHeadAttention::MultiHeadAttention(ParameterStore& store, const std::string& prefix, std::size_t channels,
                                       std::size_t heads, double dropout)
    : heads_(heads),
      dropout_(dropout),
      q_(store, prefix + ".q", channels, channels, false),
      k_(store, prefix + ".k", channels, channels, false),
      v_(store, prefix + ".v", channels, channels, false),
      out_(store, prefix + ".out", channels, channels) {
  if (heads == 0 || channels % heads != 0) throw std::invalid_argument("attention: channels must be divisible by heads");
}

Tensor MultiHeadAttention::operator()(const Tensor& x, const ForwardContext& ctx, std::vector<Tensor>* weights) const {
  if (x.rank() != 2 || x.dim(1) != q_.weight.dim(0)) {
    throw ShapeError("multi_head_attention: input " + shape_str(x.shape()) + " vs weight " +
                     shape_str(q_.weight.shape()));
  }
  const std::size_t c = x.dim(1), d = c / heads_;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  Tensor q = q_(x), k = k_(x), v = v_(x);
  std::vector<Tensor> per_head;
  per_head.reserve(heads_);
  for (std::size_t h = 0; h < heads_; ++h) {
    Tensor scores = scale(matmul_nt(slice_last(q, h * d, d), slice_last(k, h * d, d)), inv_sqrt_d);
    Tensor attn = softmax(scores);
    if (weights != nullptr) weights->push_back(attn);
    per_head.push_back(matmul(dropout(attn, dropout_, ctx), slice_last(v, h * d, d)));
  }
  return out_(concat_last(per_head));
}

TransformerLayer::TransformerLayer(ParameterStore& store, const std::string& prefix, const EncoderConfig& cfg)
    : norm_(cfg.norm),
      dropout_(cfg.dropout),
      norm1_(store, prefix + ".norm1", cfg.channels),
      norm2_(store, prefix + ".norm2", cfg.channels),
      attn_(store, prefix + ".attn", cfg.channels, cfg.heads, cfg.dropout),
      ffn1_(store, prefix + ".ffn1", cfg.channels, cfg.ffn_channels),
      ffn2_(store, prefix + ".ffn2", cfg.ffn_channels, cfg.channels) {}

Tensor TransformerLayer::operator()(const Tensor& x, const ForwardContext& ctx) const {
  auto ffn = [&](const Tensor& h) { return ffn2_(dropout(relu(ffn1_(h)), dropout_, ctx)); };
  if (norm_ == NormPlacement::kPre) {
    Tensor h = add(x, dropout(attn_(norm1_(x), ctx), dropout_, ctx));
    return add(h, dropout(ffn(norm2_(h)), dropout_, ctx));
  }
  Tensor h = norm1_(add(x, dropout(attn_(x, ctx), dropout_, ctx)));
  return norm2_(add(h, dropout(ffn(h), dropout_, ctx)));
}

TransformerEncoder::TransformerEncoder(ParameterStore& store, const std::string& prefix, const EncoderConfig& cfg)
    : cfg_(cfg) {
  cfg.validate();
  for (std::size_t i = 0; i < cfg.layers; ++i) layers_.emplace_back(store, prefix + ".layer" + std::to_string(i), cfg);
}

Tensor TransformerEncoder::operator()(const Tensor& features, const Tensor& pos, const ForwardContext& ctx) const {
  if (features.shape() != pos.shape()) {
    throw ShapeError("encoder: features " + shape_str(features.shape()) + " vs position embedding " +
                     shape_str(pos.shape()));
  }
  Tensor x = add(features, pos);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    if (i > 0 && cfg_.pos_injection == PosInjection::kAll) x = add(x, pos);
    x = layers_[i](x, ctx);
  }
  return x;
}

}  // namespace plainpt
