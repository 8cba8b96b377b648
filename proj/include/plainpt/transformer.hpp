#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "plainpt/nn.hpp"
#include "plainpt/params.hpp"
#include "plainpt/tensor.hpp"

namespace plainpt {

enum class PosInjection { kFirst, kAll };
enum class NormPlacement { kPre, kPost };

std::string_view to_string(PosInjection p);
PosInjection parse_pos_injection(std::string_view name);
std::string_view to_string(NormPlacement p);
NormPlacement parse_norm_placement(std::string_view name);

struct EncoderConfig {
  std::size_t layers = 3;
  std::size_t channels = 256;
  std::size_t heads = 4;
  std::size_t ffn_channels = 512;
  double dropout = 0.1;
  PosInjection pos_injection = PosInjection::kFirst;
  NormPlacement norm = NormPlacement::kPre;

  void validate() const;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParameterStore& store, const std::string& prefix, std::size_t channels, std::size_t heads,
                     double dropout);

  // x: [L, C] -> [L, C]. When `weights` is given it receives one [L, L]
  // attention matrix per head (post-softmax, pre-dropout).
  Tensor operator()(const Tensor& x, const ForwardContext& ctx, std::vector<Tensor>* weights = nullptr) const;

  const Linear& output() const { return out_; }
  const Linear& value() const { return v_; }

 private:
  std::size_t heads_ = 1;
  double dropout_ = 0.0;
  Linear q_, k_, v_, out_;
};

class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(ParameterStore& store, const std::string& prefix, const EncoderConfig& cfg);

  Tensor operator()(const Tensor& x, const ForwardContext& ctx) const;

  const MultiHeadAttention& attention() const { return attn_; }
  const Linear& ffn_output() const { return ffn2_; }

 private:
  NormPlacement norm_ = NormPlacement::kPre;
  double dropout_ = 0.0;
  LayerNorm norm1_, norm2_;
  MultiHeadAttention attn_;
  Linear ffn1_, ffn2_;
};

// Stack of plain transformer layers with no class token.
class TransformerEncoder {
 public:
  TransformerEncoder() = default;
  TransformerEncoder(ParameterStore& store, const std::string& prefix, const EncoderConfig& cfg);

  // features, pos: [M, C]. Position embeddings are added before the first
  // layer only, or before every layer, per cfg.pos_injection.
  Tensor operator()(const Tensor& features, const Tensor& pos, const ForwardContext& ctx) const;

  const std::vector<TransformerLayer>& layers() const { return layers_; }
  const EncoderConfig& config() const { return cfg_; }

 private:
  EncoderConfig cfg_;
  std::vector<TransformerLayer> layers_;
};

}  // namespace plainpt
