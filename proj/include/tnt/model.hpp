#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "tnt/config.hpp"
#include "tnt/nn.hpp"
#include "tnt/tnt_block.hpp"
#include "tnt/tokenizer.hpp"

namespace tnt {

struct Layer {
  int index = 0;  // 1-based
  std::variant<TntBlockParams, BlockParams> block;

  bool is_tnt() const { return std::holds_alternative<TntBlockParams>(block); }
};

struct NamedParam {
  std::string name;
  Tensor tensor;
  ParamKind kind;
};

// Tokenizer + L stacked layers + final LN + linear head on the class token.
// Parameter tensors are handles: copying a Model shares them, clone() does
// not.
class Model {
 public:
  TntConfig config;
  TokenizerParams tokenizer;
  std::vector<Layer> layers;
  LayerNormParams final_norm;
  LinearParams head;

  // Every learnable tensor, once, in a fixed registration order.
  void visit(const ParamVisitor& fn);
  std::vector<NamedParam> parameters() const;
  std::int64_t parameter_count() const;
  Model clone() const;
  void zero_grad();
};

// Deterministic build: identical (config, seed) give bit-identical models.
Model build(const TntConfig& config, std::uint64_t seed);

// FNV-1a over the raw bytes of every parameter, in registration order.
std::uint64_t parameter_checksum(const Model& model);

struct LayerTrace {
  int layer = 0;
  bool tnt = false;
  Tensor inner_attn;  // [B, n, heads, m, m]; undefined for vanilla layers
  Tensor outer_attn;  // [B, heads, n + 1, n + 1]
  Tensor words;       // [B, n, m, c] after the layer
  Tensor sentences;   // [B, n + 1, d] after the layer
};

struct ForwardTrace {
  Tensor words0;  // [B, n, m, c] word embeddings entering layer 1
  std::vector<LayerTrace> layers;
};

// images: raw [H, W, 3] or [B, H, W, 3]. Returns logits [K] or [B, K].
// `rng` is needed only when training with drop path.
Tensor forward(const Model& model, const Tensor& images, bool training = false, Rng* rng = nullptr,
               ForwardTrace* trace = nullptr);

// Resamples the sentence position encodings (rows 1..n, laid out on the
// patch grid) bilinearly to the grid of a new_height x new_width input. The
// class row and E_word are copied unchanged.
Model interpolate_position_encodings(const Model& model, std::int64_t new_height, std::int64_t new_width);

// Bilinear resize of a [h, w, channels] field with half-pixel centers.
Tensor resize_bilinear(const Tensor& field, std::int64_t out_h, std::int64_t out_w);

}  // namespace tnt
