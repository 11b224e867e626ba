#pragma once

#include <optional>

#include "tnt/nn.hpp"

namespace tnt {

// Channel gate: mean over tokens -> dim/4 -> GELU -> dim -> sigmoid, then
// multiplied into every token.
struct SeParams {
  LinearParams reduce;
  LinearParams restore;

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

SeParams make_se(std::int64_t dim, Rng& rng);

// x: [..., tokens, dim]. Returns x scaled per (sequence, channel) by a gate
// in (0, 1). `gate_out` receives the gate, shape [..., dim].
Tensor se_forward(const Tensor& x, const SeParams& p, Tensor* gate_out = nullptr);

struct TntBlockParams {
  BlockParams inner;  // dim c, one instance applied to every sentence
  std::optional<LayerNormParams> fusion_ln;  // over m*c
  LinearParams fusion;                       // m*c -> d
  BlockParams outer;                         // dim d
  std::optional<SeParams> se_word;
  std::optional<SeParams> se_sentence;

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct TntBlockOptions {
  std::int64_t inner_dim = 0, outer_dim = 0, num_words = 0;
  int inner_heads = 1, outer_heads = 1, mlp_ratio = 4;
  double drop_path_rate = 0.0;
  bool fusion_ln = true;
  bool se = false;
};

TntBlockParams make_tnt_block(const TntBlockOptions& options, Rng& rng);

struct TntState {
  Tensor words;      // Y: [n, m, c] or [B, n, m, c]
  Tensor sentences;  // Z: [n + 1, d] or [B, n + 1, d]; row 0 is the class token
};

// Attention maps captured during a forward pass, for introspection.
struct TntAttention {
  Tensor inner;  // [..., n, inner_heads, m, m]
  Tensor outer;  // [..., outer_heads, n + 1, n + 1]
};

// One TNT layer: inner block on every sentence's words, fusion of Vec(Y_l^i)
// into sentence i (class row untouched), then the outer block over all n + 1
// sentence rows. SE gates, when present, follow the inner and outer blocks.
TntState tnt_forward(const TntState& state, const TntBlockParams& p, Rng* rng, bool training,
                     TntAttention* attn = nullptr);

// Plain transformer layer over the sentences; words pass through untouched.
TntState vanilla_forward(const TntState& state, const BlockParams& p, Rng* rng, bool training,
                         Tensor* attn = nullptr);

}  // namespace tnt
