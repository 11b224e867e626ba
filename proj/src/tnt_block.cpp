#include "tnt/tnt_block.hpp"

#include <algorithm>

#include "tnt/ops.hpp"

namespace tnt {

void SeParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  reduce.visit(prefix + ".reduce", fn);
  restore.visit(prefix + ".restore", fn);
}

SeParams make_se(std::int64_t dim, Rng& rng) {
  const std::int64_t hidden = std::max<std::int64_t>(1, dim / 4);
  return {make_linear(dim, hidden, rng), make_linear(hidden, dim, rng)};
}

Tensor se_forward(const Tensor& x, const SeParams& p, Tensor* gate_out) {
  const std::int64_t tokens = x.dim(-2);
  Tensor pooled = mean(x, -2);
  Tensor hidden = gelu(linear(pooled, p.reduce.weight, p.reduce.bias));
  Tensor gate = sigmoid(linear(hidden, p.restore.weight, p.restore.bias));
  if (gate_out) *gate_out = gate;
  return mul(x, expand(gate, gate.rank() - 1, tokens));
}

void TntBlockParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  inner.visit(prefix + ".inner", fn);
  if (se_word) se_word->visit(prefix + ".se_word", fn);
  if (fusion_ln) fusion_ln->visit(prefix + ".fusion_ln", fn);
  fusion.visit(prefix + ".fusion", fn);
  outer.visit(prefix + ".outer", fn);
  if (se_sentence) se_sentence->visit(prefix + ".se_sentence", fn);
}

TntBlockParams make_tnt_block(const TntBlockOptions& o, Rng& rng) {
  TntBlockParams p;
  p.inner = make_block(o.inner_dim, o.inner_heads, o.mlp_ratio, o.drop_path_rate, rng);
  if (o.se) p.se_word = make_se(o.inner_dim, rng);
  if (o.fusion_ln) p.fusion_ln = make_layer_norm(o.num_words * o.inner_dim);
  p.fusion = make_linear(o.num_words * o.inner_dim, o.outer_dim, rng);
  p.outer = make_block(o.outer_dim, o.outer_heads, o.mlp_ratio, o.drop_path_rate, rng);
  if (o.se) p.se_sentence = make_se(o.outer_dim, rng);
  return p;
}

TntState tnt_forward(const TntState& state, const TntBlockParams& p, Rng* rng, bool training,
                     TntAttention* attn) {
  const Tensor& y = state.words;
  const Tensor& z = state.sentences;
  if (y.rank() < 3 || z.rank() != y.rank() - 1) {
    throw DimensionError("tnt_forward: words " + shape_str(y.shape()) + " and sentences " +
                         shape_str(z.shape()) + " have inconsistent ranks");
  }
  const std::int64_t n = y.dim(-3), m = y.dim(-2), c = y.dim(-1), d = z.dim(-1);
  const Shape lead(y.shape().begin(), y.shape().end() - 3);
  const Shape z_lead(z.shape().begin(), z.shape().end() - 2);
  const std::int64_t batch = shape_numel(lead);
  if (lead != z_lead || z.dim(-2) != n + 1 || c != p.inner.dim() || d != p.outer.dim() ||
      p.fusion.weight.dim(0) != m * c) {
    throw DimensionError("tnt_forward: words " + shape_str(y.shape()) + " and sentences " +
                         shape_str(z.shape()) + " do not match the block parameters");
  }

  // Inner transformer: every sentence is an independent sequence of m words.
  Tensor inner_attn;
  Tensor words = block_forward(reshape(y, {batch * n, m, c}), p.inner, rng, training, &inner_attn);
  if (p.se_word) words = se_forward(words, *p.se_word);

  // Fusion: Z_{l-1}^i += FC(Vec(Y_l^i)) for i = 1..n.
  Tensor flat = reshape(words, {batch, n, m * c});
  if (p.fusion_ln) flat = layer_norm(flat, *p.fusion_ln);
  Tensor fused = linear(flat, p.fusion.weight, p.fusion.bias);
  Tensor sentences = add(reshape(z, {batch, n + 1, d}), concat({Tensor::zeros({batch, 1, d}), fused}, 1));

  // Outer transformer over the class token and all sentences.
  Tensor outer_attn;
  sentences = block_forward(sentences, p.outer, rng, training, &outer_attn);
  if (p.se_sentence) sentences = se_forward(sentences, *p.se_sentence);

  if (attn) {
    Shape inner_shape = lead;
    inner_shape.insert(inner_shape.end(), {n, inner_attn.dim(1), m, m});
    Shape outer_shape = lead;
    outer_shape.insert(outer_shape.end(), {outer_attn.dim(1), n + 1, n + 1});
    attn->inner = reshape(inner_attn, inner_shape);
    attn->outer = reshape(outer_attn, outer_shape);
  }
  return {reshape(words, y.shape()), reshape(sentences, z.shape())};
}

TntState vanilla_forward(const TntState& state, const BlockParams& p, Rng* rng, bool training, Tensor* attn) {
  return {state.words, block_forward(state.sentences, p, rng, training, attn)};
}

}  // namespace tnt
