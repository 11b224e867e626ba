#include "tnt/nn.hpp"

#include <cmath>

#include "tnt/ops.hpp"

namespace tnt {

void LinearParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".weight", weight, ParamKind::kWeight);
  fn(prefix + ".bias", bias, ParamKind::kBias);
}

void LayerNormParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fn(prefix + ".gamma", gamma, ParamKind::kNorm);
  fn(prefix + ".beta", beta, ParamKind::kNorm);
}

void MsaParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  q.visit(prefix + ".q", fn);
  k.visit(prefix + ".k", fn);
  v.visit(prefix + ".v", fn);
  proj.visit(prefix + ".proj", fn);
}

void MlpParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  fc1.visit(prefix + ".fc1", fn);
  fc2.visit(prefix + ".fc2", fn);
}

void BlockParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  ln1.visit(prefix + ".ln1", fn);
  msa.visit(prefix + ".msa", fn);
  ln2.visit(prefix + ".ln2", fn);
  mlp.visit(prefix + ".mlp", fn);
}

Tensor make_parameter(Shape shape, Rng& rng, double std) {
  Tensor t = Tensor::zeros(std::move(shape));
  for (auto& v : t.mutable_data()) v = rng.truncated_normal(std);
  t.set_requires_grad(true);
  return t;
}

Tensor make_constant_parameter(Shape shape, double value) {
  Tensor t = Tensor::full(std::move(shape), value);
  t.set_requires_grad(true);
  return t;
}

LinearParams make_linear(std::int64_t in, std::int64_t out, Rng& rng) {
  return {make_parameter({in, out}, rng), make_constant_parameter({out}, 0.0)};
}

LayerNormParams make_layer_norm(std::int64_t dim) {
  return {make_constant_parameter({dim}, 1.0), make_constant_parameter({dim}, 0.0)};
}

MsaParams make_msa(std::int64_t dim, int heads, Rng& rng) {
  if (heads <= 0 || dim % heads != 0) {
    throw std::invalid_argument("attention dim " + std::to_string(dim) + " is not divisible by " +
                                std::to_string(heads) + " heads");
  }
  MsaParams p;
  p.q = make_linear(dim, dim, rng);
  p.k = make_linear(dim, dim, rng);
  p.v = make_linear(dim, dim, rng);
  p.proj = make_linear(dim, dim, rng);
  p.heads = heads;
  return p;
}

MlpParams make_mlp(std::int64_t dim, int ratio, Rng& rng) {
  MlpParams p;
  p.fc1 = make_linear(dim, ratio * dim, rng);
  p.fc2 = make_linear(ratio * dim, dim, rng);
  return p;
}

BlockParams make_block(std::int64_t dim, int heads, int mlp_ratio, double drop_path_rate, Rng& rng) {
  if (drop_path_rate < 0.0 || drop_path_rate >= 1.0) {
    throw std::invalid_argument("drop_path_rate must lie in [0, 1)");
  }
  BlockParams p;
  p.ln1 = make_layer_norm(dim);
  p.msa = make_msa(dim, heads, rng);
  p.ln2 = make_layer_norm(dim);
  p.mlp = make_mlp(dim, mlp_ratio, rng);
  p.drop_path_rate = drop_path_rate;
  return p;
}

Tensor layer_norm(const Tensor& x, const LayerNormParams& p) {
  return layer_norm(x, p.gamma, p.beta, kLayerNormEps);
}

MsaResult msa_forward(const Tensor& x, const MsaParams& p) {
  if (x.rank() < 2 || x.dim(-1) != p.dim()) {
    throw DimensionError("msa_forward: input " + shape_str(x.shape()) + " does not match attention dim " +
                         std::to_string(p.dim()));
  }
  const std::int64_t seq = x.dim(-2), dim = x.dim(-1);
  const std::int64_t heads = p.heads, head_dim = dim / heads;
  const Shape lead(x.shape().begin(), x.shape().end() - 2);
  const std::int64_t batch = shape_numel(lead);

  Tensor x3 = reshape(x, {batch, seq, dim});
  auto split_heads = [&](const LinearParams& lp, std::vector<std::int64_t> order) {
    return permute(reshape(linear(x3, lp.weight, lp.bias), {batch, seq, heads, head_dim}), order);
  };
  Tensor q = split_heads(p.q, {0, 2, 1, 3});      // [B, h, T, dk]
  Tensor k_t = split_heads(p.k, {0, 2, 3, 1});    // [B, h, dk, T]
  Tensor v = split_heads(p.v, {0, 2, 1, 3});      // [B, h, T, dk]
  Tensor scores = scale(matmul(q, k_t), 1.0 / std::sqrt(static_cast<double>(head_dim)));
  Tensor attn = softmax(scores, -1);
  Tensor ctx = reshape(permute(matmul(attn, v), {0, 2, 1, 3}), {batch, seq, dim});
  Tensor out = linear(ctx, p.proj.weight, p.proj.bias);

  Shape out_shape = lead;
  out_shape.push_back(seq);
  out_shape.push_back(dim);
  Shape attn_shape = lead;
  attn_shape.insert(attn_shape.end(), {heads, seq, seq});
  return {reshape(out, out_shape), reshape(attn, attn_shape)};
}

Tensor mlp_forward(const Tensor& x, const MlpParams& p) {
  return linear(gelu(linear(x, p.fc1.weight, p.fc1.bias)), p.fc2.weight, p.fc2.bias);
}

Tensor drop_path(const Tensor& branch, double rate, Rng* rng, bool training) {
  if (!training || rate <= 0.0) return branch;
  if (rng == nullptr) throw std::invalid_argument("drop_path: training with rate > 0 needs an rng");
  const std::int64_t samples = branch.rank() <= 2 ? 1 : branch.dim(0);
  const std::int64_t per_sample = branch.numel() / samples;
  const double keep_scale = 1.0 / (1.0 - rate);
  std::vector<double> mask(static_cast<std::size_t>(branch.numel()));
  for (std::int64_t s = 0; s < samples; ++s) {
    const double m = rng->uniform() < rate ? 0.0 : keep_scale;
    std::fill(mask.begin() + s * per_sample, mask.begin() + (s + 1) * per_sample, m);
  }
  return mul(branch, Tensor::from_data(branch.shape(), std::move(mask)));
}

Tensor block_forward(const Tensor& x, const BlockParams& p, Rng* rng, bool training, Tensor* attn) {
  MsaResult a = msa_forward(layer_norm(x, p.ln1), p.msa);
  if (attn) *attn = a.attn;
  Tensor mid = add(x, drop_path(a.out, p.drop_path_rate, rng, training));
  Tensor m = mlp_forward(layer_norm(mid, p.ln2), p.mlp);
  return add(mid, drop_path(m, p.drop_path_rate, rng, training));
}

}  // namespace tnt
