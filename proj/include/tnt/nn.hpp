#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "tnt/rng.hpp"
#include "tnt/tensor.hpp"

namespace tnt {

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kInitStd = 0.02;

// Role of a learnable tensor. Only kWeight tensors receive weight decay.
enum class ParamKind { kWeight, kBias, kNorm, kPositionEncoding, kToken };

using ParamVisitor = std::function<void(const std::string& name, Tensor& tensor, ParamKind kind)>;

struct LinearParams {
  Tensor weight;  // [in, out]
  Tensor bias;    // [out]

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct LayerNormParams {
  Tensor gamma;
  Tensor beta;

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Q, K, V and output projections are dim x dim with biases; every head has
// width dim / heads.
struct MsaParams {
  LinearParams q, k, v, proj;
  int heads = 1;

  std::int64_t dim() const { return q.weight.dim(0); }
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

struct MlpParams {
  LinearParams fc1;  // dim -> ratio * dim
  LinearParams fc2;  // ratio * dim -> dim

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Pre-norm residual block: x' = x + MSA(LN(x)); y = x' + MLP(LN(x')).
struct BlockParams {
  LayerNormParams ln1, ln2;
  MsaParams msa;
  MlpParams mlp;
  double drop_path_rate = 0.0;

  std::int64_t dim() const { return msa.dim(); }
  void visit(const std::string& prefix, const ParamVisitor& fn);
};

// Initializers: truncated normal (std 0.02, +-2 std) weights, zero biases,
// unit/zero LN affine. All returned tensors require grad.
Tensor make_parameter(Shape shape, Rng& rng, double std = kInitStd);
Tensor make_constant_parameter(Shape shape, double value);
LinearParams make_linear(std::int64_t in, std::int64_t out, Rng& rng);
LayerNormParams make_layer_norm(std::int64_t dim);
MsaParams make_msa(std::int64_t dim, int heads, Rng& rng);
MlpParams make_mlp(std::int64_t dim, int ratio, Rng& rng);
BlockParams make_block(std::int64_t dim, int heads, int mlp_ratio, double drop_path_rate, Rng& rng);

struct MsaResult {
  Tensor out;   // same shape as the input
  Tensor attn;  // [..., heads, n_seq, n_seq], rows sum to one
};

// x is [..., n_seq, dim]; leading axes are independent sequences.
MsaResult msa_forward(const Tensor& x, const MsaParams& p);
Tensor mlp_forward(const Tensor& x, const MlpParams& p);
Tensor layer_norm(const Tensor& x, const LayerNormParams& p);

// Stochastic depth on a residual branch. Each index of the leading axis is
// one sample (a rank-2 input is a single sample); dropped samples become
// zero and survivors are scaled by 1 / (1 - rate). Identity when not
// training or rate == 0.
Tensor drop_path(const Tensor& branch, double rate, Rng* rng, bool training);

// `attn`, when non-null, receives the block's attention maps.
Tensor block_forward(const Tensor& x, const BlockParams& p, Rng* rng, bool training,
                     Tensor* attn = nullptr);

}  // namespace tnt
