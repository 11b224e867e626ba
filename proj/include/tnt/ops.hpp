#pragma once

#include <vector>

#include "tnt/tensor.hpp"

// Differentiable tensor operations. Unless noted, operands must have
// identical shapes; mismatches raise DimensionError naming both shapes.
namespace tnt {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);

// a[..., i, k] x b[..., k, j]. Batch dims must match, or one side is rank 2
// and is broadcast over the other's batch.
Tensor matmul(const Tensor& a, const Tensor& b);

// x[..., in] W[in, out] + b[out]. `bias` may be undefined.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

Tensor softmax(const Tensor& x, std::int64_t axis = -1);
Tensor log_softmax(const Tensor& x, std::int64_t axis = -1);

// Normalizes the last axis with the population variance; eps sits inside
// the square root.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

// Exact GELU, x * Phi(x) with Phi from erf.
Tensor gelu(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// One extent may be -1 and is inferred.
Tensor reshape(const Tensor& x, Shape shape);
Tensor transpose(const Tensor& x, std::int64_t axis0, std::int64_t axis1);
Tensor permute(const Tensor& x, const std::vector<std::int64_t>& order);

Tensor concat(const std::vector<Tensor>& parts, std::int64_t axis);
std::vector<Tensor> split(const Tensor& x, std::int64_t axis, const std::vector<std::int64_t>& sizes);
Tensor slice(const Tensor& x, std::int64_t axis, std::int64_t start, std::int64_t length);

Tensor sum(const Tensor& x, std::int64_t axis);
Tensor mean(const Tensor& x, std::int64_t axis);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Inserts a new axis at `axis` repeating x `size` times; backward sums.
Tensor expand(const Tensor& x, std::int64_t axis, std::int64_t size);

// Row-major flattening of the trailing (rows, cols, channels) block.
Tensor vectorize(const Tensor& x);

}  // namespace tnt
