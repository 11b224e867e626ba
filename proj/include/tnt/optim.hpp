#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tnt/model.hpp"

namespace tnt {

// Defaults are the ImageNet recipe's lr / weight decay with the usual
// AdamW betas and eps.
struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

struct ParamMoments {
  std::string name;
  std::vector<double> m;
  std::vector<double> v;
};

struct OptimState {
  AdamWConfig hyper;
  std::int64_t step = 0;
  std::vector<ParamMoments> moments;  // parallel to the parameter list
};

// True for tensors that receive decoupled weight decay (weight matrices);
// LN affines, biases, position encodings and tokens are excluded.
bool decays(ParamKind kind);

// One decoupled AdamW update at learning rate `lr`:
//   m <- b1 m + (1 - b1) g;  v <- b2 v + (1 - b2) g^2
//   theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + wd * theta)
// A parameter without a gradient is treated as having a zero gradient. Any
// non-finite gradient aborts the step before anything is modified.
void adamw_step(const std::vector<NamedParam>& params, OptimState& state, double lr);

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
double clip_grad_norm(const std::vector<NamedParam>& params, double max_norm);
double grad_norm(const std::vector<NamedParam>& params);

// Linear warmup 0 -> lr_max over warmup_steps, then half-cosine to 0 at
// total_steps.
double lr_at(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double lr_max);

}  // namespace tnt
