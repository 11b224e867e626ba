#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "tnt/config.hpp"
#include "tnt/nn.hpp"

namespace tnt::checks {

struct GradCheckOptions {
  double step = 1e-5;       // central-difference step
  double tolerance = 1e-4;  // on the relative error below
  // Entries compared per tensor; 0 compares all of them. Larger tensors are
  // sampled with a seeded, fixed choice of indices.
  std::int64_t max_entries = 0;
  std::uint64_t seed = 0;
  // Gradients whose norm is below this are compared absolutely: central
  // differences carry ~1e-10 of round-off, so a relative error on an exactly
  // zero gradient (e.g. attention key biases) is meaningless.
  double norm_floor = 1e-5;
};

// rel_err = |analytic - numeric|_2 / max(|analytic|_2, |numeric|_2, norm_floor)
// over the checked entries of one tensor.
struct GradCheckEntry {
  std::string name;
  std::int64_t checked = 0;
  double rel_err = 0.0;
  double max_abs_err = 0.0;
  bool passed = false;
};

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

// Compares backward() of loss() against central differences for every input.
// Inputs must be leaf tensors requiring grad; loss() must rebuild the graph
// from them on each call and be deterministic.
std::vector<GradCheckEntry> gradient_check(const std::function<Tensor()>& loss, const NamedTensors& inputs,
                                           const GradCheckOptions& options);

// One entry per (op, input), named "<op>:<input>".
std::vector<GradCheckEntry> op_gradient_suite(const GradCheckOptions& options);

// One entry per parameter tensor of a freshly built model, on a
// label-smoothed cross-entropy loss over a small random batch (eval mode).
std::vector<GradCheckEntry> model_gradient_suite(const TntConfig& config, const GradCheckOptions& options);

// Straightforward loop implementation of multi-head self-attention on a
// single sequence x[T, D]. Returns {out[T, D], attn[h, T, T]}.
std::pair<std::vector<double>, std::vector<double>> naive_msa(const std::vector<double>& x, std::int64_t seq,
                                                              const MsaParams& p);

struct OracleEntry {
  std::string name;
  double max_abs_diff = 0.0;
  bool passed = false;
};

// msa_forward against naive_msa for seq 1..6, dim 1..8, heads in {1, 2}.
std::vector<OracleEntry> attention_oracle_suite(std::uint64_t seed = 0, double tolerance = 1e-10);

}  // namespace tnt::checks
