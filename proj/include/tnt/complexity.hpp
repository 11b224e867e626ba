#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "tnt/config.hpp"

// FLOPs and parameter accounting. Closed forms count multiply-accumulates
// of the weight matrices only (biases, LN, stem and head ignored); the
// exhaustive counts walk every learnable tensor and every matmul of the
// built architecture, including the class token row. All arithmetic is in
// exact integers; overflow throws std::overflow_error.
namespace tnt::complexity {

// 2nd(6d + n)
std::uint64_t flops_standard_block(std::uint64_t n, std::uint64_t d);
// 2nd(dk + dv) + n^2(dk + dv) + 2nd*d*r
std::uint64_t flops_standard_block_general(std::uint64_t n, std::uint64_t d, std::uint64_t dk, std::uint64_t dv,
                                           std::uint64_t r);
// 12dd
std::uint64_t params_standard_block(std::uint64_t d);
// 2nmc(6c + m) + nmcd + 2nd(6d + n)
std::uint64_t flops_tnt_block(std::uint64_t n, std::uint64_t m, std::uint64_t c, std::uint64_t d);
// 12cc + mcd + 12dd
std::uint64_t params_tnt_block(std::uint64_t m, std::uint64_t c, std::uint64_t d);

struct LayerComplexity {
  int layer = 0;
  bool tnt = false;
  std::uint64_t formula_flops = 0;
  std::uint64_t formula_params = 0;
  std::uint64_t exhaustive_flops = 0;
  std::uint64_t exhaustive_params = 0;
};

struct ComplexityReport {
  std::string model;
  std::int64_t image_height = 0, image_width = 0;
  std::vector<int> tnt_block_indices;
  std::vector<LayerComplexity> layers;
  std::uint64_t formula_flops = 0;
  std::uint64_t formula_params = 0;
  std::uint64_t exhaustive_flops = 0;
  std::uint64_t exhaustive_params = 0;
  // Exhaustive parts outside the stacked layers.
  std::uint64_t stem_flops = 0, stem_params = 0;
  std::uint64_t encoding_params = 0;
  std::uint64_t head_flops = 0, head_params = 0;
  // Per-block closed forms at this config's (n, m, c, d).
  double block_flops_ratio = 0.0;   // TNT block / standard block
  double block_params_ratio = 0.0;
  // Whole stack closed form vs the same depth of standard blocks.
  double model_flops_ratio = 0.0;
  double model_params_ratio = 0.0;
};

ComplexityReport model_report(const TntConfig& config);

// Shape-only exhaustive parameter count (no tensors allocated).
std::uint64_t exhaustive_parameter_count(const TntConfig& config);

// Two decimals, truncated: 1.0872 -> "1.08x", matching how the block ratios
// are usually quoted.
std::string format_ratio(double ratio);

std::string render_table(const ComplexityReport& report);
nlohmann::json report_to_json(const ComplexityReport& report);

}  // namespace tnt::complexity
