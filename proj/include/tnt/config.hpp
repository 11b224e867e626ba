#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace tnt {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct PositionEncodingFlags {
  bool sentence = true;
  bool word = true;
};

// Full architecture description. Layer indices are 1-based; layers outside
// `tnt_block_indices` are plain transformer blocks over the sentences.
struct TntConfig {
  std::string name = "custom";
  std::int64_t image_height = 224;
  std::int64_t image_width = 224;
  std::int64_t patch = 16;     // p
  std::int64_t subpatch = 4;   // s
  int depth = 12;              // L
  std::int64_t inner_dim = 24; // c
  int inner_heads = 4;
  std::int64_t outer_dim = 384;  // d
  int outer_heads = 6;
  int mlp_ratio = 4;  // r, both levels
  std::int64_t num_classes = 1000;
  std::vector<int> tnt_block_indices;
  double drop_path_rate = 0.1;
  bool se = false;
  PositionEncodingFlags pos_enc;
  bool fusion_ln = true;
  // Z_class is a learnable parameter; the n sentence slots start as
  // constant zeros unless sentence_init_learnable is set.
  bool class_token_learnable = true;
  bool sentence_init_learnable = false;

  std::int64_t grid_height() const { return image_height / patch; }
  std::int64_t grid_width() const { return image_width / patch; }
  std::int64_t num_patches() const { return grid_height() * grid_width(); }  // n
  std::int64_t words_per_side() const { return patch / subpatch; }
  std::int64_t num_words() const { return words_per_side() * words_per_side(); }  // m
  std::int64_t word_pixels() const { return subpatch * subpatch * 3; }
  bool is_tnt_layer(int layer) const;

  // Throws ConfigError describing the first violated invariant.
  void validate() const;
};

std::vector<int> all_layers(int depth);

// "tnt-ti", "tnt-s", "tnt-b" (224x224, 1000 classes) and the desk-scale
// "tnt-micro" (32x32, p=8, s=4, L=4, c=8/2 heads, d=32/4 heads, 10 classes).
TntConfig preset(std::string_view name);
std::vector<std::string> preset_names();

nlohmann::json config_to_json(const TntConfig& config);
// Missing keys keep the values already in `base`.
TntConfig config_from_json(const nlohmann::json& doc, TntConfig base = TntConfig{});

// Flat key=value override, e.g. "depth=6", "tnt_block_indices=1,6",
// "pos_enc.word=false".
void apply_override(TntConfig& config, std::string_view assignment);

// Parses "1,4,8,12" (empty string yields an empty set).
std::vector<int> parse_indices(std::string_view text);

}  // namespace tnt
