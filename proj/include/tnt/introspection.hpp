#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "tnt/model.hpp"

namespace tnt {

class IntrospectionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Head selectors besides a plain index.
inline constexpr std::int64_t kMeanHead = -1;  // average over heads
inline constexpr std::int64_t kAllHeads = -2;  // stack every head

// One exported array plus metadata describing how to read it.
struct Export {
  nlohmann::json meta;
  Tensor data;
};

// "TNTA" | u32 version | u64 len | metadata JSON | u32 rank | u64 extents | f64 data
void write_export(const std::string& path, const Export& e);
Export read_export(const std::string& path);
// Comma-separated values: one line per row of the last axis, prefixed by the
// indices of the leading axes beyond the first two.
void write_export_csv(const std::string& path, const Export& e);

// Inner attention of one sentence at a TNT layer: [m, m] for a head or the
// mean, [heads, m, m] for kAllHeads. Row i is query word i.
Export export_inner_attention(const Model& model, const Tensor& image, int layer, std::int64_t sentence,
                              std::int64_t head = kMeanHead);

// Outer attention at any layer: [n + 1, n + 1] (or [heads, n + 1, n + 1]).
Export export_outer_attention(const Model& model, const Tensor& image, int layer, std::int64_t head = kMeanHead);

// Class-token query row of the outer attention, heads averaged, restricted
// to the n patch keys. The class token's weight on itself is reported in the
// metadata as "class_self_weight"; "grid" gives the patch layout.
Export export_class_attention(const Model& model, const Tensor& image, int layer);

// Channel-averaged word embeddings laid out on each patch's word grid:
// [n, p/s, p/s]. Layer 0 is the embedding entering the first layer; layer l
// is the output of layer l.
Export export_word_feature_maps(const Model& model, const Tensor& image, int layer);

}  // namespace tnt
