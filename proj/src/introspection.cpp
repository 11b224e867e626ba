#include "tnt/introspection.hpp"

#include <fstream>

#include "tnt/io.hpp"

namespace tnt {

namespace {

constexpr std::string_view kMagic = "TNTA";
constexpr std::uint32_t kVersion = 1;

ForwardTrace run_trace(const Model& model, const Tensor& image) {
  if (image.rank() != 3) {
    throw DimensionError("introspection: expected one raw [H, W, 3] image, got " + shape_str(image.shape()));
  }
  NoGradGuard no_grad;
  ForwardTrace trace;
  forward(model, image, false, nullptr, &trace);
  return trace;
}

const LayerTrace& layer_at(const ForwardTrace& trace, const Model& model, int layer) {
  if (layer < 1 || layer > model.config.depth) {
    throw IntrospectionError("layer " + std::to_string(layer) + " out of range 1.." +
                             std::to_string(model.config.depth));
  }
  return trace.layers[static_cast<std::size_t>(layer - 1)];
}

// Selects a head (or mean / all) from `heads` consecutive size x size blocks.
Tensor pick_head(std::span<const double> blocks, std::int64_t heads, std::int64_t size, std::int64_t head) {
  const std::int64_t block = size * size;
  if (head >= 0) {
    if (head >= heads) {
      throw IntrospectionError("head " + std::to_string(head) + " out of range 0.." + std::to_string(heads - 1));
    }
    const auto first = blocks.begin() + head * block;
    return Tensor::from_data({size, size}, std::vector<double>(first, first + block));
  }
  if (head == kAllHeads) {
    return Tensor::from_data({heads, size, size},
                             std::vector<double>(blocks.begin(), blocks.begin() + heads * block));
  }
  if (head != kMeanHead) throw IntrospectionError("invalid head selector " + std::to_string(head));
  std::vector<double> mean(static_cast<std::size_t>(block), 0.0);
  for (std::int64_t h = 0; h < heads; ++h) {
    for (std::int64_t i = 0; i < block; ++i) mean[i] += blocks[h * block + i];
  }
  for (auto& v : mean) v /= static_cast<double>(heads);
  return Tensor::from_data({size, size}, std::move(mean));
}

nlohmann::json head_meta(std::int64_t head) {
  if (head == kMeanHead) return "mean";
  if (head == kAllHeads) return "all";
  return head;
}

nlohmann::json grid_meta(const TntConfig& c) { return {c.grid_height(), c.grid_width()}; }

}  // namespace

void write_export(const std::string& path, const Export& e) {
  binary::Writer w;
  w.bytes(kMagic);
  w.u32(kVersion);
  const std::string meta = e.meta.dump();
  w.u64(meta.size());
  w.bytes(meta);
  w.u32(static_cast<std::uint32_t>(e.data.rank()));
  for (auto d : e.data.shape()) w.u64(static_cast<std::uint64_t>(d));
  w.f64s(e.data.data());
  binary::write_file(path, w.buffer());
}

Export read_export(const std::string& path) {
  binary::Reader r(binary::read_file(path), path);
  if (r.bytes(4) != kMagic) r.fail("not an export file (bad magic)");
  if (const auto v = r.u32(); v != kVersion) r.fail("unsupported export version " + std::to_string(v));
  const auto len = r.u64();
  if (len > r.remaining()) r.fail("metadata longer than the file");
  Export out;
  try {
    out.meta = nlohmann::json::parse(r.bytes(len));
  } catch (const nlohmann::json::exception& ex) {
    r.fail(std::string("metadata is not valid JSON: ") + ex.what());
  }
  const auto rank = r.u32();
  if (rank > 16) r.fail("implausible rank");
  Shape shape;
  std::uint64_t count = 1;
  for (std::uint32_t i = 0; i < rank; ++i) {
    const auto d = r.u64();
    if (d == 0 || d > (std::uint64_t{1} << 40)) r.fail("invalid extent");
    shape.push_back(static_cast<std::int64_t>(d));
    count *= d;
  }
  auto data = r.f64s(count);
  if (!r.at_end()) r.fail("trailing bytes after export data");
  out.data = Tensor::from_data(std::move(shape), std::move(data));
  return out;
}

void write_export_csv(const std::string& path, const Export& e) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.precision(17);
  const auto& shape = e.data.shape();
  const std::int64_t cols = shape.empty() ? 1 : shape.back();
  const std::int64_t rows = e.data.numel() / cols;
  // Leading indices beyond the matrix axes become prefix columns.
  Shape lead = shape.size() > 2 ? Shape(shape.begin(), shape.end() - 2) : Shape{};
  const std::int64_t mat_rows = shape.size() >= 2 ? shape[shape.size() - 2] : 1;
  const auto d = e.data.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    std::int64_t block = r / mat_rows;
    std::vector<std::int64_t> idx(lead.size());
    for (std::size_t a = lead.size(); a-- > 0;) {
      idx[a] = block % lead[a];
      block /= lead[a];
    }
    for (auto i : idx) out << i << ',';
    for (std::int64_t c = 0; c < cols; ++c) out << (c ? "," : "") << d[r * cols + c];
    out << '\n';
  }
  if (!out) throw IoError("write to '" + path + "' failed");
}

Export export_inner_attention(const Model& model, const Tensor& image, int layer, std::int64_t sentence,
                              std::int64_t head) {
  const TntConfig& c = model.config;
  if (layer < 1 || layer > c.depth) {
    throw IntrospectionError("layer " + std::to_string(layer) + " out of range 1.." + std::to_string(c.depth));
  }
  if (!c.is_tnt_layer(layer)) {
    throw IntrospectionError("layer " + std::to_string(layer) +
                             " is a vanilla block in this model (TNT layers are listed in tnt_block_indices); "
                             "only TNT layers have an inner transformer to export");
  }
  const std::int64_t n = c.num_patches(), m = c.num_words(), heads = c.inner_heads;
  if (sentence < 0 || sentence >= n) {
    throw IntrospectionError("sentence " + std::to_string(sentence) + " out of range 0.." + std::to_string(n - 1));
  }
  const auto trace = run_trace(model, image);
  const auto& rec = layer_at(trace, model, layer);
  const auto blocks = rec.inner_attn.data().subspan(static_cast<std::size_t>(sentence * heads * m * m),
                                                    static_cast<std::size_t>(heads * m * m));
  Export out;
  out.data = pick_head(blocks, heads, m, head);
  nlohmann::json coords = nlohmann::json::array();
  const std::int64_t k = c.words_per_side();
  for (std::int64_t q = 0; q < m; ++q) coords.push_back({q / k, q % k});
  out.meta = {{"kind", "inner-attention"},
              {"level", "inner"},
              {"layer", layer},
              {"sentence", sentence},
              {"sentence_coord", {sentence / c.grid_width(), sentence % c.grid_width()}},
              {"head", head_meta(head)},
              {"heads", heads},
              {"word_grid", {k, k}},
              {"query_coords", coords}};
  return out;
}

Export export_outer_attention(const Model& model, const Tensor& image, int layer, std::int64_t head) {
  const auto trace = run_trace(model, image);
  const auto& rec = layer_at(trace, model, layer);
  const TntConfig& c = model.config;
  const std::int64_t t = c.num_patches() + 1;
  Export out;
  out.data = pick_head(rec.outer_attn.data(), c.outer_heads, t, head);
  out.meta = {{"kind", "outer-attention"},
              {"level", "outer"},
              {"layer", layer},
              {"head", head_meta(head)},
              {"heads", c.outer_heads},
              {"grid", grid_meta(c)},
              {"token_order", "class token first, then patches row-major"}};
  return out;
}

Export export_class_attention(const Model& model, const Tensor& image, int layer) {
  const auto trace = run_trace(model, image);
  const auto& rec = layer_at(trace, model, layer);
  const TntConfig& c = model.config;
  const std::int64_t n = c.num_patches(), t = n + 1;
  const Tensor mean = pick_head(rec.outer_attn.data(), c.outer_heads, t, kMeanHead);
  const auto row = mean.data().subspan(0, static_cast<std::size_t>(t));
  Export out;
  out.data = Tensor::from_data({n}, std::vector<double>(row.begin() + 1, row.end()));
  out.meta = {{"kind", "class-attention"},
              {"level", "outer"},
              {"layer", layer},
              {"head", "mean"},
              {"grid", grid_meta(c)},
              {"class_self_weight", row[0]}};
  return out;
}

Export export_word_feature_maps(const Model& model, const Tensor& image, int layer) {
  const TntConfig& c = model.config;
  if (layer < 0 || layer > c.depth) {
    throw IntrospectionError("layer " + std::to_string(layer) + " out of range 0.." + std::to_string(c.depth));
  }
  const auto trace = run_trace(model, image);
  const Tensor& words = layer == 0 ? trace.words0 : trace.layers[static_cast<std::size_t>(layer - 1)].words;
  const std::int64_t n = c.num_patches(), m = c.num_words(), dim = c.inner_dim, k = c.words_per_side();
  std::vector<double> maps(static_cast<std::size_t>(n * m), 0.0);
  const auto w = words.data();
  for (std::int64_t i = 0; i < n * m; ++i) {
    double s = 0.0;
    for (std::int64_t ch = 0; ch < dim; ++ch) s += w[i * dim + ch];
    maps[i] = s / static_cast<double>(dim);
  }
  Export out;
  out.data = Tensor::from_data({n, k, k}, std::move(maps));
  out.meta = {{"kind", "word-feature-maps"},
              {"layer", layer},
              {"grid", grid_meta(c)},
              {"word_grid", {k, k}},
              {"stage", layer == 0 ? "word embedding" : "layer output"}};
  return out;
}

}  // namespace tnt
