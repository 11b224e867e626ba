#include "tnt/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "tnt/ops.hpp"

namespace tnt {

void Model::visit(const ParamVisitor& fn) {
  tokenizer.visit("tokenizer", fn);
  for (auto& layer : layers) {
    const std::string prefix = "layers." + std::to_string(layer.index);
    std::visit([&](auto& b) { b.visit(prefix, fn); }, layer.block);
  }
  final_norm.visit("norm", fn);
  head.visit("head", fn);
}

std::vector<NamedParam> Model::parameters() const {
  std::vector<NamedParam> out;
  const_cast<Model*>(this)->visit(
      [&](const std::string& name, Tensor& t, ParamKind kind) { out.push_back({name, t, kind}); });
  return out;
}

std::int64_t Model::parameter_count() const {
  std::int64_t total = 0;
  for (const auto& p : parameters()) total += p.tensor.numel();
  return total;
}

Model Model::clone() const {
  Model copy = *this;
  copy.visit([](const std::string&, Tensor& t, ParamKind) { t = t.clone(); });
  return copy;
}

void Model::zero_grad() {
  visit([](const std::string&, Tensor& t, ParamKind) { t.zero_grad(); });
}

Model build(const TntConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng = Rng::stream(seed, "init");
  Model model;
  model.config = config;
  model.tokenizer = make_tokenizer(config, rng);
  TntBlockOptions opts;
  opts.inner_dim = config.inner_dim;
  opts.outer_dim = config.outer_dim;
  opts.num_words = config.num_words();
  opts.inner_heads = config.inner_heads;
  opts.outer_heads = config.outer_heads;
  opts.mlp_ratio = config.mlp_ratio;
  opts.drop_path_rate = config.drop_path_rate;
  opts.fusion_ln = config.fusion_ln;
  opts.se = config.se;
  for (int l = 1; l <= config.depth; ++l) {
    Layer layer;
    layer.index = l;
    if (config.is_tnt_layer(l)) {
      layer.block = make_tnt_block(opts, rng);
    } else {
      layer.block = make_block(config.outer_dim, config.outer_heads, config.mlp_ratio, config.drop_path_rate, rng);
    }
    model.layers.push_back(std::move(layer));
  }
  model.final_norm = make_layer_norm(config.outer_dim);
  model.head = make_linear(config.outer_dim, config.num_classes, rng);
  return model;
}

std::uint64_t parameter_checksum(const Model& model) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : model.parameters()) {
    for (double v : p.tensor.data()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

Tensor forward(const Model& model, const Tensor& images, bool training, Rng* rng, ForwardTrace* trace) {
  const TntConfig& cfg = model.config;
  if (images.rank() != 3 && images.rank() != 4) {
    throw DimensionError("forward: expected [H, W, 3] or [B, H, W, 3], got " + shape_str(images.shape()));
  }
  if (images.dim(-3) != cfg.image_height || images.dim(-2) != cfg.image_width) {
    throw ConfigError("forward: image " + std::to_string(images.dim(-3)) + "x" + std::to_string(images.dim(-2)) +
                      " does not match the model's " + std::to_string(cfg.image_height) + "x" +
                      std::to_string(cfg.image_width) + " (interpolate position encodings first)");
  }
  const bool batched = images.rank() == 4;
  const std::int64_t batch = batched ? images.dim(0) : 1;
  const std::int64_t n = cfg.num_patches();

  Tensor batch_images = batched ? images : reshape(images, {1, images.dim(0), images.dim(1), images.dim(2)});
  Tensor words = split_to_words(normalize_pixels(batch_images), cfg.patch, cfg.subpatch);
  TntState state{embed_words(words, model.tokenizer), init_sentences(model.tokenizer, n, batch)};
  if (trace) {
    trace->words0 = state.words.detach();
    trace->layers.clear();
  }

  for (const auto& layer : model.layers) {
    LayerTrace record;
    record.layer = layer.index;
    record.tnt = layer.is_tnt();
    if (const auto* tb = std::get_if<TntBlockParams>(&layer.block)) {
      TntAttention attn;
      state = tnt_forward(state, *tb, rng, training, trace ? &attn : nullptr);
      record.inner_attn = attn.inner;
      record.outer_attn = attn.outer;
    } else {
      Tensor attn;
      state = vanilla_forward(state, std::get<BlockParams>(layer.block), rng, training, trace ? &attn : nullptr);
      record.outer_attn = attn;
    }
    if (trace) {
      if (record.inner_attn.defined()) record.inner_attn = record.inner_attn.detach();
      if (record.outer_attn.defined()) record.outer_attn = record.outer_attn.detach();
      record.words = state.words.detach();
      record.sentences = state.sentences.detach();
      trace->layers.push_back(std::move(record));
    }
  }

  Tensor cls = reshape(slice(state.sentences, 1, 0, 1), {batch, cfg.outer_dim});
  Tensor logits = linear(layer_norm(cls, model.final_norm), model.head.weight, model.head.bias);
  return batched ? logits : reshape(logits, {cfg.num_classes});
}

Tensor resize_bilinear(const Tensor& field, std::int64_t out_h, std::int64_t out_w) {
  if (field.rank() != 3) throw DimensionError("resize_bilinear: expected [h, w, c], got " + shape_str(field.shape()));
  const std::int64_t in_h = field.dim(0), in_w = field.dim(1), ch = field.dim(2);
  const auto src = field.data();
  std::vector<double> out(static_cast<std::size_t>(out_h * out_w * ch));
  auto coord = [](std::int64_t dst, std::int64_t in, std::int64_t outn, std::int64_t& i0, std::int64_t& i1,
                  double& w) {
    double s = (static_cast<double>(dst) + 0.5) * static_cast<double>(in) / static_cast<double>(outn) - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    i0 = static_cast<std::int64_t>(std::floor(s));
    i1 = std::min(i0 + 1, in - 1);
    w = s - static_cast<double>(i0);
  };
  for (std::int64_t y = 0; y < out_h; ++y) {
    std::int64_t y0, y1;
    double wy;
    coord(y, in_h, out_h, y0, y1, wy);
    for (std::int64_t x = 0; x < out_w; ++x) {
      std::int64_t x0, x1;
      double wx;
      coord(x, in_w, out_w, x0, x1, wx);
      for (std::int64_t c = 0; c < ch; ++c) {
        auto at = [&](std::int64_t yy, std::int64_t xx) {
          return src[static_cast<std::size_t>((yy * in_w + xx) * ch + c)];
        };
        double v = at(y0, x0);
        // Skip zero-weight taps so an unchanged grid copies values exactly.
        if (wx != 0.0) v = v * (1.0 - wx) + at(y0, x1) * wx;
        if (wy != 0.0) {
          double lower = at(y1, x0);
          if (wx != 0.0) lower = lower * (1.0 - wx) + at(y1, x1) * wx;
          v = v * (1.0 - wy) + lower * wy;
        }
        out[static_cast<std::size_t>((y * out_w + x) * ch + c)] = v;
      }
    }
  }
  return Tensor::from_data({out_h, out_w, ch}, std::move(out));
}

Model interpolate_position_encodings(const Model& model, std::int64_t new_height, std::int64_t new_width) {
  TntConfig cfg = model.config;
  if (new_height <= 0 || new_width <= 0 || new_height % cfg.patch != 0 || new_width % cfg.patch != 0) {
    throw ConfigError("cannot interpolate to " + std::to_string(new_height) + "x" + std::to_string(new_width) +
                      ": not divisible by patch size p=" + std::to_string(cfg.patch));
  }
  const std::int64_t gh = cfg.grid_height(), gw = cfg.grid_width(), d = cfg.outer_dim;
  cfg.image_height = new_height;
  cfg.image_width = new_width;
  const std::int64_t ngh = cfg.grid_height(), ngw = cfg.grid_width();

  Model out = model.clone();
  out.config = cfg;
  auto resample_rows = [&](const Tensor& rows) {
    Tensor grid = Tensor::from_data({gh, gw, d}, std::vector<double>(rows.data().begin(), rows.data().end()));
    Tensor resized = resize_bilinear(grid, ngh, ngw);
    return Tensor::from_data({ngh * ngw, d}, std::vector<double>(resized.data().begin(), resized.data().end()));
  };
  if (out.tokenizer.e_sentence.defined()) {
    const auto src = model.tokenizer.e_sentence.data();
    Tensor body = resample_rows(
        Tensor::from_data({gh * gw, d}, std::vector<double>(src.begin() + d, src.end())));
    std::vector<double> merged(src.begin(), src.begin() + d);
    merged.insert(merged.end(), body.data().begin(), body.data().end());
    out.tokenizer.e_sentence = Tensor::from_data({ngh * ngw + 1, d}, std::move(merged));
    out.tokenizer.e_sentence.set_requires_grad(true);
  }
  if (out.tokenizer.z_init.defined()) {
    out.tokenizer.z_init = resample_rows(model.tokenizer.z_init);
    out.tokenizer.z_init.set_requires_grad(true);
  }
  return out;
}

}  // namespace tnt
