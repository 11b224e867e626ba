#include "tnt/tokenizer.hpp"

#include "tnt/ops.hpp"

namespace tnt {

namespace {

void check_geometry(std::int64_t height, std::int64_t width, std::int64_t patch, std::int64_t subpatch) {
  if (patch <= 0 || subpatch <= 0 || height % patch != 0 || width % patch != 0 || patch % subpatch != 0) {
    throw ConfigError("cannot split image: H=" + std::to_string(height) + ", W=" + std::to_string(width) +
                      ", p=" + std::to_string(patch) + ", s=" + std::to_string(subpatch) +
                      " (need H, W divisible by p and p divisible by s)");
  }
}

}  // namespace

Tensor normalize_pixels(const Tensor& raw) {
  std::vector<double> out(raw.data().begin(), raw.data().end());
  for (auto& v : out) v = (v / 255.0 - 0.5) / 0.5;
  return Tensor::from_data(raw.shape(), std::move(out));
}

Tensor broadcast_leading(const Tensor& t, const Shape& lead) {
  Tensor out = t;
  for (auto it = lead.rbegin(); it != lead.rend(); ++it) out = expand(out, 0, *it);
  return out;
}

Tensor split_to_words(const Tensor& image, std::int64_t patch, std::int64_t subpatch) {
  if ((image.rank() != 3 && image.rank() != 4) || image.dim(-1) != 3) {
    throw DimensionError("split_to_words: expected [H, W, 3] or [B, H, W, 3], got " + shape_str(image.shape()));
  }
  const std::int64_t height = image.dim(-3), width = image.dim(-2);
  check_geometry(height, width, patch, subpatch);
  const bool batched = image.rank() == 4;
  const std::int64_t batch = batched ? image.dim(0) : 1;
  const std::int64_t k = patch / subpatch;
  const std::int64_t gh = height / patch, gw = width / patch;
  // [B, gh, k, s, gw, k, s, 3] -> [B, gh, gw, k, k, s, s, 3]
  Tensor t = reshape(image, {batch, gh, k, subpatch, gw, k, subpatch, 3});
  t = permute(t, {0, 1, 4, 2, 5, 3, 6, 7});
  Shape out{gh * gw, k * k, subpatch * subpatch * 3};
  if (batched) out.insert(out.begin(), batch);
  return reshape(t, out);
}

Tensor assemble_words(const Tensor& words, std::int64_t height, std::int64_t width, std::int64_t patch,
                      std::int64_t subpatch) {
  check_geometry(height, width, patch, subpatch);
  const std::int64_t k = patch / subpatch;
  const std::int64_t gh = height / patch, gw = width / patch;
  const bool batched = words.rank() == 4;
  if ((words.rank() != 3 && !batched) || words.dim(-3) != gh * gw || words.dim(-2) != k * k ||
      words.dim(-1) != subpatch * subpatch * 3) {
    throw DimensionError("assemble_words: words " + shape_str(words.shape()) + " do not tile a " +
                         std::to_string(height) + "x" + std::to_string(width) + " image");
  }
  const std::int64_t batch = batched ? words.dim(0) : 1;
  Tensor t = reshape(words, {batch, gh, gw, k, k, subpatch, subpatch, 3});
  t = permute(t, {0, 1, 3, 5, 2, 4, 6, 7});
  Shape out{height, width, 3};
  if (batched) out.insert(out.begin(), batch);
  return reshape(t, out);
}

void TokenizerParams::visit(const std::string& prefix, const ParamVisitor& fn) {
  word_proj.visit(prefix + ".word_proj", fn);
  if (e_word.defined()) fn(prefix + ".e_word", e_word, ParamKind::kPositionEncoding);
  if (e_sentence.defined()) fn(prefix + ".e_sentence", e_sentence, ParamKind::kPositionEncoding);
  if (z_class.defined()) fn(prefix + ".z_class", z_class, ParamKind::kToken);
  if (z_init.defined()) fn(prefix + ".z_init", z_init, ParamKind::kToken);
}

TokenizerParams make_tokenizer(const TntConfig& config, Rng& rng) {
  TokenizerParams p;
  p.patch = config.patch;
  p.subpatch = config.subpatch;
  p.outer_dim = config.outer_dim;
  const std::int64_t n = config.num_patches(), m = config.num_words();
  p.word_proj = make_linear(config.word_pixels(), config.inner_dim, rng);
  if (config.pos_enc.word) p.e_word = make_parameter({m, config.inner_dim}, rng);
  if (config.pos_enc.sentence) p.e_sentence = make_parameter({n + 1, config.outer_dim}, rng);
  if (config.class_token_learnable) p.z_class = make_constant_parameter({config.outer_dim}, 0.0);
  if (config.sentence_init_learnable) p.z_init = make_constant_parameter({n, config.outer_dim}, 0.0);
  return p;
}

Tensor embed_words(const Tensor& words, const TokenizerParams& params) {
  if (words.rank() < 3 || words.dim(-1) != params.word_proj.weight.dim(0)) {
    throw DimensionError("embed_words: words " + shape_str(words.shape()) + " vs projection " +
                         shape_str(params.word_proj.weight.shape()));
  }
  Tensor y = linear(words, params.word_proj.weight, params.word_proj.bias);
  if (!params.e_word.defined()) return y;
  if (params.e_word.dim(0) != words.dim(-2)) {
    throw DimensionError("embed_words: " + std::to_string(words.dim(-2)) + " words per sentence vs E_word " +
                         shape_str(params.e_word.shape()));
  }
  const Shape lead(words.shape().begin(), words.shape().end() - 2);
  return add(y, broadcast_leading(params.e_word, lead));
}

Tensor init_sentences(const TokenizerParams& params, std::int64_t n, std::int64_t batch) {
  const std::int64_t d = params.outer_dim;
  Tensor cls = params.z_class.defined() ? reshape(params.z_class, {1, d}) : Tensor::zeros({1, d});
  Tensor rows = params.z_init.defined() ? params.z_init : Tensor::zeros({n, d});
  if (rows.dim(0) != n) {
    throw DimensionError("init_sentences: " + std::to_string(n) + " sentences vs learnable slots " +
                         shape_str(rows.shape()));
  }
  Tensor z = concat({cls, rows}, 0);
  if (params.e_sentence.defined()) {
    if (params.e_sentence.dim(0) != n + 1) {
      throw DimensionError("init_sentences: " + std::to_string(n) + " sentences vs E_sentence " +
                           shape_str(params.e_sentence.shape()));
    }
    z = add(z, params.e_sentence);
  }
  return batch > 0 ? expand(z, 0, batch) : z;
}

}  // namespace tnt
