#pragma once

#include <cstdint>

#include "tnt/config.hpp"
#include "tnt/nn.hpp"
#include "tnt/tensor.hpp"

namespace tnt {

// Images are [H, W, 3] (or batched [B, H, W, 3]) tensors of raw intensities
// on the 0..255 scale.

// (x / 255 - 0.5) / 0.5 on every channel.
Tensor normalize_pixels(const Tensor& raw);

// Visual sentences and words: patches enumerate the p x p grid in raster
// order, words the (p/s) x (p/s) grid inside each patch in raster order, and
// each s x s x 3 word is flattened row-major over (row, col, channel).
// Result: [n, m, s*s*3] (leading batch axis preserved).
Tensor split_to_words(const Tensor& image, std::int64_t patch, std::int64_t subpatch);

// Exact inverse of split_to_words.
Tensor assemble_words(const Tensor& words, std::int64_t height, std::int64_t width, std::int64_t patch,
                      std::int64_t subpatch);

struct TokenizerParams {
  std::int64_t patch = 16;
  std::int64_t subpatch = 4;
  LinearParams word_proj;  // s*s*3 -> c
  Tensor e_word;           // [m, c], one copy shared by every sentence; undefined when disabled
  Tensor e_sentence;       // [n + 1, d]; undefined when disabled
  Tensor z_class;          // [d]; undefined when the class token is a constant zero
  Tensor z_init;           // [n, d]; defined only when sentence slots are learnable
  std::int64_t outer_dim = 0;

  void visit(const std::string& prefix, const ParamVisitor& fn);
};

TokenizerParams make_tokenizer(const TntConfig& config, Rng& rng);

// words: [..., n, m, s*s*3] -> word embeddings Y0 = FC(Vec(x)) + E_word.
Tensor embed_words(const Tensor& words, const TokenizerParams& params);

// Z0 = concat(Z_class, zeros(n, d)) + E_sentence, shape [n + 1, d], or
// [batch, n + 1, d] when batch > 0.
Tensor init_sentences(const TokenizerParams& params, std::int64_t n, std::int64_t batch = 0);

// Repeats `t` over new leading axes `lead`.
Tensor broadcast_leading(const Tensor& t, const Shape& lead);

}  // namespace tnt
