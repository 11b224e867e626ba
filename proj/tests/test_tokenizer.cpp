#include "test_util.hpp"
#include "tnt/checks.hpp"
#include "tnt/ops.hpp"
#include "tnt/tokenizer.hpp"

using namespace tnt;
using tnt::testing::randn;

namespace {

TntConfig micro() { return preset("tnt-micro"); }

}  // namespace

TEST(Tokenizer, ShapesForStandardGeometry) {
  const Tensor words = split_to_words(Tensor::zeros({224, 224, 3}), 16, 4);
  EXPECT_EQ(words.shape(), (Shape{196, 16, 48}));
  EXPECT_EQ(split_to_words(Tensor::zeros({32, 32, 3}), 8, 4).shape(), (Shape{16, 4, 48}));
  EXPECT_EQ(split_to_words(Tensor::zeros({2, 32, 48, 3}), 8, 4).shape(), (Shape{2, 24, 4, 48}));
}

TEST(Tokenizer, RasterOrderOfPatchesAndWords) {
  // Encode (y, x, channel) into the pixel value and read it back.
  std::vector<double> px(16 * 16 * 3);
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      for (int c = 0; c < 3; ++c) px[(y * 16 + x) * 3 + c] = y * 1000 + x * 10 + c;
    }
  }
  const Tensor words = split_to_words(Tensor::from_data({16, 16, 3}, px), 8, 4);
  // Patch 1 is the top-right 8x8 block; word 2 is its bottom-left 4x4 block.
  // Its element (row 1, col 2, channel 1) is pixel y = 4 + 1, x = 8 + 2.
  EXPECT_EQ(words.at({1, 2, (1 * 4 + 2) * 3 + 1}), 5 * 1000 + 10 * 10 + 1);
  // Patch 2 starts the second patch row.
  EXPECT_EQ(words.at({2, 0, 0}), 8 * 1000);
}

TEST(Tokenizer, LosslessPartition) {
  Rng rng(1);
  const Tensor img = tnt::testing::random_image(32, 48, rng);
  const Tensor words = split_to_words(img, 8, 4);
  tnt::testing::expect_bit_equal(assemble_words(words, 32, 48, 8, 4), img);
  const Tensor big = tnt::testing::random_image(64, 64, rng);
  tnt::testing::expect_bit_equal(assemble_words(split_to_words(big, 16, 4), 64, 64, 16, 4), big);
}

TEST(Tokenizer, NonDivisibleSizesNameTheGeometry) {
  try {
    split_to_words(Tensor::zeros({30, 32, 3}), 8, 4);
    FAIL();
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    for (const char* part : {"30", "32", "8", "4"}) EXPECT_NE(msg.find(part), std::string::npos) << msg;
  }
  EXPECT_THROW(split_to_words(Tensor::zeros({32, 32, 3}), 8, 3), ConfigError);
}

TEST(Tokenizer, NormalizationMapsToUnitRange) {
  const Tensor n = normalize_pixels(Tensor::from_data({1, 1, 3}, {0.0, 127.5, 255.0}));
  EXPECT_DOUBLE_EQ(n.data()[0], -1.0);
  EXPECT_DOUBLE_EQ(n.data()[1], 0.0);
  EXPECT_DOUBLE_EQ(n.data()[2], 1.0);
}

TEST(Embedding, ZeroEverythingGivesZero) {
  Rng rng(2);
  TokenizerParams p = make_tokenizer(micro(), rng);
  for (auto& v : p.word_proj.weight.mutable_data()) v = 0.0;
  for (auto& v : p.e_word.mutable_data()) v = 0.0;
  const Tensor y = embed_words(split_to_words(Tensor::zeros({32, 32, 3}), 8, 4), p);
  EXPECT_EQ(y.shape(), (Shape{16, 4, 8}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(Embedding, IdenticalPatchesEmbedIdentically) {
  Rng rng(3);
  const TokenizerParams p = make_tokenizer(micro(), rng);
  Tensor img = Tensor::full({32, 32, 3}, 0.0);
  auto d = img.mutable_data();
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = rng.uniform(0, 255);
        d[(y * 32 + x) * 3 + c] = v;
        d[(y * 32 + x + 16) * 3 + c] = v;  // patch 2 copies patch 0
      }
    }
  }
  const Tensor y = embed_words(split_to_words(normalize_pixels(img), 8, 4), p);
  tnt::testing::expect_bit_equal(slice(y, 0, 0, 1), slice(y, 0, 2, 1));
}

TEST(Embedding, WordEncodingIsSharedAcrossSentences) {
  Rng rng(4);
  TokenizerParams p = make_tokenizer(micro(), rng);
  const Tensor words = split_to_words(normalize_pixels(tnt::testing::random_image(32, 32, rng)), 8, 4);
  const Tensor before = embed_words(words, p);
  p.e_word.mutable_data()[1 * 8 + 3] += 0.5;  // word 1, channel 3
  const Tensor after = embed_words(words, p);
  for (std::int64_t s = 0; s < 16; ++s) {
    for (std::int64_t w = 0; w < 4; ++w) {
      for (std::int64_t c = 0; c < 8; ++c) {
        const double delta = after.at({s, w, c}) - before.at({s, w, c});
        EXPECT_NEAR(delta, (w == 1 && c == 3) ? 0.5 : 0.0, 1e-15);
      }
    }
  }
}

TEST(Embedding, WordEncodingGradientSumsOverSentences) {
  Rng rng(5);
  TokenizerParams p = make_tokenizer(micro(), rng);
  const Tensor words = split_to_words(normalize_pixels(tnt::testing::random_image(32, 32, rng)), 8, 4);
  const Tensor w = randn({16, 4, 8}, rng);
  const auto res =
      checks::gradient_check([&] { return sum_all(mul(gelu(embed_words(words, p)), w)); },
                             {{"e_word", p.e_word}, {"word_proj.weight", p.word_proj.weight}}, {});
  for (const auto& e : res) EXPECT_TRUE(e.passed) << e.name << " " << e.rel_err;
}

TEST(Sentences, InitialLayout) {
  Rng rng(6);
  TokenizerParams p = make_tokenizer(micro(), rng);
  for (auto& v : p.z_class.mutable_data()) v = rng.normal();
  const Tensor z = init_sentences(p, 16);
  EXPECT_EQ(z.shape(), (Shape{17, 32}));
  for (std::int64_t c = 0; c < 32; ++c) {
    EXPECT_EQ(z.at({0, c}), p.z_class.data()[c] + p.e_sentence.at({0, c}));
    EXPECT_EQ(z.at({5, c}), p.e_sentence.at({5, c}));
  }
  EXPECT_EQ(init_sentences(p, 16, 3).shape(), (Shape{3, 17, 32}));
}

TEST(Sentences, ZeroEncodingsGiveZeros) {
  TntConfig cfg = micro();
  cfg.pos_enc.sentence = false;
  Rng rng(7);
  const TokenizerParams p = make_tokenizer(cfg, rng);
  EXPECT_FALSE(p.e_sentence.defined());
  const Tensor z = init_sentences(p, 16);
  for (double v : z.data()) EXPECT_EQ(v, 0.0);
}

TEST(Sentences, DisablingWordEncodingRemovesOnlyThatTerm) {
  TntConfig with = micro(), without = micro();
  without.pos_enc.word = false;
  Rng r1(8), r2(8);
  TokenizerParams a = make_tokenizer(with, r1);
  TokenizerParams b = make_tokenizer(without, r2);
  EXPECT_FALSE(b.e_word.defined());
  // Same projection weights in both, so the difference is exactly E_word.
  b.word_proj = a.word_proj;
  Rng rng(9);
  const Tensor words = split_to_words(normalize_pixels(tnt::testing::random_image(32, 32, rng)), 8, 4);
  const Tensor ya = embed_words(words, a), yb = embed_words(words, b);
  for (std::int64_t s = 0; s < 16; ++s) {
    for (std::int64_t w = 0; w < 4; ++w) {
      for (std::int64_t c = 0; c < 8; ++c) {
        EXPECT_NEAR(ya.at({s, w, c}) - yb.at({s, w, c}), a.e_word.at({w, c}), 1e-14);
      }
    }
  }
}
