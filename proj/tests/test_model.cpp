#include <cmath>
#include <set>

#include "test_util.hpp"
#include "tnt/checks.hpp"
#include "tnt/complexity.hpp"
#include "tnt/model.hpp"
#include "tnt/ops.hpp"

using namespace tnt;
using tnt::testing::random_image;

namespace {

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace

TEST(Build, LogitsShapeForMicro) {
  const Model m = build(preset("tnt-micro"), 1);
  Rng rng(1);
  EXPECT_EQ(forward(m, random_image(32, 32, rng)).shape(), (Shape{10}));
  const Tensor batch = reshape(concat({random_image(32, 32, rng), random_image(32, 32, rng)}, 0), {2, 32, 32, 3});
  EXPECT_EQ(forward(m, batch).shape(), (Shape{2, 10}));
}

TEST(Build, SameSeedSameChecksum) {
  const TntConfig cfg = preset("tnt-micro");
  EXPECT_EQ(parameter_checksum(build(cfg, 42)), parameter_checksum(build(cfg, 42)));
  EXPECT_NE(parameter_checksum(build(cfg, 42)), parameter_checksum(build(cfg, 43)));
}

TEST(Build, InvalidConfigIsDescriptive) {
  TntConfig cfg = preset("tnt-micro");
  cfg.outer_heads = 3;
  EXPECT_THROW(build(cfg, 0), ConfigError);
  cfg = preset("tnt-micro");
  cfg.tnt_block_indices = {1, 9};
  try {
    build(cfg, 0);
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("9"), std::string::npos) << e.what();
  }
}

TEST(Build, PresetParameterCountsMatchTable) {
  const std::pair<const char*, double> expected[] = {{"tnt-ti", 6.1e6}, {"tnt-s", 23.8e6}, {"tnt-b", 65.6e6}};
  for (const auto& [name, target] : expected) {
    const Model m = build(preset(name), 0);
    const auto count = static_cast<double>(m.parameter_count());
    EXPECT_NEAR(count / target, 1.0, 0.02) << name << " " << count;
    EXPECT_EQ(static_cast<std::uint64_t>(m.parameter_count()), complexity::exhaustive_parameter_count(preset(name)));
  }
}

TEST(Build, ParameterNamesAreUnique) {
  const Model m = build(preset("tnt-micro"), 0);
  std::set<std::string> names;
  std::int64_t total = 0;
  for (const auto& p : m.parameters()) {
    EXPECT_TRUE(names.insert(p.name).second) << p.name;
    total += p.tensor.numel();
  }
  EXPECT_EQ(total, m.parameter_count());
}

TEST(Forward, Deterministic) {
  const Model m = build(preset("tnt-micro"), 3);
  Rng rng(3);
  const Tensor img = random_image(32, 32, rng);
  tnt::testing::expect_bit_equal(forward(m, img), forward(m, img));
}

TEST(Forward, SensitiveToOnePatch) {
  const Model m = build(preset("tnt-micro"), 4);
  Rng rng(4);
  const Tensor a = random_image(32, 32, rng);
  Tensor b = a.clone();
  auto d = b.mutable_data();
  for (int y = 8; y < 16; ++y) {
    for (int x = 16; x < 24; ++x) d[(y * 32 + x) * 3] = 255.0 - d[(y * 32 + x) * 3];
  }
  EXPECT_GT(max_abs_diff(forward(m, a), forward(m, b)), 1e-9);
}

TEST(Forward, FullIndexSetEqualsDefault) {
  TntConfig a = preset("tnt-micro");
  TntConfig b = a;
  b.tnt_block_indices = all_layers(b.depth);
  const Model ma = build(a, 5), mb = build(b, 5);
  Rng rng(5);
  const Tensor img = random_image(32, 32, rng);
  tnt::testing::expect_bit_equal(forward(ma, img), forward(mb, img));
}

TEST(Forward, MixedModelKindsFollowIndices) {
  TntConfig cfg = preset("tnt-micro");
  cfg.tnt_block_indices = {1, 3};
  const Model m = build(cfg, 6);
  ASSERT_EQ(m.layers.size(), 4u);
  EXPECT_TRUE(m.layers[0].is_tnt());
  EXPECT_FALSE(m.layers[1].is_tnt());
  EXPECT_TRUE(m.layers[2].is_tnt());
  EXPECT_FALSE(m.layers[3].is_tnt());
  Rng rng(6);
  ForwardTrace trace;
  forward(m, random_image(32, 32, rng), false, nullptr, &trace);
  ASSERT_EQ(trace.layers.size(), 4u);
  // A vanilla layer leaves the words exactly as it found them.
  tnt::testing::expect_bit_equal(trace.layers[1].words, trace.layers[0].words);
  tnt::testing::expect_bit_equal(trace.layers[3].words, trace.layers[2].words);
  EXPECT_FALSE(trace.layers[1].inner_attn.defined());
}

TEST(Forward, WordEncodingIsWhatBreaksSubpatchPermutation) {
  TntConfig cfg = preset("tnt-micro");
  cfg.pos_enc.word = false;
  Model m = build(cfg, 7);
  const Model original = m.clone();
  const std::vector<std::int64_t> perm{2, 0, 3, 1};
  const std::int64_t c = cfg.inner_dim;
  // New word slot j carries old word perm[j]; move fusion rows to match.
  for (auto& layer : m.layers) {
    auto& p = std::get<TntBlockParams>(layer.block);
    const Tensor w = p.fusion.weight.clone();
    auto dst = p.fusion.weight.mutable_data();
    const std::int64_t d = w.dim(1);
    for (std::int64_t j = 0; j < 4; ++j) {
      for (std::int64_t r = 0; r < c * d; ++r) dst[j * c * d + r] = w.data()[perm[j] * c * d + r];
    }
  }
  Rng rng(8);
  const Tensor img = random_image(32, 32, rng);
  const Tensor words = split_to_words(img, 8, 4);
  std::vector<Tensor> cols;
  for (auto j : perm) cols.push_back(slice(words, 1, j, 1));
  const Tensor shuffled = assemble_words(concat(cols, 1), 32, 32, 8, 4);
  tnt::testing::expect_near_all(forward(m, shuffled), forward(original, img), 1e-10);

  // With E_word enabled the same construction changes the logits.
  Model with = build(preset("tnt-micro"), 7);
  const Model with_orig = with.clone();
  for (std::size_t i = 0; i < with.layers.size(); ++i) {
    std::get<TntBlockParams>(with.layers[i].block).fusion.weight =
        std::get<TntBlockParams>(m.layers[i].block).fusion.weight.clone();
  }
  with.tokenizer.word_proj = with_orig.tokenizer.word_proj;
  EXPECT_GT(max_abs_diff(forward(with, shuffled), forward(with_orig, img)), 1e-9);
}

TEST(Forward, ModelGradientsPassFiniteDifferences) {
  checks::GradCheckOptions opts;
  opts.max_entries = 8;
  const auto res = checks::model_gradient_suite(preset("tnt-micro"), opts);
  EXPECT_GT(res.size(), 50u);
  for (const auto& e : res) EXPECT_TRUE(e.passed) << e.name << " " << e.rel_err;
}

TEST(Interpolation, SameSizeIsIdentity) {
  const Model m = build(preset("tnt-micro"), 9);
  const Model same = interpolate_position_encodings(m, 32, 32);
  tnt::testing::expect_bit_equal(same.tokenizer.e_sentence, m.tokenizer.e_sentence);
  tnt::testing::expect_bit_equal(same.tokenizer.e_word, m.tokenizer.e_word);
}

TEST(Interpolation, DoublingResolutionGrowsGrid) {
  TntConfig cfg = preset("tnt-s");
  cfg.depth = 1;
  cfg.tnt_block_indices = {1};
  const Model m = build(cfg, 10);
  const Model big = interpolate_position_encodings(m, 448, 448);
  EXPECT_EQ(big.tokenizer.e_sentence.shape(), (Shape{785, 384}));
  EXPECT_EQ(big.config.num_patches(), 784);
  tnt::testing::expect_bit_equal(slice(big.tokenizer.e_sentence, 0, 0, 1), slice(m.tokenizer.e_sentence, 0, 0, 1));
  tnt::testing::expect_bit_equal(big.tokenizer.e_word, m.tokenizer.e_word);
  // The original shares nothing with the resized model.
  EXPECT_EQ(m.tokenizer.e_sentence.dim(0), 197);
}

TEST(Interpolation, ConstantFieldStaysConstant) {
  Model m = build(preset("tnt-micro"), 11);
  for (auto& v : m.tokenizer.e_sentence.mutable_data()) v = 0.375;
  const Model big = interpolate_position_encodings(m, 56, 40);
  EXPECT_EQ(big.tokenizer.e_sentence.shape(), (Shape{36, 32}));
  for (double v : big.tokenizer.e_sentence.data()) EXPECT_NEAR(v, 0.375, 1e-15);
  Rng rng(11);
  EXPECT_EQ(forward(big, random_image(56, 40, rng)).shape(), (Shape{10}));
}

TEST(Interpolation, NonDivisibleTargetIsRejected) {
  const Model m = build(preset("tnt-micro"), 12);
  EXPECT_THROW(interpolate_position_encodings(m, 36, 32), ConfigError);
}

TEST(Interpolation, BilinearHalfPixelOnLinearRamp) {
  // Upsampling a 2-wide ramp [0, 1] to 4 wide with half-pixel centers.
  const Tensor field = Tensor::from_data({1, 2, 1}, {0.0, 1.0});
  const Tensor up = resize_bilinear(field, 1, 4);
  const double expect[] = {0.0, 0.25, 0.75, 1.0};
  for (int i = 0; i < 4; ++i) EXPECT_NEAR(up.data()[i], expect[i], 1e-15);
}
