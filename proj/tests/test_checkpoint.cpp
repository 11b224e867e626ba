#include <filesystem>

#include "test_util.hpp"
#include "tnt/checkpoint.hpp"
#include "tnt/io.hpp"
#include "tnt/training.hpp"

using namespace tnt;
namespace fs = std::filesystem;

namespace {

std::string tmp(const std::string& name) { return (fs::temp_directory_path() / ("tnt_test_ckpt_" + name)).string(); }

std::vector<char> bytes_of(const std::string& path) { return binary::read_file(path); }

void expect_same_params(const Model& a, const Model& b) {
  const auto pa = a.parameters(), pb = b.parameters();
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_EQ(pa[i].name, pb[i].name);
    tnt::testing::expect_bit_equal(pa[i].tensor, pb[i].tensor);
  }
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  TntConfig cfg = preset("tnt-micro");
  cfg.tnt_block_indices = {1, 3};
  cfg.se = true;
  const Model m = build(cfg, 1);
  save_checkpoint(tmp("rt.tntc"), m);
  const Checkpoint back = load_checkpoint(tmp("rt.tntc"));
  EXPECT_FALSE(back.optim.has_value());
  expect_same_params(m, back.model);
  EXPECT_EQ(config_to_json(back.model.config), config_to_json(cfg));
  Rng rng(1);
  const Tensor img = tnt::testing::random_image(32, 32, rng);
  tnt::testing::expect_bit_equal(forward(back.model, img), forward(m, img));
}

TEST(Checkpoint, SaveLoadSaveIsByteIdentical) {
  const Model m = build(preset("tnt-micro"), 2);
  save_checkpoint(tmp("a.tntc"), m);
  save_checkpoint(tmp("b.tntc"), load_checkpoint(tmp("a.tntc")).model);
  EXPECT_EQ(bytes_of(tmp("a.tntc")), bytes_of(tmp("b.tntc")));
}

TEST(Checkpoint, OptimizerStateRoundTrips) {
  TntConfig cfg = preset("tnt-micro");
  cfg.num_classes = 2;
  Model m = build(cfg, 3);
  TrainOptions o;
  o.steps = 2;
  o.batch_size = 4;
  const TrainResult r = train(m, make_subpatch_task(3, 8), o);
  save_checkpoint(tmp("opt.tntc"), m, &r.optim);
  const Checkpoint back = load_checkpoint(tmp("opt.tntc"));
  ASSERT_TRUE(back.optim.has_value());
  EXPECT_EQ(back.optim->step, 2);
  EXPECT_EQ(back.optim->hyper.weight_decay, r.optim.hyper.weight_decay);
  ASSERT_EQ(back.optim->moments.size(), r.optim.moments.size());
  for (std::size_t i = 0; i < r.optim.moments.size(); ++i) {
    EXPECT_EQ(back.optim->moments[i].name, r.optim.moments[i].name);
    EXPECT_EQ(back.optim->moments[i].m, r.optim.moments[i].m);
    EXPECT_EQ(back.optim->moments[i].v, r.optim.moments[i].v);
  }
}

TEST(Checkpoint, CorruptMagicIsFormatError) {
  save_checkpoint(tmp("magic.tntc"), build(preset("tnt-micro"), 4));
  auto b = bytes_of(tmp("magic.tntc"));
  b[0] = 'X';
  binary::write_file(tmp("magic.tntc"), b);
  EXPECT_THROW(load_checkpoint(tmp("magic.tntc")), FormatError);
}

TEST(Checkpoint, WrongVersionIsRejected) {
  save_checkpoint(tmp("ver.tntc"), build(preset("tnt-micro"), 5));
  auto b = bytes_of(tmp("ver.tntc"));
  b[4] = 99;
  binary::write_file(tmp("ver.tntc"), b);
  try {
    load_checkpoint(tmp("ver.tntc"));
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, TruncationIsRejected) {
  save_checkpoint(tmp("trunc.tntc"), build(preset("tnt-micro"), 6));
  auto b = bytes_of(tmp("trunc.tntc"));
  b.resize(b.size() - 17);
  binary::write_file(tmp("trunc.tntc"), b);
  EXPECT_THROW(load_checkpoint(tmp("trunc.tntc")), CheckpointError);
}

TEST(Checkpoint, TrailingBytesAreRejected) {
  save_checkpoint(tmp("trail.tntc"), build(preset("tnt-micro"), 6));
  auto b = bytes_of(tmp("trail.tntc"));
  b.push_back('\0');
  binary::write_file(tmp("trail.tntc"), b);
  EXPECT_THROW(load_checkpoint(tmp("trail.tntc")), CheckpointError);
}

TEST(Checkpoint, ShapeDisagreementWithConfigIsRejected) {
  // Parameters of a 2-class model under a header claiming 10 classes.
  TntConfig two = preset("tnt-micro");
  two.num_classes = 2;
  save_checkpoint(tmp("two.tntc"), build(two, 7));
  save_checkpoint(tmp("ten.tntc"), build(preset("tnt-micro"), 7));
  const auto b2 = bytes_of(tmp("two.tntc")), b10 = bytes_of(tmp("ten.tntc"));
  binary::Reader r2(b2, "two"), r10(b10, "ten");
  r2.bytes(8);
  r10.bytes(8);
  const auto len2 = r2.u64(), len10 = r10.u64();
  std::vector<char> mixed(b10.begin(), b10.begin() + 16 + static_cast<std::ptrdiff_t>(len10));
  mixed.insert(mixed.end(), b2.begin() + 16 + static_cast<std::ptrdiff_t>(len2), b2.end());
  binary::write_file(tmp("mixed.tntc"), mixed);
  try {
    load_checkpoint(tmp("mixed.tntc"));
    FAIL();
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("head"), std::string::npos) << e.what();
  }
}

TEST(Checkpoint, MissingFileIsIoError) {
  EXPECT_THROW(load_checkpoint(tmp("does_not_exist.tntc")), IoError);
}

TEST(TensorFile, RoundTrip) {
  Rng rng(8);
  const Tensor t = tnt::testing::randn({2, 3, 4}, rng);
  write_tensor_file(tmp("t.tnt"), t);
  tnt::testing::expect_bit_equal(read_tensor_file(tmp("t.tnt")), t);
}

TEST(Ppm, RoundTripOfIntegerImage) {
  std::vector<double> px(4 * 3 * 3);
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<double>((i * 37) % 256);
  const Tensor img = Tensor::from_data({4, 3, 3}, px);
  write_ppm(tmp("img.ppm"), img);
  tnt::testing::expect_bit_equal(read_image(tmp("img.ppm")), img);
}
