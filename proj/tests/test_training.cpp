#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "test_util.hpp"
#include "tnt/checkpoint.hpp"
#include "tnt/checks.hpp"
#include "tnt/ops.hpp"
#include "tnt/training.hpp"

using namespace tnt;
using tnt::testing::randn;

namespace {

NamedParam scalar_param(double value) {
  Tensor t = Tensor::from_data({1}, {value});
  t.set_requires_grad(true);
  return {"theta", t, ParamKind::kWeight};
}

TntConfig micro2() {
  TntConfig cfg = preset("tnt-micro");
  cfg.num_classes = 2;
  return cfg;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("tnt_test_training_" + name);
}

}  // namespace

TEST(AdamW, FirstStepClosedForm) {
  NamedParam p = scalar_param(1.0);
  sum_all(p.tensor).backward();  // g = 1
  OptimState st;
  st.hyper.eps = 0.0;
  st.hyper.weight_decay = 0.0;
  adamw_step({p}, st, 0.1);
  EXPECT_NEAR(p.tensor.data()[0], 0.9, 1e-15);
  EXPECT_EQ(st.step, 1);
}

TEST(AdamW, ZeroGradientZeroDecayIsNoOp) {
  NamedParam p = scalar_param(0.7);
  OptimState st;
  st.hyper.weight_decay = 0.0;
  for (int i = 0; i < 3; ++i) adamw_step({p}, st, 0.1);
  EXPECT_EQ(p.tensor.data()[0], 0.7);
}

TEST(AdamW, DecayIsDecoupledAndSkippedForBiases) {
  NamedParam w = scalar_param(2.0);
  Tensor b = Tensor::from_data({1}, {2.0});
  b.set_requires_grad(true);
  const NamedParam bias{"bias", b, ParamKind::kBias};
  OptimState st;
  st.hyper.weight_decay = 0.5;
  adamw_step({w, bias}, st, 0.1);
  EXPECT_NEAR(w.tensor.data()[0], 2.0 - 0.1 * 0.5 * 2.0, 1e-15);
  EXPECT_EQ(bias.tensor.data()[0], 2.0);
}

TEST(AdamW, NonFiniteGradientAbortsBeforeAnyChange) {
  NamedParam a = scalar_param(1.0), b = scalar_param(1.0);
  b.name = "other";
  sum_all(add(scale(a.tensor, 1.0), scale(b.tensor, std::numeric_limits<double>::infinity()))).backward();
  OptimState st;
  EXPECT_THROW(adamw_step({a, b}, st, 0.1), NumericalError);
  EXPECT_EQ(a.tensor.data()[0], 1.0);
  EXPECT_EQ(st.step, 0);
}

TEST(AdamW, ConvexQuadraticConverges) {
  // f = 0.5 * sum a_i theta_i^2.
  const std::vector<double> curv{1.0, 2.0, 4.0};
  Tensor theta = Tensor::from_data({3}, {1.0, -0.5, 0.25});
  theta.set_requires_grad(true);
  const Tensor a = Tensor::from_data({3}, curv);
  const std::vector<NamedParam> params{{"theta", theta, ParamKind::kWeight}};
  OptimState st;
  st.hyper.weight_decay = 0.0;
  st.hyper.beta1 = 0.5;  // beta1 = 0.9 still rings after 50 steps at any stable lr
  double prev = 1e300;
  for (int step = 0; step < 50; ++step) {
    theta.zero_grad();
    const Tensor loss = scale(sum_all(mul(a, mul(theta, theta))), 0.5);
    if (step == 0) prev = loss.item();
    loss.backward();
    adamw_step(params, st, lr_at(step, 50, 0, 0.2));
    if (step == 0) {
      const double after = 0.5 * (curv[0] * std::pow(theta.data()[0], 2) + curv[1] * std::pow(theta.data()[1], 2) +
                                  curv[2] * std::pow(theta.data()[2], 2));
      EXPECT_LT(after, prev);
    }
  }
  double g2 = 0.0;
  for (int i = 0; i < 3; ++i) g2 += std::pow(curv[i] * theta.data()[i], 2);
  EXPECT_LT(std::sqrt(g2), 1e-3);
}

TEST(Schedule, Edges) {
  EXPECT_EQ(lr_at(0, 100, 10, 1e-3), 0.0);
  EXPECT_NEAR(lr_at(5, 100, 10, 1e-3), 5e-4, 1e-18);
  EXPECT_DOUBLE_EQ(lr_at(10, 100, 10, 1e-3), 1e-3);
  EXPECT_NEAR(lr_at(55, 100, 10, 1e-3), 5e-4, 1e-15);
  EXPECT_NEAR(lr_at(100, 100, 10, 1e-3), 0.0, 1e-12);
  EXPECT_DOUBLE_EQ(lr_at(0, 100, 0, 1e-3), 1e-3);
}

TEST(Schedule, DefaultWarmupFraction) {
  TrainOptions o;
  EXPECT_EQ(o.resolved_warmup(), 33);  // 2000 * 5 / 300
  o.warmup_steps = 7;
  EXPECT_EQ(o.resolved_warmup(), 7);
}

TEST(CrossEntropy, UniformLogitsGiveLogK) {
  const std::vector<int> label{3};
  EXPECT_NEAR(smoothed_cross_entropy(Tensor::zeros({5}), label, 0.0).item(), std::log(5.0), 1e-15);
}

TEST(CrossEntropy, FullSmoothingIgnoresLabel) {
  const Tensor logits = Tensor::from_data({4}, {0.3, -1.0, 2.0, 0.5});
  const std::vector<int> l0{0}, l2{2};
  EXPECT_DOUBLE_EQ(smoothed_cross_entropy(logits, l0, 1.0).item(), smoothed_cross_entropy(logits, l2, 1.0).item());
}

TEST(CrossEntropy, GradientMatchesFiniteDifferences) {
  Rng rng(1);
  Tensor logits = randn({3, 4}, rng, 1.0, true);
  const std::vector<int> labels{1, 0, 3};
  checks::GradCheckOptions opts;
  opts.tolerance = 1e-6;
  const auto res =
      checks::gradient_check([&] { return smoothed_cross_entropy(logits, labels, 0.1); }, {{"logits", logits}}, opts);
  EXPECT_TRUE(res.at(0).passed) << res.at(0).rel_err;
}

TEST(CrossEntropy, BadLabelIsRejected) {
  const std::vector<int> label{7};
  EXPECT_THROW(smoothed_cross_entropy(Tensor::zeros({3}), label), std::out_of_range);
}

TEST(Dataset, PatchMeansAreEqualizedAcrossPairs) {
  const ToyDataset d = make_subpatch_task(5, 64);
  const Tensor means = patch_means(d.images, 8);
  double worst = 0.0;
  for (std::int64_t pair = 0; pair < 32; ++pair) {
    for (std::int64_t k = 0; k < means.dim(1); ++k) {
      worst = std::max(worst, std::abs(means.at({2 * pair, k}) - means.at({2 * pair + 1, k})));
    }
  }
  EXPECT_LT(worst, 1e-6);
  EXPECT_EQ(d.labels[0], 0);
  EXPECT_EQ(d.labels[1], 1);
}

TEST(Dataset, RegenerationIsBitIdentical) {
  const ToyDataset a = make_subpatch_task(6, 16), b = make_subpatch_task(6, 16);
  tnt::testing::expect_bit_equal(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  const auto splits = make_subpatch_splits(6, 16, 16);
  EXPECT_NE(splits.train.images.data()[0], splits.test.images.data()[0]);
}

TEST(Dataset, OddSizeIsRejected) { EXPECT_THROW(make_subpatch_task(0, 7), std::invalid_argument); }

TEST(Dataset, CacheRoundTrip) {
  const ToyDataset d = make_subpatch_task(7, 8);
  const auto stem = temp_path("cache").string();
  save_dataset(d, stem);
  const ToyDataset back = load_dataset(stem);
  tnt::testing::expect_bit_equal(back.images, d.images);
  EXPECT_EQ(back.labels, d.labels);
  EXPECT_EQ(back.descriptor, "subpatch-v1");
}

TEST(Dataset, PatchMeanClassifierIsAtChance) {
  const auto splits = make_subpatch_splits(8, 512, 512);
  const double acc = patch_mean_baseline(splits.train, splits.test);
  EXPECT_NEAR(acc, 0.5, 0.06);
}

TEST(Train, InitialLossNearLogTwo) {
  const Model m = build(micro2(), 9);
  const ToyDataset d = make_subpatch_task(9, 32);
  const Tensor logits = forward(m, d.images);
  const double loss = smoothed_cross_entropy(logits, d.labels, 0.1).item();
  EXPECT_NEAR(loss / std::log(2.0), 1.0, 0.2);
}

TEST(Train, DeterministicAndLogsSchedule) {
  const ToyDataset d = make_subpatch_task(10, 64);
  TrainOptions o;
  o.steps = 6;
  o.batch_size = 8;
  o.warmup_steps = 2;
  o.seed = 10;
  o.log_path = temp_path("log.jsonl").string();
  Model a = build(micro2(), 10), b = build(micro2(), 10);
  const TrainResult ra = train(a, d, o);
  o.log_path.clear();
  const TrainResult rb = train(b, d, o);
  ASSERT_EQ(ra.log.size(), 6u);
  for (std::size_t i = 0; i < ra.log.size(); ++i) {
    EXPECT_EQ(ra.log[i].loss, rb.log[i].loss);
    EXPECT_EQ(ra.log[i].lr, lr_at(static_cast<std::int64_t>(i), 6, 2, o.adamw.lr));
  }
  EXPECT_EQ(parameter_checksum(a), parameter_checksum(b));
  EXPECT_EQ(ra.optim.step, 6);

  std::ifstream in(temp_path("log.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("step").get<std::int64_t>(), lines);
    EXPECT_EQ(j.at("lr").get<double>(), ra.log[static_cast<std::size_t>(lines)].lr);
    ++lines;
  }
  EXPECT_EQ(lines, 6);
}

TEST(Train, DivergenceRestoresLastGoodState) {
  ToyDataset d = make_subpatch_task(11, 8);
  for (auto& v : d.images.mutable_data()) v = std::numeric_limits<double>::quiet_NaN();
  Model m = build(micro2(), 11);
  const auto before = parameter_checksum(m);
  TrainOptions o;
  o.steps = 3;
  o.batch_size = 4;
  o.divergence_checkpoint = temp_path("diverged.tntc").string();
  try {
    train(m, d, o);
    FAIL() << "expected DivergenceError";
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.step, 0);
  }
  EXPECT_EQ(parameter_checksum(m), before);
  EXPECT_EQ(parameter_checksum(load_checkpoint(o.divergence_checkpoint).model), before);
}

TEST(Train, DecayPartitionCoversEveryParameter) {
  const Model m = build(micro2(), 12);
  std::set<std::string> decayed, kept;
  for (const auto& p : m.parameters()) (decays(p.kind) ? decayed : kept).insert(p.name);
  EXPECT_EQ(decayed.size() + kept.size(), m.parameters().size());
  for (const auto& n : decayed) EXPECT_NE(n.find("weight"), std::string::npos) << n;
  for (const auto& n : kept) {
    const bool ok = n.find("bias") != std::string::npos || n.find("gamma") != std::string::npos ||
                    n.find("beta") != std::string::npos || n.find("e_") != std::string::npos ||
                    n.find("z_") != std::string::npos;
    EXPECT_TRUE(ok) << n;
  }
}

TEST(Train, ShortRunReducesLoss) {
  const auto splits = make_subpatch_splits(13, 256, 64);
  Model m = build(micro2(), 13);
  TrainOptions o;
  o.steps = 150;
  o.seed = 13;
  const TrainResult r = train(m, splits.train, o);
  double first = 0.0, last = 0.0;
  for (int i = 0; i < 10; ++i) {
    first += r.log[static_cast<std::size_t>(i)].loss;
    last += r.log[r.log.size() - 1 - static_cast<std::size_t>(i)].loss;
  }
  EXPECT_LT(last, first);
  EXPECT_GT(evaluate(m, splits.test), 0.6);
}
