#include <cmath>

#include "test_util.hpp"
#include "tnt/checks.hpp"
#include "tnt/ops.hpp"

using namespace tnt;

TEST(GradientCheck, DetectsAWrongGradient) {
  Tensor x = Tensor::from_data({3}, {0.1, -0.4, 0.7});
  x.set_requires_grad(true);
  autodiff::inject_backward_fault("gelu");
  const auto bad = checks::gradient_check([&] { return sum_all(gelu(x)); }, {{"x", x}}, {});
  autodiff::inject_backward_fault("");
  ASSERT_EQ(bad.size(), 1u);
  EXPECT_FALSE(bad[0].passed);
  EXPECT_NEAR(bad[0].rel_err, 2.0, 1e-6);  // negated gradient: |2g| / |g|

  const auto good = checks::gradient_check([&] { return sum_all(gelu(x)); }, {{"x", x}}, {});
  EXPECT_TRUE(good[0].passed);
  EXPECT_EQ(good[0].checked, 3);
}

TEST(GradientCheck, SamplingCapsEntries) {
  Rng rng(1);
  Tensor x = tnt::testing::randn({10, 10}, rng, 1.0, true);
  checks::GradCheckOptions opts;
  opts.max_entries = 7;
  const auto res = checks::gradient_check([&] { return sum_all(mul(x, x)); }, {{"x", x}}, opts);
  EXPECT_EQ(res[0].checked, 7);
  EXPECT_TRUE(res[0].passed);
}

TEST(GradientCheck, ZeroGradientUsesNormFloor) {
  Tensor x = Tensor::from_data({2}, {1.0, 2.0});
  x.set_requires_grad(true);
  // Softmax outputs sum to one, so the gradient of their sum is exactly zero.
  const auto res = checks::gradient_check([&] { return sum_all(softmax(x)); }, {{"x", x}}, {});
  EXPECT_TRUE(res[0].passed) << res[0].rel_err;
}

TEST(GradientCheck, RestoresInputs) {
  Tensor x = Tensor::from_data({2}, {0.3, -0.2});
  x.set_requires_grad(true);
  checks::gradient_check([&] { return sum_all(gelu(x)); }, {{"x", x}}, {});
  EXPECT_EQ(x.data()[0], 0.3);
  EXPECT_EQ(x.data()[1], -0.2);
}

TEST(Oracle, NaiveAttentionHandComputed) {
  // One head, dim 1, identity projections, zero biases: q = k = v = x.
  Rng rng(2);
  MsaParams p = make_msa(1, 1, rng);
  for (auto* lp : {&p.q, &p.k, &p.v, &p.proj}) lp->weight.mutable_data()[0] = 1.0;
  const auto [out, attn] = checks::naive_msa({0.0, 1.0}, 2, p);
  const double e = std::exp(1.0);
  EXPECT_NEAR(attn[0], 0.5, 1e-15);
  EXPECT_NEAR(attn[2], 1.0 / (1.0 + e), 1e-15);
  EXPECT_NEAR(out[1], e / (1.0 + e), 1e-15);
  const auto fast = msa_forward(Tensor::from_data({2, 1}, {0.0, 1.0}), p);
  EXPECT_NEAR(fast.out.data()[1], out[1], 1e-15);
}

TEST(Oracle, SuiteReportsFailuresUnderImpossibleTolerance) {
  const auto res = checks::attention_oracle_suite(3, -1.0);
  for (const auto& e : res) EXPECT_FALSE(e.passed);
}
