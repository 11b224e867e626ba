#pragma once

#include <gtest/gtest.h>

#include "tnt/rng.hpp"
#include "tnt/tensor.hpp"

namespace tnt::testing {

inline Tensor randn(Shape shape, Rng& rng, double scale = 1.0, bool requires_grad = false) {
  std::vector<double> d(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : d) v = scale * rng.normal();
  Tensor t = Tensor::from_data(std::move(shape), std::move(d));
  if (requires_grad) t.set_requires_grad(true);
  return t;
}

inline void expect_near_all(const Tensor& a, const Tensor& b, double tol) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    EXPECT_NEAR(a.data()[i], b.data()[i], tol) << "at flat index " << i;
  }
}

inline void expect_bit_equal(const Tensor& a, const Tensor& b) {
  ASSERT_EQ(a.shape(), b.shape());
  for (std::int64_t i = 0; i < a.numel(); ++i) {
    ASSERT_EQ(a.data()[i], b.data()[i]) << "at flat index " << i;
  }
}

// Raw [H, W, 3] image with uniform intensities in [0, 255).
inline Tensor random_image(std::int64_t h, std::int64_t w, Rng& rng) {
  std::vector<double> d(static_cast<std::size_t>(h * w * 3));
  for (auto& v : d) v = rng.uniform(0.0, 255.0);
  return Tensor::from_data({h, w, 3}, std::move(d));
}

}  // namespace tnt::testing
