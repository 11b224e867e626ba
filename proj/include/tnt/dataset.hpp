#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "tnt/tensor.hpp"

namespace tnt {

struct ToyDataset {
  Tensor images;            // [N, H, W, 3], raw 0..255 intensities
  std::vector<int> labels;  // N entries in [0, num_classes)
  std::int64_t num_classes = 2;
  std::uint64_t seed = 0;
  std::string descriptor;

  std::int64_t size() const { return static_cast<std::int64_t>(labels.size()); }
};

inline constexpr std::string_view kSubpatchTask = "subpatch-v1";

// Two-class 32x32 images tiled by 8x8 patches of 2x2 words (4x4 pixels).
// Every word carries a zero-mean stripe texture, horizontal or vertical;
// class 0 places horizontal stripes on the patch diagonal, class 1 on the
// anti-diagonal. Texture sign and amplitude are random per patch, so the
// class is not a linear function of the pixels. Samples are generated in
// (class 0, class 1) pairs sharing every patch's mean intensity exactly,
// which leaves patch-level means uninformative. n_samples must be even.
ToyDataset make_subpatch_task(std::uint64_t seed, std::int64_t n_samples);

struct TaskSplits {
  ToyDataset train;
  ToyDataset test;
};

// Train and held-out sets drawn from independent streams of one seed.
inline constexpr std::int64_t kDefaultTrainSize = 2048;
inline constexpr std::int64_t kDefaultTestSize = 512;
TaskSplits make_subpatch_splits(std::uint64_t seed, std::int64_t n_train = kDefaultTrainSize,
                                std::int64_t n_test = kDefaultTestSize);

// Images of the given sample indices, stacked as [B, H, W, 3].
Tensor gather_images(const ToyDataset& data, std::span<const std::int64_t> indices);
std::vector<int> gather_labels(const ToyDataset& data, std::span<const std::int64_t> indices);

// Per-sample patch means, [N, n_patches * 3], for patch size `patch`.
Tensor patch_means(const Tensor& images, std::int64_t patch);

// Dataset cache: <stem>.images.tnt and <stem>.labels.tnt raw tensor files
// plus <stem>.json metadata.
void save_dataset(const ToyDataset& data, const std::string& stem);
ToyDataset load_dataset(const std::string& stem);

}  // namespace tnt
