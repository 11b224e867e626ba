#include "tnt/dataset.hpp"

#include <fstream>
#include <json.hpp>

#include "tnt/io.hpp"
#include "tnt/rng.hpp"

namespace tnt {

namespace {

constexpr std::int64_t kSide = 32;
constexpr std::int64_t kPatch = 8;
constexpr std::int64_t kWord = 4;

// Stripe value at (row, col) inside a word: +1/-1 alternating along rows
// (horizontal stripes) or columns (vertical). Zero mean over any 4x4 word.
double stripe(bool horizontal, std::int64_t row, std::int64_t col) {
  const std::int64_t k = horizontal ? row : col;
  return (k % 2 == 0) ? 1.0 : -1.0;
}

void fill_sample(std::span<double> img, int label, std::span<const double> offsets, Rng& rng) {
  const std::int64_t grid = kSide / kPatch;
  for (std::int64_t pr = 0; pr < grid; ++pr) {
    for (std::int64_t pc = 0; pc < grid; ++pc) {
      const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
      const double amp = rng.uniform(30.0, 50.0);
      double noise[kPatch][kPatch][3];
      double noise_mean[3] = {0.0, 0.0, 0.0};
      for (auto& row : noise) {
        for (auto& px : row) {
          for (int ch = 0; ch < 3; ++ch) {
            px[ch] = rng.uniform(-12.0, 12.0);
            noise_mean[ch] += px[ch];
          }
        }
      }
      for (double& m : noise_mean) m /= static_cast<double>(kPatch * kPatch);
      for (std::int64_t r = 0; r < kPatch; ++r) {
        for (std::int64_t c = 0; c < kPatch; ++c) {
          const std::int64_t wr = r / kWord, wc = c / kWord;
          // Class 0: horizontal on the main diagonal of the 2x2 word grid.
          const bool on_diag = (wr == wc);
          const bool horizontal = (label == 0) ? on_diag : !on_diag;
          const double tex = sign * amp * stripe(horizontal, r % kWord, c % kWord);
          const std::int64_t y = pr * kPatch + r, x = pc * kPatch + c;
          for (int ch = 0; ch < 3; ++ch) {
            const double b = offsets[static_cast<std::size_t>((pr * grid + pc) * 3 + ch)];
            img[static_cast<std::size_t>((y * kSide + x) * 3 + ch)] = b + tex + noise[r][c][ch] - noise_mean[ch];
          }
        }
      }
    }
  }
}

}  // namespace

ToyDataset make_subpatch_task(std::uint64_t seed, std::int64_t n_samples) {
  if (n_samples <= 0 || n_samples % 2 != 0) {
    throw std::invalid_argument("make_subpatch_task: n_samples must be a positive even number, got " +
                                std::to_string(n_samples));
  }
  const std::int64_t grid = kSide / kPatch;
  const std::int64_t per_image = kSide * kSide * 3;
  std::vector<double> data(static_cast<std::size_t>(n_samples * per_image));
  std::vector<int> labels(static_cast<std::size_t>(n_samples));
  Rng rng = Rng::stream(seed, kSubpatchTask);
  std::vector<double> offsets(static_cast<std::size_t>(grid * grid * 3));
  for (std::int64_t pair = 0; pair < n_samples / 2; ++pair) {
    for (auto& b : offsets) b = rng.uniform(80.0, 176.0);
    for (int label = 0; label < 2; ++label) {
      const std::int64_t i = 2 * pair + label;
      labels[static_cast<std::size_t>(i)] = label;
      fill_sample(std::span<double>(data).subspan(static_cast<std::size_t>(i * per_image),
                                                  static_cast<std::size_t>(per_image)),
                  label, offsets, rng);
    }
  }
  ToyDataset out;
  out.images = Tensor::from_data({n_samples, kSide, kSide, 3}, std::move(data));
  out.labels = std::move(labels);
  out.num_classes = 2;
  out.seed = seed;
  out.descriptor = std::string(kSubpatchTask);
  return out;
}

TaskSplits make_subpatch_splits(std::uint64_t seed, std::int64_t n_train, std::int64_t n_test) {
  return {make_subpatch_task(Rng::derive_seed(seed, "train-split"), n_train),
          make_subpatch_task(Rng::derive_seed(seed, "test-split"), n_test)};
}

Tensor gather_images(const ToyDataset& data, std::span<const std::int64_t> indices) {
  const auto& shape = data.images.shape();
  const std::int64_t per = shape[1] * shape[2] * shape[3];
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(per) * indices.size());
  const auto src = data.images.data();
  for (auto i : indices) {
    if (i < 0 || i >= shape[0]) throw std::out_of_range("gather_images: index " + std::to_string(i));
    const auto first = src.begin() + i * per;
    out.insert(out.end(), first, first + per);
  }
  return Tensor::from_data({static_cast<std::int64_t>(indices.size()), shape[1], shape[2], shape[3]}, std::move(out));
}

std::vector<int> gather_labels(const ToyDataset& data, std::span<const std::int64_t> indices) {
  std::vector<int> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(data.labels.at(static_cast<std::size_t>(i)));
  return out;
}

Tensor patch_means(const Tensor& images, std::int64_t patch) {
  if (images.rank() != 4 || images.dim(3) != 3) {
    throw DimensionError("patch_means: expected [N, H, W, 3], got " + shape_str(images.shape()));
  }
  const std::int64_t n = images.dim(0), h = images.dim(1), w = images.dim(2);
  if (patch <= 0 || h % patch != 0 || w % patch != 0) {
    throw DimensionError("patch_means: patch " + std::to_string(patch) + " does not tile " + std::to_string(h) +
                         "x" + std::to_string(w));
  }
  const std::int64_t gh = h / patch, gw = w / patch;
  std::vector<double> out(static_cast<std::size_t>(n * gh * gw * 3), 0.0);
  const auto src = images.data();
  const double inv = 1.0 / static_cast<double>(patch * patch);
  for (std::int64_t s = 0; s < n; ++s) {
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        const std::int64_t cell = (y / patch) * gw + x / patch;
        for (std::int64_t ch = 0; ch < 3; ++ch) {
          out[static_cast<std::size_t>((s * gh * gw + cell) * 3 + ch)] +=
              src[static_cast<std::size_t>(((s * h + y) * w + x) * 3 + ch)] * inv;
        }
      }
    }
  }
  return Tensor::from_data({n, gh * gw * 3}, std::move(out));
}

void save_dataset(const ToyDataset& data, const std::string& stem) {
  write_tensor_file(stem + ".images.tnt", data.images);
  std::vector<double> labels(data.labels.begin(), data.labels.end());
  write_tensor_file(stem + ".labels.tnt", Tensor::from_data({data.size()}, std::move(labels)));
  const nlohmann::json meta = {{"descriptor", data.descriptor},
                               {"seed", data.seed},
                               {"num_classes", data.num_classes},
                               {"n_samples", data.size()}};
  std::ofstream out(stem + ".json");
  if (!out) throw IoError("cannot open '" + stem + ".json' for writing");
  out << meta.dump(2) << '\n';
}

ToyDataset load_dataset(const std::string& stem) {
  nlohmann::json meta;
  {
    std::ifstream in(stem + ".json");
    if (!in) throw IoError("cannot open '" + stem + ".json' for reading");
    try {
      in >> meta;
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(stem + ".json: " + e.what());
    }
  }
  ToyDataset out;
  out.images = read_tensor_file(stem + ".images.tnt");
  const Tensor labels = read_tensor_file(stem + ".labels.tnt");
  try {
    out.descriptor = meta.at("descriptor").get<std::string>();
    out.seed = meta.at("seed").get<std::uint64_t>();
    out.num_classes = meta.at("num_classes").get<std::int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(stem + ".json: " + e.what());
  }
  if (out.images.rank() != 4 || labels.rank() != 1 || labels.dim(0) != out.images.dim(0)) {
    throw FormatError(stem + ": image and label files disagree on sample count");
  }
  for (double v : labels.data()) {
    if (v < 0 || v >= static_cast<double>(out.num_classes) || v != static_cast<int>(v)) {
      throw FormatError(stem + ": label out of range");
    }
    out.labels.push_back(static_cast<int>(v));
  }
  return out;
}

}  // namespace tnt
