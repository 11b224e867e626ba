#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tnt/dataset.hpp"
#include "tnt/model.hpp"
#include "tnt/optim.hpp"

namespace tnt {

// Mean over the batch of -sum_k q_k log softmax(logits)_k with
// q = (1 - eps) onehot + eps / K. logits: [K] or [B, K].
Tensor smoothed_cross_entropy(const Tensor& logits, std::span<const int> labels, double eps = 0.1);

struct TrainOptions {
  std::int64_t steps = 2000;
  std::int64_t batch_size = 32;
  AdamWConfig adamw;
  // Negative: 5/300 of the run, the ImageNet warmup fraction.
  std::int64_t warmup_steps = -1;
  double label_smoothing = 0.1;
  double clip_grad_norm = 0.0;  // 0 disables
  std::uint64_t seed = 0;
  // If non-empty, each StepRecord is appended as a JSON line.
  std::string log_path;
  // Where the last good state is written when the loss goes non-finite.
  std::string divergence_checkpoint;
  std::function<void(const struct StepRecord&)> on_step;

  std::int64_t resolved_warmup() const;
};

struct StepRecord {
  std::int64_t step = 0;
  double lr = 0.0;
  double loss = 0.0;
  double acc = 0.0;  // batch accuracy of the training-mode forward
};

struct TrainResult {
  std::vector<StepRecord> log;
  OptimState optim;
};

class DivergenceError : public NumericalError {
 public:
  DivergenceError(const std::string& what, std::int64_t step) : NumericalError(what), step(step) {}
  std::int64_t step;
};

// Trains `model` in place. Deterministic for fixed (model, data, options).
// A non-finite loss or gradient restores the parameters from before the
// failing step, writes them to divergence_checkpoint (if set) and throws
// DivergenceError.
TrainResult train(Model& model, const ToyDataset& data, const TrainOptions& options);

// Fraction of samples whose argmax logit equals the label (eval mode).
double evaluate(const Model& model, const ToyDataset& data, std::int64_t batch_size = 64);

// Multinomial logistic regression on standardized patch means, fit by full
// batch gradient descent on `train_set`; returns accuracy on `test_set`.
double patch_mean_baseline(const ToyDataset& train_set, const ToyDataset& test_set, std::int64_t patch = 8,
                           std::int64_t iterations = 500);

nlohmann::json step_record_to_json(const StepRecord& r);

}  // namespace tnt
