#include "tnt/training.hpp"

#include <cmath>
#include <fstream>
#include <numeric>

#include "tnt/checkpoint.hpp"
#include "tnt/ops.hpp"

namespace tnt {

Tensor smoothed_cross_entropy(const Tensor& logits, std::span<const int> labels, double eps) {
  const Tensor batched = logits.rank() == 1 ? reshape(logits, {1, logits.dim(0)}) : logits;
  if (batched.rank() != 2) throw DimensionError("smoothed_cross_entropy: logits must be [K] or [B, K]");
  const std::int64_t b = batched.dim(0), k = batched.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != b) {
    throw DimensionError("smoothed_cross_entropy: " + std::to_string(labels.size()) + " labels for batch of " +
                         std::to_string(b));
  }
  if (eps < 0.0 || eps > 1.0) throw std::invalid_argument("smoothed_cross_entropy: eps must lie in [0, 1]");
  std::vector<double> q(static_cast<std::size_t>(b * k), eps / static_cast<double>(k));
  for (std::int64_t i = 0; i < b; ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw std::out_of_range("smoothed_cross_entropy: label " + std::to_string(y));
    q[static_cast<std::size_t>(i * k + y)] += 1.0 - eps;
  }
  const Tensor target = Tensor::from_data({b, k}, std::move(q));
  return scale(sum_all(mul(log_softmax(batched, -1), target)), -1.0 / static_cast<double>(b));
}

std::int64_t TrainOptions::resolved_warmup() const {
  if (warmup_steps >= 0) return warmup_steps;
  return static_cast<std::int64_t>(std::llround(static_cast<double>(steps) * 5.0 / 300.0));
}

nlohmann::json step_record_to_json(const StepRecord& r) {
  return {{"step", r.step}, {"lr", r.lr}, {"loss", r.loss}, {"acc", r.acc}};
}

namespace {

double batch_accuracy(const Tensor& logits, std::span<const int> labels) {
  const std::int64_t k = logits.dim(-1);
  const auto d = logits.data();
  std::int64_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = d.subspan(i * static_cast<std::size_t>(k), static_cast<std::size_t>(k));
    const auto best = std::max_element(row.begin(), row.end()) - row.begin();
    if (best == labels[i]) ++correct;
  }
  return labels.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(labels.size());
}

void shuffle(std::vector<std::int64_t>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(rng.below(i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace

TrainResult train(Model& model, const ToyDataset& data, const TrainOptions& options) {
  if (options.steps < 0 || options.batch_size <= 0) throw std::invalid_argument("train: bad steps or batch size");
  if (data.size() == 0) throw std::invalid_argument("train: empty dataset");
  if (data.num_classes > model.config.num_classes) {
    throw ConfigError("train: dataset has " + std::to_string(data.num_classes) + " classes, model head has " +
                      std::to_string(model.config.num_classes));
  }
  std::ofstream log;
  if (!options.log_path.empty()) {
    log.open(options.log_path, std::ios::trunc);
    if (!log) throw IoError("cannot open '" + options.log_path + "' for writing");
  }

  Rng data_rng = Rng::stream(options.seed, "data");
  Rng drop_rng = Rng::stream(options.seed, "droppath");
  const auto params = model.parameters();
  const std::int64_t warmup = options.resolved_warmup();

  TrainResult result;
  result.optim.hyper = options.adamw;
  std::vector<std::int64_t> order(static_cast<std::size_t>(data.size()));
  std::iota(order.begin(), order.end(), 0);
  std::size_t cursor = order.size();

  for (std::int64_t step = 0; step < options.steps; ++step) {
    std::vector<std::int64_t> batch;
    while (static_cast<std::int64_t>(batch.size()) < options.batch_size) {
      if (cursor == order.size()) {
        shuffle(order, data_rng);
        cursor = 0;
      }
      batch.push_back(order[cursor++]);
    }
    const Tensor images = gather_images(data, batch);
    const auto labels = gather_labels(data, batch);
    const double lr = lr_at(step, options.steps, warmup, options.adamw.lr);

    std::vector<std::vector<double>> snapshot;
    snapshot.reserve(params.size());
    for (const auto& p : params) snapshot.emplace_back(p.tensor.data().begin(), p.tensor.data().end());

    model.zero_grad();
    const Tensor logits = forward(model, images, true, &drop_rng);
    const Tensor loss = smoothed_cross_entropy(logits, labels, options.label_smoothing);
    StepRecord rec{step, lr, loss.item(), batch_accuracy(logits, labels)};
    try {
      if (!std::isfinite(rec.loss)) throw NumericalError("non-finite loss");
      loss.backward();
      if (options.clip_grad_norm > 0.0) clip_grad_norm(params, options.clip_grad_norm);
      adamw_step(params, result.optim, lr);
      for (const auto& p : params) {
        for (double v : p.tensor.data()) {
          if (!std::isfinite(v)) throw NumericalError("non-finite parameter in '" + p.name + "'");
        }
      }
    } catch (const NumericalError& e) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor t = params[i].tensor;
        auto dst = t.mutable_data();
        std::copy(snapshot[i].begin(), snapshot[i].end(), dst.begin());
      }
      std::string where;
      if (!options.divergence_checkpoint.empty()) {
        save_checkpoint(options.divergence_checkpoint, model);
        where = "; last good parameters saved to '" + options.divergence_checkpoint + "'";
      }
      throw DivergenceError("training diverged at step " + std::to_string(step) + ": " + e.what() + where, step);
    }
    result.log.push_back(rec);
    if (log) log << step_record_to_json(rec).dump() << '\n';
    if (options.on_step) options.on_step(rec);
  }
  return result;
}

double evaluate(const Model& model, const ToyDataset& data, std::int64_t batch_size) {
  NoGradGuard no_grad;
  std::int64_t correct = 0;
  for (std::int64_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::int64_t> idx;
    for (std::int64_t i = start; i < std::min(data.size(), start + batch_size); ++i) idx.push_back(i);
    const auto labels = gather_labels(data, idx);
    const Tensor logits = forward(model, gather_images(data, idx), false);
    correct += std::llround(batch_accuracy(logits, labels) * static_cast<double>(idx.size()));
  }
  return data.size() == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(data.size());
}

double patch_mean_baseline(const ToyDataset& train_set, const ToyDataset& test_set, std::int64_t patch,
                           std::int64_t iterations) {
  const Tensor xtr = patch_means(train_set.images, patch);
  const Tensor xte = patch_means(test_set.images, patch);
  const std::int64_t n = xtr.dim(0), f = xtr.dim(1), k = train_set.num_classes;
  std::vector<double> mu(static_cast<std::size_t>(f), 0.0), sd(static_cast<std::size_t>(f), 0.0);
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < f; ++j) mu[j] += xtr.data()[i * f + j] / static_cast<double>(n);
  }
  for (std::int64_t i = 0; i < n; ++i) {
    for (std::int64_t j = 0; j < f; ++j) {
      const double c = xtr.data()[i * f + j] - mu[j];
      sd[j] += c * c / static_cast<double>(n);
    }
  }
  for (auto& s : sd) s = std::sqrt(s) + 1e-12;
  auto feat = [&](const Tensor& x, std::int64_t i, std::int64_t j) { return (x.data()[i * f + j] - mu[j]) / sd[j]; };

  std::vector<double> w(static_cast<std::size_t>(f * k), 0.0), b(static_cast<std::size_t>(k), 0.0);
  std::vector<double> logits(static_cast<std::size_t>(k));
  auto predict = [&](const Tensor& x, std::int64_t i) {
    for (std::int64_t c = 0; c < k; ++c) {
      double z = b[c];
      for (std::int64_t j = 0; j < f; ++j) z += feat(x, i, j) * w[j * k + c];
      logits[c] = z;
    }
  };
  const double step = 0.5;
  for (std::int64_t it = 0; it < iterations; ++it) {
    std::vector<double> gw(w.size(), 0.0), gb(b.size(), 0.0);
    for (std::int64_t i = 0; i < n; ++i) {
      predict(xtr, i);
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (auto& v : logits) z += (v = std::exp(v - mx));
      for (std::int64_t c = 0; c < k; ++c) {
        const double g = (logits[c] / z - (train_set.labels[i] == c ? 1.0 : 0.0)) / static_cast<double>(n);
        gb[c] += g;
        for (std::int64_t j = 0; j < f; ++j) gw[j * k + c] += g * feat(xtr, i, j);
      }
    }
    for (std::size_t q = 0; q < w.size(); ++q) w[q] -= step * gw[q];
    for (std::size_t q = 0; q < b.size(); ++q) b[q] -= step * gb[q];
  }
  std::int64_t correct = 0;
  for (std::int64_t i = 0; i < xte.dim(0); ++i) {
    predict(xte, i);
    if (std::max_element(logits.begin(), logits.end()) - logits.begin() == test_set.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(xte.dim(0));
}

}  // namespace tnt
