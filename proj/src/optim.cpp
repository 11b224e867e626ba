#include "tnt/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace tnt {

bool decays(ParamKind kind) { return kind == ParamKind::kWeight; }

void adamw_step(const std::vector<NamedParam>& params, OptimState& state, double lr) {
  if (state.moments.empty()) {
    for (const auto& p : params) {
      const auto n = static_cast<std::size_t>(p.tensor.numel());
      state.moments.push_back({p.name, std::vector<double>(n, 0.0), std::vector<double>(n, 0.0)});
    }
  }
  if (state.moments.size() != params.size()) {
    throw std::invalid_argument("optimizer state tracks " + std::to_string(state.moments.size()) +
                                " tensors, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (state.moments[i].name != p.name ||
        state.moments[i].m.size() != static_cast<std::size_t>(p.tensor.numel())) {
      throw std::invalid_argument("optimizer state does not match parameter '" + p.name + "'");
    }
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NumericalError("non-finite gradient in '" + p.name + "'; step aborted");
    }
  }

  const auto& h = state.hyper;
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(h.beta1, t);
  const double bc2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor theta = params[i].tensor;
    auto data = theta.mutable_data();
    auto grad = theta.grad();
    auto& mom = state.moments[i];
    const double wd = decays(params[i].kind) ? h.weight_decay : 0.0;
    for (std::size_t k = 0; k < data.size(); ++k) {
      const double g = grad.empty() ? 0.0 : grad[k];
      mom.m[k] = h.beta1 * mom.m[k] + (1.0 - h.beta1) * g;
      mom.v[k] = h.beta2 * mom.v[k] + (1.0 - h.beta2) * g * g;
      const double m_hat = mom.m[k] / bc1;
      const double v_hat = mom.v[k] / bc2;
      double update = wd * data[k];
      if (m_hat != 0.0) update += m_hat / (std::sqrt(v_hat) + h.eps);
      data[k] -= lr * update;
    }
  }
}

double grad_norm(const std::vector<NamedParam>& params) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

double clip_grad_norm(const std::vector<NamedParam>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double factor = max_norm / norm;
    for (const auto& p : params) {
      if (!p.tensor.has_grad()) continue;
      auto& g = p.tensor.impl()->grad;
      for (auto& v : g) v *= factor;
    }
  }
  return norm;
}

double lr_at(std::int64_t step, std::int64_t total_steps, std::int64_t warmup_steps, double lr_max) {
  if (step < 0) return 0.0;
  if (warmup_steps > 0 && step < warmup_steps) {
    return lr_max * static_cast<double>(step) / static_cast<double>(warmup_steps);
  }
  if (total_steps <= warmup_steps) return step >= total_steps ? 0.0 : lr_max;
  const double progress = std::clamp(static_cast<double>(step - warmup_steps) /
                                         static_cast<double>(total_steps - warmup_steps),
                                     0.0, 1.0);
  return 0.5 * lr_max * (1.0 + std::cos(std::numbers::pi * progress));
}

}  // namespace tnt
