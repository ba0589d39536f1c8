#pragma once

// Adam with bias correction, step-decay schedule and global-norm clipping.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sgae/errors.hpp"
#include "sgae/tensor.hpp"

namespace sgae {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  AdamConfig config;
  std::vector<std::vector<double>> first;   // m, one buffer per parameter
  std::vector<std::vector<double>> second;  // v
  std::size_t step = 0;

  static AdamState for_params(const std::vector<Tensor>& params, AdamConfig config = {}) {
    AdamState s;
    s.config = config;
    for (const auto& p : params) {
      s.first.emplace_back(p.numel(), 0.0);
      s.second.emplace_back(p.numel(), 0.0);
    }
    return s;
  }
};

/// One bias-corrected Adam step using explicit gradients.
inline void adam_update(AdamState& state, std::vector<Tensor>& params, const std::vector<std::span<const double>>& grads,
                        double lr) {
  if (params.size() != state.first.size() || grads.size() != params.size()) {
    throw DimensionError("adam_update: parameter, gradient and state counts differ");
  }
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].numel() != state.first[k].size()) throw DimensionError("adam_update: state shape mismatch");
    if (!grads[k].empty() && grads[k].size() != params[k].numel()) {
      throw DimensionError("adam_update: gradient shape mismatch for parameter " + std::to_string(k));
    }
  }
  ++state.step;
  const auto& c = state.config;
  const double t = static_cast<double>(state.step);
  const double correct1 = 1.0 - std::pow(c.beta1, t);
  const double correct2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto values = params[k].data();
    auto& m = state.first[k];
    auto& v = state.second[k];
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grads[k].empty() ? 0.0 : grads[k][i];
      m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g;
      v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g * g;
      if (lr == 0.0) continue;
      const double m_hat = m[i] / correct1;
      const double v_hat = v[i] / correct2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + c.eps);
    }
  }
}

/// Adam step reading each parameter's accumulated gradient (absent grads count as zero).
inline void adam_update(AdamState& state, std::vector<Tensor>& params, double lr) {
  std::vector<std::span<const double>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) grads.push_back(p.grad());
  adam_update(state, params, grads, lr);
}

/// base * decay^floor(epoch / every)
inline double lr_at(double base, std::size_t epoch, double decay_factor = 0.8, std::size_t decay_every = 5) {
  if (decay_every == 0) throw ConfigError("lr_at: decay_every must be positive");
  double lr = base;
  for (std::size_t k = 0; k < epoch / decay_every; ++k) lr *= decay_factor;
  return lr;
}

inline double global_grad_norm(const std::vector<Tensor>& params) {
  double total = 0.0;
  for (const auto& p : params)
    for (double g : p.grad()) total += g * g;
  return std::sqrt(total);
}

/// Rescales all gradients so their joint L2 norm is at most max_norm. Returns the norm before clipping.
inline double clip_grad_norm(std::vector<Tensor>& params, double max_norm) {
  const double norm = global_grad_norm(params);
  if (max_norm > 0.0 && norm > max_norm) {
    const double factor = max_norm / norm;
    for (auto& p : params) {
      if (!p.has_grad()) continue;
      for (auto& g : p.mutable_grad()) g *= factor;
    }
  }
  return norm;
}

}  // namespace sgae
