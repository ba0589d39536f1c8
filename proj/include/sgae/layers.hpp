#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "sgae/rng.hpp"
#include "sgae/tensor.hpp"

namespace sgae {

/// Which learning-rate track a parameter follows.
enum class ParamGroup { main, dictionary };

struct NamedParameter {
  std::string name;
  Tensor tensor;
  ParamGroup group = ParamGroup::main;
};

using ParameterList = std::vector<NamedParameter>;

/// Gaussian(0, 1/fan_in) weights.
inline Tensor gaussian_weight(SeededRng& rng, std::size_t rows, std::size_t cols, std::size_t fan_in) {
  const double stddev = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(rows * cols);
  for (auto& v : values) v = rng.normal(0.0, stddev);
  return Tensor({rows, cols}, std::move(values), true);
}

/// Fully connected layer y = W x + b.
struct Linear {
  Tensor weight;  // [out x in]
  Tensor bias;    // [out]

  static Linear init(SeededRng& rng, std::size_t in, std::size_t out) {
    return {gaussian_weight(rng, out, in, in), Tensor::zeros({out}, true)};
  }

  std::size_t in_features() const { return weight.dim(1); }
  std::size_t out_features() const { return weight.dim(0); }

  Tensor operator()(const Tensor& x) const {
    if (x.rank() != 1 || x.numel() != in_features()) {
      throw DimensionError("linear: expected input of length " + std::to_string(in_features()) + ", got " +
                           shape_str(x.shape()));
    }
    return add(matmul(weight, x), bias);
  }

  void collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

/// The fc-ReLU block used by every graph convolution function.
inline Tensor fc_relu(const Linear& layer, const Tensor& x) { return relu(layer(x)); }

/// Standard LSTM cell, gate order (input, forget, candidate, output):
///   i = s(W_i x + U_i h + b_i)   f = s(W_f x + U_f h + b_f)
///   g = tanh(W_g x + U_g h + b_g) o = s(W_o x + U_o h + b_o)
///   c' = f * c + i * g           h' = o * tanh(c')
/// Forget-gate bias starts at 1, the rest at 0.
struct LstmCell {
  Tensor input_weight;   // [4h x in]
  Tensor hidden_weight;  // [4h x h]
  Tensor bias;           // [4h]

  static LstmCell init(SeededRng& rng, std::size_t in, std::size_t hidden) {
    LstmCell cell;
    cell.input_weight = gaussian_weight(rng, 4 * hidden, in, in);
    cell.hidden_weight = gaussian_weight(rng, 4 * hidden, hidden, hidden);
    std::vector<double> b(4 * hidden, 0.0);
    for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;
    cell.bias = Tensor({4 * hidden}, std::move(b), true);
    return cell;
  }

  std::size_t input_size() const { return input_weight.dim(1); }
  std::size_t hidden_size() const { return hidden_weight.dim(1); }

  /// Returns (h', c').
  std::pair<Tensor, Tensor> operator()(const Tensor& x, const Tensor& h, const Tensor& c) const {
    if (x.numel() != input_size()) {
      throw DimensionError("lstm: input length " + std::to_string(x.numel()) + " != " +
                           std::to_string(input_size()));
    }
    const std::size_t n = hidden_size();
    Tensor gates = add(add(matmul(input_weight, x), matmul(hidden_weight, h)), bias);
    auto parts = split(gates, {n, n, n, n});
    Tensor i = sigmoid(parts[0]);
    Tensor f = sigmoid(parts[1]);
    Tensor g = tanh(parts[2]);
    Tensor o = sigmoid(parts[3]);
    Tensor c_next = add(mul(f, c), mul(i, g));
    Tensor h_next = mul(o, tanh(c_next));
    return {h_next, c_next};
  }

  void collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".input_weight", input_weight});
    out.push_back({prefix + ".hidden_weight", hidden_weight});
    out.push_back({prefix + ".bias", bias});
  }
};

inline std::vector<Tensor> tensors_of(const ParameterList& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& p : params) out.push_back(p.tensor);
  return out;
}

inline void zero_grads(const ParameterList& params) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
}

}  // namespace sgae
