#pragma once

// Learnable dictionary D = [d_1 ... d_K] (d x K) and its re-encoder
//
//   alpha = softmax(D^T x),   x_hat = D alpha = sum_k alpha_k d_k
//
// No temperature and no atom normalisation: atom norms alone set the
// sharpness of alpha.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <vector>

#include "sgae/layers.hpp"

namespace sgae {

struct DictionaryMemory {
  Tensor atoms;  // [d x K], column k is atom d_k

  std::size_t dim() const { return atoms.dim(0); }
  std::size_t size() const { return atoms.dim(1); }

  void collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".D", atoms, ParamGroup::dictionary});
  }
};

/// Atoms drawn i.i.d. from Gaussian(0, scale^2); scale defaults to 1/sqrt(d).
inline DictionaryMemory init_dictionary(SeededRng& rng, std::size_t dim, std::size_t atoms,
                                        std::optional<double> scale = std::nullopt) {
  if (dim == 0 || atoms == 0) throw ContractError("init_dictionary: d and K must be positive");
  const double s = scale.value_or(1.0 / std::sqrt(static_cast<double>(dim)));
  std::vector<double> values(dim * atoms);
  for (auto& v : values) v = rng.normal(0.0, s);
  return {Tensor({dim, atoms}, std::move(values), true)};
}

struct Reencoded {
  Tensor value;    // x_hat [d]
  Tensor weights;  // alpha [K]
};

inline Reencoded reencode(const DictionaryMemory& dict, const Tensor& x) {
  if (x.rank() != 1 || x.numel() != dict.dim()) {
    throw DimensionError("reencode: input of shape " + shape_str(x.shape()) + " does not match dictionary dim " +
                         std::to_string(dict.dim()));
  }
  Tensor alpha = softmax(matmul(transpose(dict.atoms), x));
  return {matmul(dict.atoms, alpha), alpha};
}

inline std::vector<Tensor> reencode_all(const DictionaryMemory& dict, const std::vector<Tensor>& xs) {
  if (xs.empty()) return {};
  // One transpose shared across the batch.
  Tensor keys = transpose(dict.atoms);
  std::vector<Tensor> out;
  out.reserve(xs.size());
  for (const auto& x : xs) {
    if (x.rank() != 1 || x.numel() != dict.dim()) {
      throw DimensionError("reencode: input of shape " + shape_str(x.shape()) + " does not match dictionary dim " +
                           std::to_string(dict.dim()));
    }
    out.push_back(matmul(dict.atoms, softmax(matmul(keys, x))));
  }
  return out;
}

struct AtomNormStats {
  double min = 0.0;
  double mean = 0.0;
  double max = 0.0;
};

inline AtomNormStats atom_norm_stats(const DictionaryMemory& dict) {
  const std::size_t d = dict.dim(), k = dict.size();
  std::vector<double> norms(k, 0.0);
  auto a = dict.atoms.data();
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < k; ++j) norms[j] += a[i * k + j] * a[i * k + j];
  AtomNormStats s;
  for (auto& n : norms) n = std::sqrt(n);
  s.min = *std::min_element(norms.begin(), norms.end());
  s.max = *std::max_element(norms.begin(), norms.end());
  for (double n : norms) s.mean += n / static_cast<double>(k);
  return s;
}

}  // namespace sgae
