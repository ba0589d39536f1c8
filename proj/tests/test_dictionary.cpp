#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "sgae/dictionary.hpp"
#include "sgae/grad_check.hpp"
#include "test_util.hpp"

using namespace sgae;
using sgae::testing::random_tensor;

namespace {

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::vector<double> atom(const DictionaryMemory& dict, std::size_t k) {
  std::vector<double> out(dict.dim());
  for (std::size_t i = 0; i < dict.dim(); ++i) out[i] = dict.atoms.at(i, k);
  return out;
}

}  // namespace

TEST(Dictionary, SingleAtomIgnoresInput) {
  SeededRng rng(1);
  DictionaryMemory dict = init_dictionary(rng, 5, 1);
  for (int trial = 0; trial < 5; ++trial) {
    auto r = reencode(dict, random_tensor(rng, {5}, 10.0));
    EXPECT_EQ(r.weights.values(), (std::vector<double>{1.0}));
    for (std::size_t i = 0; i < 5; ++i) EXPECT_DOUBLE_EQ(r.value[i], dict.atoms[i]);
  }
}

TEST(Dictionary, IdentityAtomsAtOrigin) {
  DictionaryMemory dict{Tensor::matrix(2, 2, {1, 0, 0, 1})};
  auto r = reencode(dict, Tensor::zeros({2}));
  EXPECT_EQ(r.weights.values(), (std::vector<double>{0.5, 0.5}));
  EXPECT_EQ(r.value.values(), (std::vector<double>{0.5, 0.5}));
}

TEST(Dictionary, OrthonormalSaturation) {
  // Columns of a rotation matrix are orthonormal.
  const double c = std::cos(0.3), s = std::sin(0.3);
  std::vector<double> q = {c, -s, 0, s, c, 0, 0, 0, 1};
  DictionaryMemory dict{Tensor::matrix(3, 3, q)};
  for (std::size_t k = 0; k < 3; ++k) {
    auto d_k = atom(dict, k);
    std::vector<double> x(3);
    for (std::size_t i = 0; i < 3; ++i) x[i] = 100.0 * d_k[i];
    auto r = reencode(dict, Tensor::vector(x));
    EXPECT_NEAR(r.weights[k], 1.0, 1e-12);
    std::vector<double> diff(3);
    for (std::size_t i = 0; i < 3; ++i) diff[i] = r.value[i] - d_k[i];
    EXPECT_LE(norm(diff), 1e-6);
  }
}

TEST(Dictionary, InitIsSeeded) {
  SeededRng a(5), b(5);
  EXPECT_EQ(init_dictionary(a, 8, 16).atoms.values(), init_dictionary(b, 8, 16).atoms.values());
  EXPECT_THROW(init_dictionary(a, 0, 3), ContractError);
}

TEST(Dictionary, ZeroScaleGivesUniformWeights) {
  SeededRng rng(6);
  DictionaryMemory dict = init_dictionary(rng, 4, 7, 0.0);
  auto r = reencode(dict, random_tensor(rng, {4}));
  for (double a : r.weights.data()) EXPECT_DOUBLE_EQ(a, 1.0 / 7.0);
}

TEST(Dictionary, InitVarianceMatchesScale) {
  SeededRng rng(7);
  for (double scale : {0.25, 1.0 / std::sqrt(32.0)}) {
    DictionaryMemory dict = init_dictionary(rng, 32, 400, scale);
    double s = 0.0, s2 = 0.0;
    for (double v : dict.atoms.data()) {
      s += v;
      s2 += v * v;
    }
    const double n = static_cast<double>(dict.atoms.numel());
    const double var = s2 / n - (s / n) * (s / n);
    EXPECT_NEAR(var / (scale * scale), 1.0, 0.2);
  }
  DictionaryMemory dflt = init_dictionary(rng, 100, 100);
  double s2 = 0.0;
  for (double v : dflt.atoms.data()) s2 += v * v;
  EXPECT_NEAR(s2 / 1e4 / 0.01, 1.0, 0.2);
}

TEST(Dictionary, WeightsFormDistributionAndOutputInHull) {
  SeededRng rng(8);
  for (int trial = 0; trial < 200; ++trial) {
    DictionaryMemory dict = init_dictionary(rng, 6, 10, 1.0);
    Tensor x = random_tensor(rng, {6}, 3.0);
    auto r = reencode(dict, x);
    double total = 0.0;
    for (double a : r.weights.data()) {
      EXPECT_GT(a, 0.0);
      total += a;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
    double max_norm = 0.0;
    for (std::size_t k = 0; k < 10; ++k) max_norm = std::max(max_norm, norm(atom(dict, k)));
    EXPECT_LE(norm(r.value.data()), max_norm + 1e-9);
  }
}

TEST(Dictionary, ArgmaxInvariantUnderPositiveScaling) {
  SeededRng rng(9);
  for (int trial = 0; trial < 100; ++trial) {
    DictionaryMemory dict = init_dictionary(rng, 5, 12);
    Tensor x = random_tensor(rng, {5});
    auto argmax = [&](const Tensor& v) {
      auto w = reencode(dict, v).weights.values();
      return std::max_element(w.begin(), w.end()) - w.begin();
    };
    const auto base = argmax(x);
    for (double c : {0.5, 2.0, 10.0}) EXPECT_EQ(argmax(scale(x, c)), base);
  }
}

TEST(Dictionary, DimensionMismatch) {
  SeededRng rng(10);
  DictionaryMemory dict = init_dictionary(rng, 4, 3);
  EXPECT_THROW(reencode(dict, Tensor::zeros({5})), DimensionError);
  EXPECT_THROW(reencode(dict, Tensor::zeros({2, 2})), DimensionError);
}

TEST(Dictionary, GradientsWrtInputAndAtoms) {
  SeededRng rng(11);
  DictionaryMemory dict = init_dictionary(rng, 4, 6, 0.7);
  Tensor x = random_tensor(rng, {4});
  Tensor probe = random_tensor(rng, {4});
  auto report = finite_diff_check([&] { return dot(reencode(dict, x).value, probe); }, {x, dict.atoms});
  EXPECT_LE(report.max_rel_error, 1e-4);
}

TEST(Dictionary, SerializedName) {
  SeededRng rng(12);
  DictionaryMemory dict = init_dictionary(rng, 4, 3);
  ParameterList params;
  dict.collect(params, "dictionary");
  ASSERT_EQ(params.size(), 1u);
  EXPECT_EQ(params[0].name, "dictionary.D");
  EXPECT_EQ(params[0].group, ParamGroup::dictionary);
}

TEST(Dictionary, AtomNormStats) {
  DictionaryMemory dict{Tensor::matrix(2, 2, {3, 0, 4, 2})};
  auto s = atom_norm_stats(dict);
  EXPECT_DOUBLE_EQ(s.min, 2.0);
  EXPECT_DOUBLE_EQ(s.max, 5.0);
  EXPECT_DOUBLE_EQ(s.mean, 3.5);
}
