#pragma once

// Small generated corpora for desk-scale runs and tests. Each record has a
// chain-shaped scene graph of two or three objects, and its sentence is a
// deterministic rendering of that graph ("a red dog near a wooden table"), so a
// model can in principle reconstruct the sentence from the graph alone. Image
// graphs copy the sentence graph's structure and attach Gaussian RoI features.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "sgae/corpus.hpp"
#include "sgae/rng.hpp"

namespace sgae {

struct SyntheticOptions {
  std::size_t records = 32;
  std::size_t feature_dim = 16;
  bool sentence_graphs = true;
  bool image_graphs = true;
  std::uint64_t seed = 7;
};

inline std::vector<RawRecord> synthetic_corpus(const SyntheticOptions& options) {
  static const std::vector<std::string> kObjects = {"man", "woman", "dog", "horse", "bike", "car", "table", "ball"};
  static const std::vector<std::string> kAttributes = {"red", "young", "small", "white", "black", "wooden"};
  static const std::vector<std::string> kPredicates = {"riding", "near", "on", "holding", "behind"};

  SeededRng rng(options.seed);
  auto feature = [&] {
    Feature f(options.feature_dim);
    for (auto& v : f) v = rng.normal();
    return f;
  };

  std::vector<RawRecord> out;
  for (std::size_t n = 0; n < options.records; ++n) {
    RawSceneGraph g;
    const std::size_t objects = 2 + rng.index(2);
    for (std::size_t i = 0; i < objects; ++i) {
      RawObject o;
      o.label = kObjects[rng.index(kObjects.size())];
      if (rng.uniform() < 0.5) o.attributes.push_back(kAttributes[rng.index(kAttributes.size())]);
      g.objects.push_back(std::move(o));
    }
    for (std::size_t i = 0; i + 1 < objects; ++i) {
      g.relationships.push_back({i, i + 1, kPredicates[rng.index(kPredicates.size())], std::nullopt});
    }

    RawRecord rec;
    rec.id = "syn" + std::to_string(n);
    rec.line = n + 1;
    for (std::size_t i = 0; i < objects; ++i) {
      rec.sentence.push_back("a");
      for (const auto& a : g.objects[i].attributes) rec.sentence.push_back(a);
      rec.sentence.push_back(g.objects[i].label);
      if (i < g.relationships.size()) rec.sentence.push_back(g.relationships[i].predicate);
    }
    if (options.image_graphs) {
      RawSceneGraph image = g;
      for (auto& o : image.objects) o.feature = feature();
      for (auto& r : image.relationships) r.feature = feature();
      rec.image_graph = std::move(image);
    }
    if (options.sentence_graphs) rec.sentence_graph = std::move(g);
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace sgae
