#pragma once

// Multi-modal scene-graph encoder. Each node's label embedding e is fused with
// a visual feature v before the graph convolution:
//
//   u = ReLU(W1 e + W2 v) - (W1 e - W2 v)^2        (square taken elementwise)
//
// Objects fuse with their own RoI feature, relationships with the relationship
// RoI feature, and attributes with the RoI feature of the object that owns
// them. Each node kind has its own (W1, W2) pair. The fused vectors then go
// through the same convolution skeleton as the sentence encoder, with its own
// f_r, f_a, f_s, f_o.

#include <cstddef>
#include <string>
#include <vector>

#include "sgae/dictionary.hpp"
#include "sgae/graph_conv.hpp"

namespace sgae {

struct FusionPair {
  Tensor label_weight;    // W1 [d x d]
  Tensor feature_weight;  // W2 [d x feat]

  static FusionPair init(SeededRng& rng, std::size_t dim, std::size_t feature_dim) {
    return {gaussian_weight(rng, dim, dim, dim), gaussian_weight(rng, dim, feature_dim, feature_dim)};
  }

  void collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".w1", label_weight});
    out.push_back({prefix + ".w2", feature_weight});
  }
};

inline Tensor fuse(const Tensor& label_weight, const Tensor& feature_weight, const Tensor& label,
                   const Tensor& feature) {
  if (label_weight.rank() != 2 || feature_weight.rank() != 2 || label_weight.dim(0) != feature_weight.dim(0)) {
    throw DimensionError("fuse: W1 and W2 must be matrices with equal row counts");
  }
  Tensor a = matmul(label_weight, label);
  Tensor b = matmul(feature_weight, feature);
  return sub(relu(add(a, b)), square(sub(a, b)));
}

inline Tensor fuse(const FusionPair& pair, const Tensor& label, const Tensor& feature) {
  return fuse(pair.label_weight, pair.feature_weight, label, feature);
}

struct MgcnParams {
  Tensor symbol_embedding;  // [d x |image symbols|]
  FusionPair object_fusion;
  FusionPair relation_fusion;
  FusionPair attribute_fusion;
  GraphConvLayers layers;

  static MgcnParams init(SeededRng& rng, std::size_t dim, std::size_t symbols, std::size_t feature_dim) {
    MgcnParams p;
    p.symbol_embedding = gaussian_weight(rng, dim, symbols, dim);
    p.object_fusion = FusionPair::init(rng, dim, feature_dim);
    p.relation_fusion = FusionPair::init(rng, dim, feature_dim);
    p.attribute_fusion = FusionPair::init(rng, dim, feature_dim);
    p.layers = GraphConvLayers::init(rng, dim);
    return p;
  }

  std::size_t dim() const { return symbol_embedding.dim(0); }
  std::size_t symbols() const { return symbol_embedding.dim(1); }
  std::size_t feature_dim() const { return object_fusion.feature_weight.dim(1); }

  void collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".symbol_embedding", symbol_embedding});
    object_fusion.collect(out, prefix + ".fuse_o");
    relation_fusion.collect(out, prefix + ".fuse_r");
    attribute_fusion.collect(out, prefix + ".fuse_a");
    layers.collect(out, prefix, "f");
  }
};

struct MgcnOutput {
  NodeEmbeddings fused;      // u_o, u_r, u_a
  GraphEmbeddings embedded;  // v'_o, v'_r, v'_a

  std::vector<Tensor> flatten() const { return embedded.flatten(); }
};

namespace detail {

inline Tensor feature_tensor(const std::optional<Feature>& f, std::size_t expected, const std::string& where) {
  if (!f) throw DataError("mgcn_forward: " + where + " has no RoI feature");
  if (f->size() != expected) {
    throw DimensionError("mgcn_forward: " + where + " feature length " + std::to_string(f->size()) + " != " +
                         std::to_string(expected));
  }
  return Tensor::vector(*f);
}

}  // namespace detail

inline NodeEmbeddings fuse_nodes(const MgcnParams& params, const SceneGraph& graph) {
  NodeEmbeddings u;
  const std::size_t fd = params.feature_dim();
  for (std::size_t i = 0; i < graph.objects.size(); ++i) {
    const auto& o = graph.objects[i];
    Tensor v = detail::feature_tensor(o.feature, fd, "object " + std::to_string(i));
    u.objects.push_back(fuse(params.object_fusion, column(params.symbol_embedding, o.label), v));
    std::vector<Tensor> attrs;
    for (auto a : o.attributes) attrs.push_back(fuse(params.attribute_fusion, column(params.symbol_embedding, a), v));
    u.attributes.push_back(std::move(attrs));
  }
  for (std::size_t r = 0; r < graph.relationships.size(); ++r) {
    const auto& rel = graph.relationships[r];
    Tensor v = detail::feature_tensor(rel.feature, fd, "relationship " + std::to_string(r));
    u.relations.push_back(fuse(params.relation_fusion, column(params.symbol_embedding, rel.predicate), v));
  }
  return u;
}

inline MgcnOutput mgcn_forward(const MgcnParams& params, const SceneGraph& graph) {
  if (graph.objects.empty()) throw ContractError("mgcn_forward: graph has no objects");
  MgcnOutput out;
  out.fused = fuse_nodes(params, graph);
  out.embedded = graph_convolve(params.layers, graph, out.fused);
  return out;
}

/// Applies the dictionary re-encoder to every member of V', keeping order.
inline std::vector<Tensor> reencode_visual(const DictionaryMemory& dict, const std::vector<Tensor>& embedded) {
  return reencode_all(dict, embedded);
}

}  // namespace sgae
