#pragma once

// Sentence scene-graph encoder: label embeddings W_sym (d x |symbols|) followed
// by the graph convolution in graph_conv.hpp with its own g_r, g_a, g_s, g_o.

#include <cstddef>
#include <string>
#include <vector>

#include "sgae/graph_conv.hpp"

namespace sgae {

struct GcnParams {
  Tensor symbol_embedding;  // [d x |symbols|]
  GraphConvLayers layers;

  static GcnParams init(SeededRng& rng, std::size_t dim, std::size_t symbols) {
    GcnParams p;
    p.symbol_embedding = gaussian_weight(rng, dim, symbols, dim);
    p.layers = GraphConvLayers::init(rng, dim);
    return p;
  }

  std::size_t dim() const { return symbol_embedding.dim(0); }
  std::size_t symbols() const { return symbol_embedding.dim(1); }

  void collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".symbol_embedding", symbol_embedding});
    layers.collect(out, prefix, "g");
  }
};

using GcnOutput = GraphEmbeddings;

inline Tensor embed_label(const GcnParams& params, std::size_t label) {
  return column(params.symbol_embedding, label);
}

inline Tensor relationship_embedding(const GcnParams& params, const Tensor& subject, const Tensor& relation,
                                     const Tensor& object) {
  return relation_context(params.layers, subject, relation, object);
}

inline Tensor attribute_embedding(const GcnParams& params, const Tensor& owner, const std::vector<Tensor>& attributes) {
  return attribute_context(params.layers, owner, attributes);
}

inline NodeEmbeddings label_embeddings(const Tensor& table, const SceneGraph& graph) {
  NodeEmbeddings nodes;
  for (const auto& o : graph.objects) {
    nodes.objects.push_back(column(table, o.label));
    std::vector<Tensor> attrs;
    for (auto a : o.attributes) attrs.push_back(column(table, a));
    nodes.attributes.push_back(std::move(attrs));
  }
  for (const auto& r : graph.relationships) nodes.relations.push_back(column(table, r.predicate));
  return nodes;
}

inline Tensor object_embedding(const GcnParams& params, const SceneGraph& graph, std::size_t i,
                               const NodeEmbeddings& nodes) {
  return object_context(params.layers, graph, build_adjacency(graph), i, nodes);
}

inline GcnOutput gcn_forward(const GcnParams& params, const SceneGraph& graph) {
  if (graph.objects.empty()) throw ContractError("gcn_forward: graph has no objects");
  return graph_convolve(params.layers, graph, label_embeddings(params.symbol_embedding, graph));
}

}  // namespace sgae
