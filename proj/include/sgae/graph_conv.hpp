#pragma once

// Spatial graph convolution shared by the sentence GCN and the multi-modal GCN.
// Given per-node input vectors (label embeddings for the GCN, fused embeddings
// for the MGCN) and four fc-ReLU functions, computes
//
//   relationship   x_r(ij) = f_r([n_oi, n_rij, n_oj])
//   attribute      x_a(i)  = 1/Na_i * sum_l f_a([n_oi, n_a(i,l)])                (Na_i >= 1)
//   object         x_o(i)  = 1/Nr_i * ( sum_{r_ij: o_i subject} f_s([n_oi, n_oj, n_rij])
//                                     + sum_{r_ki: o_i object } f_o([n_ok, n_oi, n_rki]) )
//
// Objects in no relationship (Nr_i = 0) pass their input vector through
// unchanged. Objects without attributes contribute no attribute embedding.
// A self-loop relationship counts once as subject and once as object.

#include <cstddef>
#include <string>
#include <vector>

#include "sgae/layers.hpp"
#include "sgae/scene_graph.hpp"

namespace sgae {

/// Per-node input vectors; attributes[i] holds the vectors of object i's attributes.
struct NodeEmbeddings {
  std::vector<Tensor> objects;
  std::vector<Tensor> relations;
  std::vector<std::vector<Tensor>> attributes;
};

/// The four convolution functions: relation (3d->d), attribute (2d->d),
/// subject and object roles (3d->d each).
struct GraphConvLayers {
  Linear relation;
  Linear attribute;
  Linear subject;
  Linear object;

  static GraphConvLayers init(SeededRng& rng, std::size_t dim) {
    GraphConvLayers l;
    l.relation = Linear::init(rng, 3 * dim, dim);
    l.attribute = Linear::init(rng, 2 * dim, dim);
    l.subject = Linear::init(rng, 3 * dim, dim);
    l.object = Linear::init(rng, 3 * dim, dim);
    return l;
  }

  void collect(ParameterList& out, const std::string& prefix, const std::string& letter) const {
    // letter "g" yields g_r, g_a, g_s, g_o
    relation.collect(out, prefix + "." + letter + "_r");
    attribute.collect(out, prefix + "." + letter + "_a");
    subject.collect(out, prefix + "." + letter + "_s");
    object.collect(out, prefix + "." + letter + "_o");
  }
};

/// Context-aware embeddings. Flattened order: all objects by index, then all
/// relationships by index, then attribute embeddings by owning object index.
struct GraphEmbeddings {
  std::vector<Tensor> objects;
  std::vector<Tensor> relations;
  std::vector<Tensor> attributes;
  std::vector<std::size_t> attribute_owner;

  std::size_t size() const { return objects.size() + relations.size() + attributes.size(); }

  std::vector<Tensor> flatten() const {
    std::vector<Tensor> out;
    out.reserve(size());
    out.insert(out.end(), objects.begin(), objects.end());
    out.insert(out.end(), relations.begin(), relations.end());
    out.insert(out.end(), attributes.begin(), attributes.end());
    return out;
  }
};

inline Tensor relation_context(const GraphConvLayers& layers, const Tensor& subject, const Tensor& relation,
                               const Tensor& object) {
  return fc_relu(layers.relation, concat({subject, relation, object}));
}

inline Tensor attribute_context(const GraphConvLayers& layers, const Tensor& owner,
                                const std::vector<Tensor>& attributes) {
  if (attributes.empty()) throw ContractError("attribute embedding needs at least one attribute");
  std::vector<Tensor> terms;
  terms.reserve(attributes.size());
  for (const auto& a : attributes) terms.push_back(fc_relu(layers.attribute, concat({owner, a})));
  return mean_rows(terms);
}

inline Tensor object_context(const GraphConvLayers& layers, const SceneGraph& graph, const Adjacency& adjacency,
                             std::size_t i, const NodeEmbeddings& nodes) {
  if (i >= graph.objects.size()) throw DimensionError("object index out of range");
  if (adjacency.degree(i) == 0) return nodes.objects[i];
  std::vector<Tensor> terms;
  for (auto r : adjacency.as_subject[i]) {
    const auto& rel = graph.relationships[r];
    terms.push_back(fc_relu(layers.subject, concat({nodes.objects[i], nodes.objects[rel.object], nodes.relations[r]})));
  }
  for (auto r : adjacency.as_object[i]) {
    const auto& rel = graph.relationships[r];
    terms.push_back(fc_relu(layers.object, concat({nodes.objects[rel.subject], nodes.objects[i], nodes.relations[r]})));
  }
  return mean_rows(terms);
}

inline GraphEmbeddings graph_convolve(const GraphConvLayers& layers, const SceneGraph& graph,
                                      const NodeEmbeddings& nodes) {
  if (graph.objects.empty()) throw ContractError("graph convolution on a graph with no objects");
  const Adjacency adjacency = build_adjacency(graph);
  GraphEmbeddings out;
  for (std::size_t i = 0; i < graph.objects.size(); ++i) {
    out.objects.push_back(object_context(layers, graph, adjacency, i, nodes));
  }
  for (std::size_t r = 0; r < graph.relationships.size(); ++r) {
    const auto& rel = graph.relationships[r];
    out.relations.push_back(
        relation_context(layers, nodes.objects[rel.subject], nodes.relations[r], nodes.objects[rel.object]));
  }
  for (std::size_t i = 0; i < graph.objects.size(); ++i) {
    if (nodes.attributes[i].empty()) continue;
    out.attributes.push_back(attribute_context(layers, nodes.objects[i], nodes.attributes[i]));
    out.attribute_owner.push_back(i);
  }
  return out;
}

}  // namespace sgae
