#pragma once

// Scene graphs over symbol ids. Three node kinds: objects, their attributes, and
// relationships. Edges are implied by structure rather than stored:
//   object o_i owning attribute a_{i,l}      ->  o_i -> a_{i,l}
//   relationship <o_i - r_ij - o_j>          ->  o_i -> r_ij,  r_ij -> o_j
// Self-loop relationships and duplicate relationships between the same pair are
// legal; each relationship is its own node. An object may list the same
// attribute more than once.

#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

namespace sgae {

using Feature = std::vector<double>;

struct ObjectNode {
  std::size_t label = 0;
  std::vector<std::size_t> attributes;
  std::optional<Feature> feature;

  bool operator==(const ObjectNode&) const = default;
};

struct RelationshipEdge {
  std::size_t subject = 0;
  std::size_t object = 0;
  std::size_t predicate = 0;
  std::optional<Feature> feature;

  bool operator==(const RelationshipEdge&) const = default;
};

struct SceneGraph {
  std::vector<ObjectNode> objects;
  std::vector<RelationshipEdge> relationships;

  std::size_t attribute_count() const {
    std::size_t n = 0;
    for (const auto& o : objects) n += o.attributes.size();
    return n;
  }
  std::size_t attributed_object_count() const {
    std::size_t n = 0;
    for (const auto& o : objects) n += o.attributes.empty() ? 0 : 1;
    return n;
  }

  bool operator==(const SceneGraph&) const = default;
};

enum class NodeKind { object, attribute, relationship };

/// Attribute nodes are addressed by (owning object, position in its list).
struct NodeRef {
  NodeKind kind = NodeKind::object;
  std::size_t index = 0;
  std::size_t slot = 0;

  auto operator<=>(const NodeRef&) const = default;
};

struct DirectedEdge {
  NodeRef from;
  NodeRef to;

  auto operator<=>(const DirectedEdge&) const = default;
};

inline std::vector<DirectedEdge> derive_edges(const SceneGraph& graph) {
  std::vector<DirectedEdge> edges;
  for (std::size_t i = 0; i < graph.objects.size(); ++i) {
    for (std::size_t l = 0; l < graph.objects[i].attributes.size(); ++l) {
      edges.push_back({{NodeKind::object, i, 0}, {NodeKind::attribute, i, l}});
    }
  }
  for (std::size_t r = 0; r < graph.relationships.size(); ++r) {
    const auto& rel = graph.relationships[r];
    edges.push_back({{NodeKind::object, rel.subject, 0}, {NodeKind::relationship, r, 0}});
    edges.push_back({{NodeKind::relationship, r, 0}, {NodeKind::object, rel.object, 0}});
  }
  return edges;
}

/// Per-object relationship incidence. as_subject[i] lists relationships
/// <o_i - r - o_j> (so o_j is in sbj(o_i)); as_object[i] lists <o_k - r - o_i>.
struct Adjacency {
  std::vector<std::vector<std::size_t>> as_subject;
  std::vector<std::vector<std::size_t>> as_object;

  std::size_t degree(std::size_t object) const {
    return as_subject[object].size() + as_object[object].size();
  }
};

inline Adjacency build_adjacency(const SceneGraph& graph) {
  Adjacency adj;
  adj.as_subject.resize(graph.objects.size());
  adj.as_object.resize(graph.objects.size());
  for (std::size_t r = 0; r < graph.relationships.size(); ++r) {
    adj.as_subject.at(graph.relationships[r].subject).push_back(r);
    adj.as_object.at(graph.relationships[r].object).push_back(r);
  }
  return adj;
}

struct ValidationLimits {
  std::size_t symbol_count = 0;  // exclusive upper bound for every label id
  std::size_t feature_dim = 2048;
  bool require_features = false;
};

struct Violation {
  std::string message;

  bool operator==(const Violation&) const = default;
};

/// Collects every violation rather than stopping at the first.
inline std::vector<Violation> validate(const SceneGraph& graph, const ValidationLimits& limits) {
  std::vector<Violation> out;
  auto check_label = [&](std::size_t id, const std::string& where) {
    if (id >= limits.symbol_count) {
      out.push_back({where + ": symbol id " + std::to_string(id) + " outside vocabulary of size " +
                     std::to_string(limits.symbol_count)});
    }
  };
  auto check_feature = [&](const std::optional<Feature>& f, const std::string& where) {
    if (!f) {
      if (limits.require_features) out.push_back({where + ": missing RoI feature"});
      return;
    }
    if (f->size() != limits.feature_dim) {
      out.push_back({where + ": feature length " + std::to_string(f->size()) + " != configured dimension " +
                     std::to_string(limits.feature_dim)});
    }
  };

  if (graph.objects.empty()) out.push_back({"graph has no objects"});
  for (std::size_t i = 0; i < graph.objects.size(); ++i) {
    const auto& o = graph.objects[i];
    const std::string where = "object " + std::to_string(i);
    check_label(o.label, where);
    for (std::size_t l = 0; l < o.attributes.size(); ++l) {
      check_label(o.attributes[l], where + " attribute " + std::to_string(l));
    }
    check_feature(o.feature, where);
  }
  const std::size_t n = graph.objects.size();
  for (std::size_t r = 0; r < graph.relationships.size(); ++r) {
    const auto& rel = graph.relationships[r];
    const std::string where = "relationship " + std::to_string(r);
    if (rel.subject >= n || rel.object >= n) {
      out.push_back({where + ": subject/object index out of range (subject " + std::to_string(rel.subject) +
                     ", object " + std::to_string(rel.object) + ", " + std::to_string(n) + " objects)"});
    }
    check_label(rel.predicate, where);
    check_feature(rel.feature, where);
  }
  return out;
}

}  // namespace sgae
