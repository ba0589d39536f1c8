#pragma once

// JSON Lines corpus, one record per line:
//
//   {"id": "17",
//    "sentence": ["a", "man", "riding", "a", "bike"],
//    "sentence_graph": {"objects": [{"label": "man", "attributes": ["helmeted"]},
//                                   {"label": "bike", "attributes": []}],
//                       "relationships": [{"subject": 0, "predicate": "riding", "object": 1}]},
//    "image_graph": { same shape; objects and relationships may carry "feature": [floats] }}
//
// Every field except the object list inside a graph is optional. Labels are
// strings on disk and ids in memory. A record without "id" gets its 0-based
// position in the file.

#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "sgae/errors.hpp"
#include "sgae/scene_graph.hpp"
#include "sgae/vocabulary.hpp"

namespace sgae {

struct RawObject {
  std::string label;
  std::vector<std::string> attributes;
  std::optional<Feature> feature;
};

struct RawRelationship {
  std::size_t subject = 0;
  std::size_t object = 0;
  std::string predicate;
  std::optional<Feature> feature;
};

struct RawSceneGraph {
  std::vector<RawObject> objects;
  std::vector<RawRelationship> relationships;
};

struct RawRecord {
  std::string id;
  std::vector<std::string> sentence;
  std::optional<RawSceneGraph> sentence_graph;
  std::optional<RawSceneGraph> image_graph;
  std::size_t line = 0;  // 1-based line in the source file
};

struct CorpusConfig {
  std::size_t max_len = 16;
  std::size_t feature_dim = 2048;
  std::size_t word_min_count = 5;
  std::size_t symbol_min_count = 10;
  std::size_t image_symbol_min_count = 1;
  bool require_image_features = true;
};

struct CorpusVocabs {
  Vocabulary words{VocabKind::word};
  Vocabulary sentence_symbols{VocabKind::symbol};
  Vocabulary image_symbols{VocabKind::symbol};

  nlohmann::json to_json() const {
    return {{"words", words.to_json()},
            {"sentence_symbols", sentence_symbols.to_json()},
            {"image_symbols", image_symbols.to_json()}};
  }
  static CorpusVocabs from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("words") || !j.contains("sentence_symbols") || !j.contains("image_symbols")) {
      throw DataError("vocabulary bundle needs words, sentence_symbols and image_symbols");
    }
    return {Vocabulary::from_json(j.at("words")), Vocabulary::from_json(j.at("sentence_symbols")),
            Vocabulary::from_json(j.at("image_symbols"))};
  }
  bool operator==(const CorpusVocabs&) const = default;
};

/// Sentence is id-mapped, capped at max_len words, and terminated with EOS.
/// It is empty when the source record had no sentence.
struct CorpusRecord {
  std::string id;
  std::vector<std::size_t> sentence;
  std::optional<SceneGraph> sentence_graph;
  std::optional<SceneGraph> image_graph;

  bool operator==(const CorpusRecord&) const = default;
};

inline std::string lowercase(std::string s) {
  for (auto& ch : s) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return s;
}

namespace detail {

inline RawSceneGraph parse_graph(const nlohmann::json& j) {
  RawSceneGraph g;
  for (const auto& o : j.at("objects")) {
    RawObject obj;
    obj.label = lowercase(o.at("label").get<std::string>());
    if (o.contains("attributes")) {
      for (const auto& a : o.at("attributes")) obj.attributes.push_back(lowercase(a.get<std::string>()));
    }
    if (o.contains("feature")) obj.feature = o.at("feature").get<Feature>();
    g.objects.push_back(std::move(obj));
  }
  if (j.contains("relationships")) {
    for (const auto& r : j.at("relationships")) {
      RawRelationship rel;
      rel.subject = r.at("subject").get<std::size_t>();
      rel.object = r.at("object").get<std::size_t>();
      rel.predicate = lowercase(r.at("predicate").get<std::string>());
      if (r.contains("feature")) rel.feature = r.at("feature").get<Feature>();
      g.relationships.push_back(std::move(rel));
    }
  }
  return g;
}

inline nlohmann::json graph_to_json(const SceneGraph& g, const Vocabulary& symbols) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : g.objects) {
    nlohmann::json jo = {{"label", symbols.word(o.label)}, {"attributes", nlohmann::json::array()}};
    for (auto a : o.attributes) jo["attributes"].push_back(symbols.word(a));
    if (o.feature) jo["feature"] = *o.feature;
    objects.push_back(std::move(jo));
  }
  nlohmann::json rels = nlohmann::json::array();
  for (const auto& r : g.relationships) {
    nlohmann::json jr = {{"subject", r.subject}, {"predicate", symbols.word(r.predicate)}, {"object", r.object}};
    if (r.feature) jr["feature"] = *r.feature;
    rels.push_back(std::move(jr));
  }
  return {{"objects", objects}, {"relationships", rels}};
}

inline nlohmann::json raw_graph_to_json(const RawSceneGraph& g) {
  nlohmann::json objects = nlohmann::json::array();
  for (const auto& o : g.objects) {
    nlohmann::json jo = {{"label", o.label}, {"attributes", o.attributes}};
    if (o.feature) jo["feature"] = *o.feature;
    objects.push_back(std::move(jo));
  }
  nlohmann::json rels = nlohmann::json::array();
  for (const auto& r : g.relationships) {
    nlohmann::json jr = {{"subject", r.subject}, {"predicate", r.predicate}, {"object", r.object}};
    if (r.feature) jr["feature"] = *r.feature;
    rels.push_back(std::move(jr));
  }
  return {{"objects", objects}, {"relationships", rels}};
}

inline std::string format_violations(const std::vector<Violation>& vs) {
  std::string out;
  for (const auto& v : vs) out += "\n  " + v.message;
  return out;
}

}  // namespace detail

inline RawRecord parse_record(const nlohmann::json& j, std::size_t line, std::size_t position) {
  RawRecord rec;
  rec.line = line;
  if (j.contains("id")) {
    rec.id = j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump();
  } else {
    rec.id = std::to_string(position);
  }
  if (j.contains("sentence")) {
    for (const auto& w : j.at("sentence")) rec.sentence.push_back(lowercase(w.get<std::string>()));
  }
  if (j.contains("sentence_graph")) rec.sentence_graph = detail::parse_graph(j.at("sentence_graph"));
  if (j.contains("image_graph")) rec.image_graph = detail::parse_graph(j.at("image_graph"));
  return rec;
}

inline nlohmann::json raw_record_to_json(const RawRecord& rec) {
  nlohmann::json j = {{"id", rec.id}};
  if (!rec.sentence.empty()) j["sentence"] = rec.sentence;
  if (rec.sentence_graph) j["sentence_graph"] = detail::raw_graph_to_json(*rec.sentence_graph);
  if (rec.image_graph) j["image_graph"] = detail::raw_graph_to_json(*rec.image_graph);
  return j;
}

inline void write_raw_corpus(const std::string& path, const std::vector<RawRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file " + path);
  for (const auto& r : records) out << raw_record_to_json(r).dump() << '\n';
}

/// Reads and structurally parses every line; blank lines are skipped.
inline std::vector<RawRecord> read_raw_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open corpus file " + path);
  std::vector<RawRecord> records;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(parse_record(nlohmann::json::parse(text), line, records.size()));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line) + ": malformed record: " + e.what());
    }
  }
  if (records.empty()) throw DataError("corpus file " + path + " contains no records");
  return records;
}

/// Object, relationship and attribute labels share one symbol space.
inline Vocabulary build_symbol_vocab(const std::vector<RawSceneGraph>& graphs, std::size_t min_count = 10) {
  std::map<std::string, std::size_t> counts;
  std::size_t seen = 0;
  for (const auto& g : graphs) {
    for (const auto& o : g.objects) {
      ++counts[o.label];
      ++seen;
      for (const auto& a : o.attributes) ++counts[a];
    }
    for (const auto& r : g.relationships) ++counts[r.predicate];
  }
  if (seen == 0) throw DataError("build_symbol_vocab: no scene-graph objects to count");
  return vocabulary_from_counts(counts, min_count, VocabKind::symbol);
}

inline CorpusVocabs build_vocabs(const std::vector<RawRecord>& records, const CorpusConfig& config) {
  std::vector<std::vector<std::string>> sentences;
  std::vector<RawSceneGraph> sentence_graphs, image_graphs;
  for (const auto& r : records) {
    if (!r.sentence.empty()) sentences.push_back(r.sentence);
    if (r.sentence_graph) sentence_graphs.push_back(*r.sentence_graph);
    if (r.image_graph) image_graphs.push_back(*r.image_graph);
  }
  CorpusVocabs v;
  v.words = build_word_vocab(sentences, config.word_min_count);
  if (!sentence_graphs.empty()) v.sentence_symbols = build_symbol_vocab(sentence_graphs, config.symbol_min_count);
  if (!image_graphs.empty()) v.image_symbols = build_symbol_vocab(image_graphs, config.image_symbol_min_count);
  return v;
}

inline SceneGraph encode_graph(const RawSceneGraph& raw, const Vocabulary& symbols) {
  SceneGraph g;
  for (const auto& o : raw.objects) {
    ObjectNode node{symbols.id(o.label), {}, o.feature};
    for (const auto& a : o.attributes) node.attributes.push_back(symbols.id(a));
    g.objects.push_back(std::move(node));
  }
  for (const auto& r : raw.relationships) {
    g.relationships.push_back({r.subject, r.object, symbols.id(r.predicate), r.feature});
  }
  return g;
}

inline std::vector<std::size_t> encode_sentence(const std::vector<std::string>& words, const Vocabulary& vocab,
                                                std::size_t max_len) {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i < words.size() && i < max_len; ++i) ids.push_back(vocab.id(words[i]));
  ids.push_back(kEos);
  return ids;
}

/// Maps labels through the vocabularies and validates both graphs.
inline CorpusRecord encode_record(const RawRecord& raw, const CorpusVocabs& vocabs, const CorpusConfig& config) {
  CorpusRecord rec;
  rec.id = raw.id;
  if (!raw.sentence.empty()) rec.sentence = encode_sentence(raw.sentence, vocabs.words, config.max_len);
  std::vector<Violation> violations;
  if (raw.sentence_graph) {
    rec.sentence_graph = encode_graph(*raw.sentence_graph, vocabs.sentence_symbols);
    for (auto& v : validate(*rec.sentence_graph, {vocabs.sentence_symbols.size(), config.feature_dim, false})) {
      violations.push_back({"sentence_graph " + v.message});
    }
  }
  if (raw.image_graph) {
    rec.image_graph = encode_graph(*raw.image_graph, vocabs.image_symbols);
    ValidationLimits limits{vocabs.image_symbols.size(), config.feature_dim, config.require_image_features};
    for (auto& v : validate(*rec.image_graph, limits)) violations.push_back({"image_graph " + v.message});
  }
  if (!violations.empty()) {
    throw DataError("record " + rec.id + " (line " + std::to_string(raw.line) + ") failed validation:" +
                    detail::format_violations(violations));
  }
  return rec;
}

inline std::vector<CorpusRecord> encode_corpus(const std::vector<RawRecord>& raw, const CorpusVocabs& vocabs,
                                               const CorpusConfig& config) {
  std::vector<CorpusRecord> out;
  out.reserve(raw.size());
  for (const auto& r : raw) out.push_back(encode_record(r, vocabs, config));
  return out;
}

inline std::vector<CorpusRecord> load_corpus(const std::string& path, const CorpusVocabs& vocabs,
                                             const CorpusConfig& config) {
  return encode_corpus(read_raw_corpus(path), vocabs, config);
}

inline nlohmann::json record_to_json(const CorpusRecord& rec, const CorpusVocabs& vocabs) {
  nlohmann::json j = {{"id", rec.id}};
  nlohmann::json words = nlohmann::json::array();
  for (auto id : rec.sentence) {
    if (id == kEos) break;
    words.push_back(vocabs.words.word(id));
  }
  if (!rec.sentence.empty()) j["sentence"] = std::move(words);
  if (rec.sentence_graph) j["sentence_graph"] = detail::graph_to_json(*rec.sentence_graph, vocabs.sentence_symbols);
  if (rec.image_graph) j["image_graph"] = detail::graph_to_json(*rec.image_graph, vocabs.image_symbols);
  return j;
}

inline void save_corpus(const std::string& path, const std::vector<CorpusRecord>& records, const CorpusVocabs& vocabs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file " + path);
  for (const auto& r : records) out << record_to_json(r, vocabs).dump() << '\n';
}

}  // namespace sgae
