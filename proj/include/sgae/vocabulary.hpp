#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sgae/errors.hpp"

namespace sgae {

inline constexpr std::size_t kBos = 0;
inline constexpr std::size_t kEos = 1;
inline constexpr std::size_t kUnk = 2;
inline constexpr std::size_t kPad = 3;
inline constexpr std::size_t kReservedCount = 4;

inline constexpr std::string_view kBosToken = "<bos>";
inline constexpr std::string_view kEosToken = "<eos>";
inline constexpr std::string_view kUnkToken = "<unk>";
inline constexpr std::string_view kPadToken = "<pad>";

enum class VocabKind { word, symbol };

inline std::string to_string(VocabKind kind) { return kind == VocabKind::word ? "word" : "symbol"; }

/// Token <-> id bijection with BOS/EOS/UNK/PAD pinned to ids 0..3.
class Vocabulary {
 public:
  explicit Vocabulary(VocabKind kind = VocabKind::word) : kind_(kind) {
    for (auto t : {kBosToken, kEosToken, kUnkToken, kPadToken}) insert(std::string(t));
  }

  VocabKind kind() const { return kind_; }
  std::size_t size() const { return id_to_word_.size(); }

  /// Adds a token if absent; returns its id.
  std::size_t insert(const std::string& word) {
    auto [it, added] = word_to_id_.try_emplace(word, id_to_word_.size());
    if (added) id_to_word_.push_back(word);
    return it->second;
  }

  bool contains(const std::string& word) const { return word_to_id_.count(word) != 0; }

  /// Unknown words map to UNK.
  std::size_t id(const std::string& word) const {
    auto it = word_to_id_.find(word);
    return it == word_to_id_.end() ? kUnk : it->second;
  }

  const std::string& word(std::size_t id) const {
    if (id >= id_to_word_.size()) throw DataError("vocabulary id " + std::to_string(id) + " out of range");
    return id_to_word_[id];
  }

  const std::vector<std::string>& words() const { return id_to_word_; }

  bool operator==(const Vocabulary& other) const {
    return kind_ == other.kind_ && id_to_word_ == other.id_to_word_;
  }

  nlohmann::json to_json() const {
    nlohmann::json reserved = {{std::string(kBosToken), kBos},
                               {std::string(kEosToken), kEos},
                               {std::string(kUnkToken), kUnk},
                               {std::string(kPadToken), kPad}};
    nlohmann::json tokens = nlohmann::json::object();
    for (std::size_t i = kReservedCount; i < id_to_word_.size(); ++i) tokens[id_to_word_[i]] = i;
    return {{"kind", to_string(kind_)}, {"reserved", reserved}, {"tokens", tokens}};
  }

  static Vocabulary from_json(const nlohmann::json& j) {
    try {
      const std::string kind = j.at("kind").get<std::string>();
      if (kind != "word" && kind != "symbol") throw DataError("vocabulary kind must be word or symbol");
      Vocabulary v(kind == "word" ? VocabKind::word : VocabKind::symbol);
      const auto& reserved = j.at("reserved");
      for (auto [tok, id] : {std::pair{kBosToken, kBos}, {kEosToken, kEos}, {kUnkToken, kUnk}, {kPadToken, kPad}}) {
        if (reserved.at(std::string(tok)).get<std::size_t>() != id) {
          throw DataError("vocabulary reserved token " + std::string(tok) + " has a non-standard id");
        }
      }
      std::vector<std::pair<std::size_t, std::string>> entries;
      for (const auto& [word, id] : j.at("tokens").items()) entries.emplace_back(id.get<std::size_t>(), word);
      std::sort(entries.begin(), entries.end());
      for (std::size_t k = 0; k < entries.size(); ++k) {
        if (entries[k].first != kReservedCount + k) throw DataError("vocabulary ids are not contiguous");
        v.insert(entries[k].second);
      }
      return v;
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("malformed vocabulary: ") + e.what());
    }
  }

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write vocabulary file " + path);
    out << to_json().dump(2) << '\n';
  }

  static Vocabulary load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read vocabulary file " + path);
    try {
      return from_json(nlohmann::json::parse(in));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(path + ": " + e.what());
    }
  }

 private:
  VocabKind kind_;
  std::unordered_map<std::string, std::size_t> word_to_id_;
  std::vector<std::string> id_to_word_;
};

/// Ids assigned by count descending, ties broken lexicographically; tokens
/// seen fewer than min_count times are left out (they map to UNK).
inline Vocabulary vocabulary_from_counts(const std::map<std::string, std::size_t>& counts, std::size_t min_count,
                                         VocabKind kind) {
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (const auto& [w, c] : counts) {
    if (c >= min_count) kept.emplace_back(w, c);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v(kind);
  for (const auto& [w, c] : kept) v.insert(w);
  return v;
}

inline Vocabulary build_word_vocab(const std::vector<std::vector<std::string>>& sentences, std::size_t min_count = 5) {
  std::map<std::string, std::size_t> counts;
  std::size_t tokens = 0;
  for (const auto& s : sentences) {
    for (const auto& w : s) {
      ++counts[w];
      ++tokens;
    }
  }
  if (tokens == 0) throw DataError("build_word_vocab: corpus has no tokens");
  return vocabulary_from_counts(counts, min_count, VocabKind::word);
}

}  // namespace sgae
