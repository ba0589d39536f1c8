#pragma once

// Caption metrics over token-id sequences: BLEU@N and CIDEr-D.
//
// BOS, EOS and PAD ids are dropped before n-gram extraction. UNK counts as an
// ordinary token.
//
// CIDEr-D follows the reference coco-caption scorer: raw n-gram counts weighted
// by (ln N - ln max(1, df)), per-n cosine with the candidate weight clipped at
// the reference weight, a Gaussian penalty on the difference in sentence length
// (measured as bigram count), averaged over references and n = 1..4, times 10.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "sgae/errors.hpp"
#include "sgae/vocabulary.hpp"

namespace sgae {

using Tokens = std::vector<std::size_t>;
using NGram = std::vector<std::size_t>;
using NGramCounts = std::map<NGram, std::size_t>;

inline bool is_metric_token(std::size_t id) { return id != kBos && id != kEos && id != kPad; }

inline Tokens metric_tokens(const Tokens& tokens) {
  Tokens out;
  std::copy_if(tokens.begin(), tokens.end(), std::back_inserter(out), is_metric_token);
  return out;
}

/// Counts of the n-grams of exactly length n.
inline NGramCounts ngram_counts(const Tokens& tokens, std::size_t n) {
  NGramCounts counts;
  if (n == 0 || tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[NGram(tokens.begin() + static_cast<std::ptrdiff_t>(i), tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

/// Per-n n-gram multisets for n = 1..max_n. profile[n-1] holds length-n grams.
struct NGramProfile {
  std::vector<NGramCounts> counts;
  std::size_t length = 0;

  static NGramProfile of(const Tokens& raw, std::size_t max_n) {
    const Tokens tokens = metric_tokens(raw);
    NGramProfile p;
    p.length = tokens.size();
    for (std::size_t n = 1; n <= max_n; ++n) p.counts.push_back(ngram_counts(tokens, n));
    return p;
  }
};

// ---------------------------------------------------------------- BLEU

struct BleuDetail {
  std::vector<std::size_t> matched;   // clipped n-gram matches per n
  std::vector<std::size_t> proposed;  // candidate n-gram totals per n
  double brevity_penalty = 0.0;
  double score = 0.0;
};

inline BleuDetail bleu_detail(const Tokens& candidate, const std::vector<Tokens>& references, std::size_t max_n = 4) {
  if (references.empty()) throw ContractError("bleu: at least one reference is required");
  if (max_n == 0) throw ContractError("bleu: max_n must be positive");
  BleuDetail out;
  const NGramProfile cand = NGramProfile::of(candidate, max_n);
  std::vector<NGramProfile> refs;
  for (const auto& r : references) refs.push_back(NGramProfile::of(r, max_n));

  for (std::size_t n = 0; n < max_n; ++n) {
    std::size_t matched = 0, proposed = 0;
    for (const auto& [gram, count] : cand.counts[n]) {
      std::size_t max_ref = 0;
      for (const auto& r : refs) {
        auto it = r.counts[n].find(gram);
        if (it != r.counts[n].end()) max_ref = std::max(max_ref, it->second);
      }
      matched += std::min(count, max_ref);
      proposed += count;
    }
    out.matched.push_back(matched);
    out.proposed.push_back(proposed);
  }

  const std::size_t c = cand.length;
  if (c == 0) return out;
  // closest reference length, shorter wins ties
  std::size_t r = refs.front().length;
  for (const auto& ref : refs) {
    const auto diff = [&](std::size_t len) { return len > c ? len - c : c - len; };
    if (diff(ref.length) < diff(r) || (diff(ref.length) == diff(r) && ref.length < r)) r = ref.length;
  }
  out.brevity_penalty = c > r ? 1.0 : std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c));

  double log_sum = 0.0;
  for (std::size_t n = 0; n < max_n; ++n) {
    if (out.matched[n] == 0) return out;
    log_sum += std::log(static_cast<double>(out.matched[n]) / static_cast<double>(out.proposed[n]));
  }
  out.score = out.brevity_penalty * std::exp(log_sum / static_cast<double>(max_n));
  return out;
}

inline double bleu(const Tokens& candidate, const std::vector<Tokens>& references, std::size_t max_n = 4) {
  return bleu_detail(candidate, references, max_n).score;
}

// ---------------------------------------------------------------- CIDEr-D

/// Document frequencies over reference groups (one group per image).
struct DfTable {
  std::map<NGram, double> df;
  std::size_t groups = 0;
  std::size_t max_n = 4;

  double log_groups() const { return std::log(static_cast<double>(groups)); }

  double frequency(const NGram& g) const {
    auto it = df.find(g);
    return it == df.end() ? 0.0 : it->second;
  }

  /// ln N - ln max(1, df)
  double idf(const NGram& g) const { return log_groups() - std::log(std::max(1.0, frequency(g))); }

  bool operator==(const DfTable&) const = default;
};

inline DfTable build_df(const std::vector<std::vector<Tokens>>& reference_corpus, std::size_t max_n = 4) {
  DfTable table;
  table.groups = reference_corpus.size();
  table.max_n = max_n;
  for (const auto& group : reference_corpus) {
    std::set<NGram> seen;
    for (const auto& ref : group) {
      const NGramProfile p = NGramProfile::of(ref, max_n);
      for (const auto& counts : p.counts)
        for (const auto& kv : counts) seen.insert(kv.first);
    }
    for (const auto& g : seen) table.df[g] += 1.0;
  }
  return table;
}

inline void to_json(nlohmann::json& j, const DfTable& t) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [gram, f] : t.df) entries.push_back({{"ngram", gram}, {"df", f}});
  j = {{"groups", t.groups}, {"max_n", t.max_n}, {"df", entries}};
}

inline void from_json(const nlohmann::json& j, DfTable& t) {
  t.groups = j.at("groups").get<std::size_t>();
  t.max_n = j.at("max_n").get<std::size_t>();
  t.df.clear();
  for (const auto& e : j.at("df")) t.df[e.at("ngram").get<NGram>()] = e.at("df").get<double>();
}

struct CiderOptions {
  double sigma = 6.0;
  double scale = 10.0;
};

namespace detail {

struct CiderVector {
  std::vector<std::map<NGram, double>> weights;
  std::vector<double> norms;
  double length = 0.0;  // bigram count
};

inline CiderVector cider_vector(const Tokens& tokens, const DfTable& df) {
  const NGramProfile p = NGramProfile::of(tokens, df.max_n);
  CiderVector v;
  v.weights.resize(df.max_n);
  v.norms.assign(df.max_n, 0.0);
  for (std::size_t n = 0; n < df.max_n; ++n) {
    for (const auto& [gram, tf] : p.counts[n]) {
      const double w = static_cast<double>(tf) * df.idf(gram);
      v.weights[n][gram] = w;
      v.norms[n] += w * w;
      if (n == 1) v.length += static_cast<double>(tf);
    }
    v.norms[n] = std::sqrt(v.norms[n]);
  }
  return v;
}

inline double cider_similarity(const CiderVector& hyp, const CiderVector& ref, std::size_t n, double sigma) {
  double val = 0.0;
  for (const auto& [gram, h] : hyp.weights[n]) {
    auto it = ref.weights[n].find(gram);
    if (it == ref.weights[n].end()) continue;
    val += std::min(h, it->second) * it->second;
  }
  if (hyp.norms[n] != 0.0 && ref.norms[n] != 0.0) val /= hyp.norms[n] * ref.norms[n];
  const double delta = hyp.length - ref.length;
  return val * std::exp(-(delta * delta) / (2.0 * sigma * sigma));
}

}  // namespace detail

inline double cider_d(const Tokens& candidate, const std::vector<Tokens>& references, const DfTable& df,
                      const CiderOptions& options = {}) {
  if (df.groups == 0) throw ContractError("cider_d: document-frequency table is empty");
  if (references.empty()) throw ContractError("cider_d: at least one reference is required");
  const auto hyp = detail::cider_vector(candidate, df);
  double total = 0.0;
  for (const auto& r : references) {
    const auto ref = detail::cider_vector(r, df);
    double per_ref = 0.0;
    for (std::size_t n = 0; n < df.max_n; ++n) per_ref += detail::cider_similarity(hyp, ref, n, options.sigma);
    total += per_ref / static_cast<double>(df.max_n);
  }
  return options.scale * total / static_cast<double>(references.size());
}

/// Reward handle for self-critical training: CIDEr-D against a fixed df table.
struct CiderReward {
  DfTable df;
  CiderOptions options;

  double operator()(const Tokens& candidate, const std::vector<Tokens>& references) const {
    return cider_d(candidate, references, df, options);
  }
};

}  // namespace sgae
