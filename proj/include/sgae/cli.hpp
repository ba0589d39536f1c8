#pragma once

// Command-line front end. `run_cli` is the whole program minus process
// plumbing so tests can drive it with in-memory streams.
//
// Exit codes: 0 ok, 1 validation found violations, 2 config error,
// 3 data error, 4 model/checkpoint incompatibility, 70 internal error.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "sgae/trainer.hpp"

namespace sgae {

enum ExitCode : int { kExitOk = 0, kExitViolations = 1, kExitConfig = 2, kExitData = 3, kExitModel = 4, kExitInternal = 70 };

namespace cli_detail {

inline TrainConfig resolve_config(const std::string& path, const std::optional<std::uint64_t>& seed) {
  TrainConfig cfg;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError(path + ": " + e.what());
    }
    cfg = overlay_config(cfg, j);
  }
  if (seed) cfg.seed = *seed;
  cfg.validate();
  return cfg;
}

inline void echo_config(std::ostream& err, const TrainConfig& cfg) {
  err << "resolved config: " << nlohmann::json(cfg).dump() << '\n';
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

inline std::filesystem::path prepare_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
  return dir;
}

inline std::function<void(const EpochLog&)> progress(std::ostream& err) {
  return [&err](const EpochLog& row) {
    err << row.phase << " epoch " << row.epoch << " loss " << row.loss;
    if (row.reward_mean) err << " reward " << *row.reward_mean;
    err << '\n';
  };
}

inline std::vector<std::string> words_of(const Tokens& ids, const Vocabulary& vocab) {
  std::vector<std::string> out;
  for (auto id : ids) out.push_back(vocab.word(id));
  return out;
}

/// Feature length of the first RoI feature found, if any.
inline std::optional<std::size_t> first_feature_dim(const std::vector<RawRecord>& records) {
  for (const auto& r : records) {
    for (const auto* g : {r.image_graph ? &*r.image_graph : nullptr, r.sentence_graph ? &*r.sentence_graph : nullptr}) {
      if (!g) continue;
      for (const auto& o : g->objects)
        if (o.feature) return o.feature->size();
      for (const auto& rel : g->relationships)
        if (rel.feature) return rel.feature->size();
    }
  }
  return std::nullopt;
}

inline void check_feature_dims(const std::vector<RawRecord>& records, std::size_t expected) {
  for (const auto& r : records) {
    if (!r.image_graph) continue;
    auto check = [&](const std::optional<Feature>& f) {
      if (f && f->size() != expected) {
        throw ModelError("record " + r.id + " (line " + std::to_string(r.line) + ") has feature length " +
                         std::to_string(f->size()) + ", checkpoint expects " + std::to_string(expected));
      }
    };
    for (const auto& o : r.image_graph->objects) check(o.feature);
    for (const auto& rel : r.image_graph->relationships) check(rel.feature);
  }
}

// ------------------------------------------------------------ commands

inline int train_sgae_cmd(const std::string& corpus_path, const std::string& config_path, const std::string& out_dir,
                          const std::optional<std::uint64_t>& seed, std::ostream& err) {
  const TrainConfig cfg = resolve_config(config_path, seed);
  echo_config(err, cfg);
  const auto raw = read_raw_corpus(corpus_path);
  CorpusConfig cc = cfg.corpus();
  cc.require_image_features = false;
  if (auto fd = first_feature_dim(raw)) cc.feature_dim = *fd;
  const CorpusVocabs vocabs = build_vocabs(raw, cc);
  const auto corpus = encode_corpus(raw, vocabs, cc);
  const auto dir = prepare_out_dir(out_dir);
  auto result = train_sgae(corpus, vocabs, cfg, {progress(err), {}});
  save_checkpoint(result.pretrain, (dir / "sgae-pretrain.ckpt").string());
  save_checkpoint(result.dictionary_phase, (dir / "sgae-dict.ckpt").string());
  write_text(dir / "train_log.csv", log_csv(result.log));
  write_text(dir / "vocab.json", vocabs.to_json().dump(2) + "\n");
  const auto acc = sgae_reconstruction(result.model, corpus, true, cfg.decode_steps());
  err << "reconstruction accuracy " << acc.accuracy() << " (" << acc.exact << "/" << acc.records << " exact)\n";
  return kExitOk;
}

inline int train_captioner_cmd(const std::string& corpus_path, const std::string& ckpt_path,
                               const std::string& config_path, const std::string& out_dir,
                               const std::optional<std::uint64_t>& seed, const std::string& phases,
                               std::ostream& err) {
  if (phases != "xe-only" && phases != "xe+rl") throw ConfigError("--phases must be xe-only or xe+rl");
  const TrainConfig cfg = resolve_config(config_path, seed);
  echo_config(err, cfg);
  const Checkpoint sgae_ckpt = load_checkpoint(ckpt_path);
  if (!sgae_ckpt.find("dictionary.D")) throw ModelError(ckpt_path + ": checkpoint lacks tensor 'dictionary.D'");
  const auto raw = read_raw_corpus(corpus_path);
  const CorpusConfig cc = cfg.corpus();
  CorpusVocabs vocabs = build_vocabs(raw, cc);
  // Reuse the auto-encoder's word vocabulary when it carries one, so both decoders share ids.
  if (sgae_ckpt.metadata.contains("vocabs")) {
    vocabs.words = CorpusVocabs::from_json(sgae_ckpt.metadata.at("vocabs")).words;
  }
  const auto corpus = encode_corpus(raw, vocabs, cc);
  const auto dir = prepare_out_dir(out_dir);
  auto result = train_captioner(corpus, vocabs, sgae_ckpt, cfg,
                                phases == "xe-only" ? CaptionerPhases::xe_only : CaptionerPhases::xe_rl,
                                {progress(err), {}});
  save_checkpoint(result.xe, (dir / "captioner-xe.ckpt").string());
  if (result.rl) save_checkpoint(*result.rl, (dir / "captioner-rl.ckpt").string());
  write_text(dir / "train_log.csv", log_csv(result.log));
  const auto acc = captioner_reconstruction(result.model, corpus, cfg.decode_steps());
  err << "reconstruction accuracy " << acc.accuracy() << " (" << acc.exact << "/" << acc.records << " exact)\n";
  return kExitOk;
}

inline int infer_cmd(const std::string& ckpt_path, const std::string& input_path, std::size_t beam,
                     std::size_t max_len, std::ostream& out, std::ostream& err) {
  if (beam == 0) throw ConfigError("--beam must be at least 1");
  if (max_len == 0) throw ConfigError("--max-len must be at least 1");
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  if (!ckpt.metadata.contains("model") || !ckpt.metadata.contains("dims") || !ckpt.metadata.contains("vocabs")) {
    throw ModelError(ckpt_path + ": checkpoint metadata lacks model description");
  }
  const std::string kind = ckpt.metadata.at("model").get<std::string>();
  const CorpusVocabs vocabs = CorpusVocabs::from_json(ckpt.metadata.at("vocabs"));
  const auto raw = read_raw_corpus(input_path);
  const BeamOptions options{beam, max_len + 1, false};
  err << "resolved config: " << nlohmann::json{{"ckpt", ckpt_path}, {"beam", beam}, {"max_len", max_len}}.dump()
      << '\n';

  SeededRng rng(0);
  std::function<DecoderContext(const CorpusRecord&)> encode;
  const DecoderParams* decoder = nullptr;
  CorpusConfig cc;
  cc.max_len = max_len;
  SgaeModel sgae_model;
  CaptionerModel cap_model;
  if (kind == "captioner") {
    CaptionerDims dims;
    try {
      dims = ckpt.metadata.at("dims").get<CaptionerDims>();
    } catch (const nlohmann::json::exception& e) {
      throw ModelError(std::string("checkpoint dims unreadable: ") + e.what());
    }
    if (dims.vocab != vocabs.words.size() || dims.image_symbols != vocabs.image_symbols.size()) {
      throw ModelError("checkpoint vocabulary sizes disagree with its tensor dimensions");
    }
    cap_model = CaptionerModel::init(rng, dims);
    restore(ckpt, cap_model.parameters());
    check_feature_dims(raw, dims.feature_dim);
    cc.feature_dim = dims.feature_dim;
    cc.require_image_features = true;
    decoder = &cap_model.decoder;
    encode = [&](const CorpusRecord& rec) {
      if (!rec.image_graph) throw DataError("record " + rec.id + " has no image_graph");
      return cap_model.encode(*rec.image_graph);
    };
  } else if (kind == "sgae") {
    SgaeDims dims;
    try {
      dims = ckpt.metadata.at("dims").get<SgaeDims>();
    } catch (const nlohmann::json::exception& e) {
      throw ModelError(std::string("checkpoint dims unreadable: ") + e.what());
    }
    if (dims.vocab != vocabs.words.size() || dims.symbols != vocabs.sentence_symbols.size()) {
      throw ModelError("checkpoint vocabulary sizes disagree with its tensor dimensions");
    }
    sgae_model = SgaeModel::init(rng, dims);
    restore(ckpt, sgae_model.parameters());
    cc.require_image_features = false;
    if (auto fd = first_feature_dim(raw)) cc.feature_dim = *fd;
    decoder = &sgae_model.decoder;
    const bool use_dictionary = ckpt.phase != phase_name(Phase::sgae_pretrain);
    encode = [&, use_dictionary](const CorpusRecord& rec) {
      if (!rec.sentence_graph) throw DataError("record " + rec.id + " has no sentence_graph");
      return sgae_model.encode(*rec.sentence_graph, use_dictionary);
    };
  } else {
    throw ModelError(ckpt_path + ": unknown model kind '" + kind + "'");
  }

  NoTapeScope no_tape;
  for (const auto& r : raw) {
    const CorpusRecord rec = encode_record(r, vocabs, cc);
    const auto ranked = decode_beam(*decoder, encode(rec), options);
    nlohmann::json candidates = nlohmann::json::array();
    for (const auto& h : ranked) {
      candidates.push_back({{"tokens", words_of(h.tokens, vocabs.words)}, {"log_prob", h.log_prob},
                            {"finished", h.finished}});
    }
    out << nlohmann::json{{"id", rec.id},
                          {"tokens", words_of(ranked.front().tokens, vocabs.words)},
                          {"log_prob", ranked.front().log_prob},
                          {"beam_candidates", candidates}}
               .dump()
        << '\n';
  }
  return kExitOk;
}

struct EvalItem {
  std::string id;
  std::vector<std::vector<std::string>> texts;
};

inline std::vector<EvalItem> read_eval_file(const std::string& path, bool hypotheses) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::vector<EvalItem> items;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(text);
      EvalItem item;
      item.id = j.contains("id") ? (j.at("id").is_string() ? j.at("id").get<std::string>() : j.at("id").dump())
                                 : std::to_string(items.size());
      if (hypotheses) {
        item.texts.push_back(j.at("tokens").get<std::vector<std::string>>());
      } else if (j.contains("references")) {
        item.texts = j.at("references").get<std::vector<std::vector<std::string>>>();
      } else {
        item.texts.push_back(j.at("sentence").get<std::vector<std::string>>());
      }
      if (!hypotheses && item.texts.empty()) throw DataError(path + ":" + std::to_string(line) + ": no references");
      items.push_back(std::move(item));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(line) + ": " + e.what());
    }
  }
  if (items.empty()) throw DataError(path + " contains no records");
  return items;
}

inline int eval_cmd(const std::string& hyp_path, const std::string& refs_path, std::ostream& out, std::ostream& err) {
  err << "resolved config: " << nlohmann::json{{"hyp", hyp_path}, {"refs", refs_path}}.dump() << '\n';
  const auto hyps = read_eval_file(hyp_path, true);
  const auto refs = read_eval_file(refs_path, false);
  if (hyps.size() != refs.size()) {
    throw DataError("hypothesis file has " + std::to_string(hyps.size()) + " records, reference file " +
                    std::to_string(refs.size()));
  }
  // Words are interned to ids above the reserved block so none are filtered.
  std::unordered_map<std::string, std::size_t> ids;
  auto intern = [&](const std::vector<std::string>& words) {
    Tokens t;
    for (const auto& w : words) t.push_back(ids.try_emplace(w, kReservedCount + ids.size()).first->second);
    return t;
  };
  std::vector<std::vector<Tokens>> groups;
  for (std::size_t i = 0; i < refs.size(); ++i) {
    if (hyps[i].id != refs[i].id) {
      throw DataError("id mismatch at record " + std::to_string(i + 1) + ": hypothesis '" + hyps[i].id +
                      "' vs reference '" + refs[i].id + "'");
    }
    std::vector<Tokens> group;
    for (const auto& r : refs[i].texts) group.push_back(intern(r));
    groups.push_back(std::move(group));
  }
  const DfTable df = build_df(groups);
  nlohmann::json items = nlohmann::json::array();
  std::map<std::string, double> totals;
  for (std::size_t i = 0; i < hyps.size(); ++i) {
    const Tokens cand = intern(hyps[i].texts.front());
    nlohmann::json row = {{"id", hyps[i].id}};
    for (std::size_t n = 1; n <= 4; ++n) {
      const double b = bleu(cand, groups[i], n);
      row["bleu" + std::to_string(n)] = b;
      totals["bleu" + std::to_string(n)] += b;
    }
    const double c = cider_d(cand, groups[i], df);
    row["cider_d"] = c;
    totals["cider_d"] += c;
    items.push_back(std::move(row));
  }
  nlohmann::json mean = nlohmann::json::object();
  for (const auto& [k, v] : totals) mean[k] = v / static_cast<double>(hyps.size());
  out << nlohmann::json{{"items", items}, {"mean", mean}}.dump(2) << '\n';
  return kExitOk;
}

inline int validate_cmd(const std::string& corpus_path, const std::string& config_path,
                        const std::optional<std::size_t>& feat_dim, std::ostream& out, std::ostream& err) {
  const TrainConfig cfg = resolve_config(config_path, std::nullopt);
  const auto raw = read_raw_corpus(corpus_path);
  CorpusConfig cc = cfg.corpus();
  cc.require_image_features = false;
  if (feat_dim) {
    cc.feature_dim = *feat_dim;
  } else if (config_path.empty()) {
    if (auto fd = first_feature_dim(raw)) cc.feature_dim = *fd;
  }
  err << "resolved config: " << nlohmann::json{{"corpus", corpus_path}, {"feature_dim", cc.feature_dim}}.dump()
      << '\n';
  const CorpusVocabs vocabs = build_vocabs(raw, cc);

  std::size_t violations = 0, objects = 0, relationships = 0, attributes = 0;
  std::map<std::string, std::size_t> symbol_counts;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const auto& r = raw[i];
    auto report = [&](const std::string& which, const RawSceneGraph& g, const Vocabulary& symbols) {
      for (const auto& o : g.objects) {
        ++objects;
        ++symbol_counts[o.label];
        attributes += o.attributes.size();
        for (const auto& a : o.attributes) ++symbol_counts[a];
      }
      relationships += g.relationships.size();
      for (const auto& rel : g.relationships) ++symbol_counts[rel.predicate];
      for (const auto& v : validate(encode_graph(g, symbols), {symbols.size(), cc.feature_dim, false})) {
        ++violations;
        out << "violation: record " << (i + 1) << " (id " << r.id << ", line " << r.line << ") " << which << ' '
            << v.message << '\n';
      }
    };
    if (r.sentence_graph) report("sentence_graph", *r.sentence_graph, vocabs.sentence_symbols);
    if (r.image_graph) report("image_graph", *r.image_graph, vocabs.image_symbols);
  }
  std::vector<std::pair<std::string, std::size_t>> freq(symbol_counts.begin(), symbol_counts.end());
  std::stable_sort(freq.begin(), freq.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  nlohmann::json top = nlohmann::json::object();
  for (std::size_t k = 0; k < freq.size() && k < 20; ++k) top[freq[k].first] = freq[k].second;
  out << "summary: " << nlohmann::json{{"records", raw.size()},
                                        {"objects", objects},
                                        {"relationships", relationships},
                                        {"attributes", attributes},
                                        {"violations", violations},
                                        {"distinct_symbols", symbol_counts.size()},
                                        {"symbol_frequencies", top}}
                              .dump()
      << '\n';
  return violations == 0 ? kExitOk : kExitViolations;
}

}  // namespace cli_detail

inline int run_cli(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Scene-graph auto-encoder captioning toolkit"};
  app.require_subcommand(1);

  std::string corpus, config, out_dir, ckpt, sgae_ckpt, input, hyp, refs, phases = "xe+rl";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> feat_dim;
  std::size_t beam = 5, max_len = 16;

  auto* train_sgae_app = app.add_subcommand("train-sgae", "Train the sentence scene-graph auto-encoder");
  train_sgae_app->add_option("--corpus", corpus, "Corpus JSONL")->required();
  train_sgae_app->add_option("--config", config, "Flat JSON config");
  train_sgae_app->add_option("--out", out_dir, "Output directory")->required();
  train_sgae_app->add_option("--seed", seed, "Random seed (overrides config)");

  auto* train_cap_app = app.add_subcommand("train-captioner", "Train the captioner from an auto-encoder checkpoint");
  train_cap_app->add_option("--corpus", corpus, "Corpus JSONL with image graphs")->required();
  train_cap_app->add_option("--sgae-ckpt", sgae_ckpt, "Auto-encoder checkpoint holding dictionary.D")->required();
  train_cap_app->add_option("--config", config, "Flat JSON config");
  train_cap_app->add_option("--out", out_dir, "Output directory")->required();
  train_cap_app->add_option("--seed", seed, "Random seed (overrides config)");
  train_cap_app->add_option("--phases", phases, "xe-only or xe+rl");

  auto* infer_app = app.add_subcommand("infer", "Beam-search captions as JSON lines");
  infer_app->add_option("--ckpt", ckpt, "Model checkpoint")->required();
  infer_app->add_option("--input", input, "Input JSONL")->required();
  infer_app->add_option("--beam", beam, "Beam width");
  infer_app->add_option("--max-len", max_len, "Maximum words per caption");

  auto* eval_app = app.add_subcommand("eval", "BLEU@1-4 and CIDEr-D");
  eval_app->add_option("--hyp", hyp, "Hypothesis JSONL ({id, tokens})")->required();
  eval_app->add_option("--refs", refs, "Reference JSONL ({id, references} or {id, sentence})")->required();

  auto* validate_app = app.add_subcommand("validate", "Check every scene graph in a corpus");
  validate_app->add_option("--corpus", corpus, "Corpus JSONL")->required();
  validate_app->add_option("--config", config, "Flat JSON config");
  validate_app->add_option("--feat-dim", feat_dim, "Expected RoI feature length");

  std::vector<const char*> argv{"sgae"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*train_sgae_app) return cli_detail::train_sgae_cmd(corpus, config, out_dir, seed, err);
    if (*train_cap_app) return cli_detail::train_captioner_cmd(corpus, sgae_ckpt, config, out_dir, seed, phases, err);
    if (*infer_app) return cli_detail::infer_cmd(ckpt, input, beam, max_len, out, err);
    if (*eval_app) return cli_detail::eval_cmd(hyp, refs, out, err);
    if (*validate_app) return cli_detail::validate_cmd(corpus, config, feat_dim, out, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const ModelError& e) {
    err << "model error: " << e.what() << '\n';
    return kExitModel;
  } catch (const DimensionError& e) {
    err << "model error: " << e.what() << '\n';
    return kExitModel;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kExitInternal;
  }
  return kExitConfig;
}

}  // namespace sgae
