#pragma once

// Training pipelines.
//
// Auto-encoder: phase "sgae-pretrain" decodes straight from X; phase
// "sgae-dict" inserts the dictionary re-encoder and keeps training every
// parameter, with D on its own rate track.
// Captioner: phase "captioner-xe" then "captioner-rl" (self-critical, CIDEr-D
// reward, greedy baseline). D starts from the auto-encoder checkpoint.
//
// The epoch counter driving the rate schedule is global across the phases of
// one pipeline. Each phase starts with fresh Adam moments.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numeric>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "sgae/checkpoint.hpp"
#include "sgae/corpus.hpp"
#include "sgae/metrics.hpp"
#include "sgae/models.hpp"
#include "sgae/optim.hpp"

namespace sgae {

enum class Phase { sgae_pretrain, sgae_dict, captioner_xe, captioner_rl };

inline std::string phase_name(Phase p) {
  switch (p) {
    case Phase::sgae_pretrain: return "sgae-pretrain";
    case Phase::sgae_dict: return "sgae-dict";
    case Phase::captioner_xe: return "captioner-xe";
    case Phase::captioner_rl: return "captioner-rl";
  }
  return "unknown";
}

struct TrainConfig {
  // model
  std::size_t dim = 32;
  std::size_t atoms = 64;
  std::size_t attention_dim = 512;
  std::size_t feature_dim = 2048;
  // corpus
  std::size_t max_len = 16;
  std::size_t word_min_count = 5;
  std::size_t symbol_min_count = 10;
  std::size_t image_symbol_min_count = 1;
  // schedule
  double lr_main = 5e-4;
  double lr_dict = 5e-5;
  double decay_factor = 0.8;
  std::size_t decay_every = 5;
  std::size_t batch_size = 100;
  std::size_t sgae_pretrain_epochs = 20;
  std::size_t sgae_dict_epochs = 20;
  std::size_t xe_epochs = 20;
  std::size_t rl_epochs = 40;
  // optimiser
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 5.0;
  double rl_lr_scale = 1.0;  // multiplies both scheduled rates during captioner-rl
  // variants
  bool freeze_non_dictionary = false;  // sgae-dict phase updates D only
  bool sum_loss = false;               // XE summed over tokens instead of averaged
  double cider_sigma = 6.0;
  std::uint64_t seed = 1;

  AdamConfig adam() const { return {adam_beta1, adam_beta2, adam_eps}; }
  CorpusConfig corpus() const {
    return {max_len, feature_dim, word_min_count, symbol_min_count, image_symbol_min_count, true};
  }
  /// Decoding steps: the word cap plus the EOS step.
  std::size_t decode_steps() const { return max_len + 1; }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("invalid config: " + m); };
    if (!(lr_main > 0.0)) fail("lr_main must be > 0");
    if (!(lr_dict >= 0.0)) fail("lr_dict must be >= 0");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) fail("decay_factor must lie in (0, 1]");
    if (decay_every == 0) fail("decay_every must be positive");
    if (batch_size == 0) fail("batch_size must be positive");
    if (dim == 0 || atoms == 0 || attention_dim == 0 || feature_dim == 0) fail("model dimensions must be positive");
    if (max_len == 0) fail("max_len must be positive");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
      fail("adam betas must lie in [0, 1)");
    }
    if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
    if (!(cider_sigma > 0.0)) fail("cider_sigma must be > 0");
    if (!(rl_lr_scale >= 0.0)) fail("rl_lr_scale must be >= 0");
  }

  bool operator==(const TrainConfig&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainConfig, dim, atoms, attention_dim, feature_dim, max_len,
                                                word_min_count, symbol_min_count, image_symbol_min_count, lr_main,
                                                lr_dict, decay_factor, decay_every, batch_size, sgae_pretrain_epochs,
                                                sgae_dict_epochs, xe_epochs, rl_epochs, adam_beta1, adam_beta2,
                                                adam_eps, clip_norm, rl_lr_scale, freeze_non_dictionary, sum_loss, cider_sigma,
                                                seed)

/// Overlays a flat JSON object onto `base`. Unknown keys and wrong types are config errors.
inline TrainConfig overlay_config(const TrainConfig& base, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a flat JSON object");
  const nlohmann::json known = base;
  nlohmann::json merged = known;
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + key + "'");
    if (value.is_object() || value.is_array()) throw ConfigError("config key '" + key + "' must be a scalar");
    merged[key] = value;
  }
  TrainConfig out;
  try {
    out = merged.get<TrainConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config value has the wrong type: ") + e.what());
  }
  out.validate();
  return out;
}

// ---------------------------------------------------------------- losses

inline Tensor sum_scalars(const std::vector<Tensor>& terms) {
  if (terms.empty()) throw ContractError("sum of an empty term list");
  return sum(concat(terms));
}

/// Cross-entropy over teacher-forced log-probabilities: mean (or sum) of
/// -log P_t[target_t] over the non-PAD positions.
inline Tensor xe_loss(const std::vector<Tensor>& log_probs, const std::vector<std::size_t>& target,
                      bool sum_mode = false) {
  if (log_probs.size() != target.size()) {
    throw DimensionError("xe_loss: " + std::to_string(log_probs.size()) + " distributions for " +
                         std::to_string(target.size()) + " targets");
  }
  std::vector<Tensor> terms;
  for (std::size_t t = 0; t < target.size(); ++t) {
    if (target[t] == kPad) continue;
    if (target[t] >= log_probs[t].numel()) throw DimensionError("xe_loss: target id outside vocabulary");
    terms.push_back(pick(log_probs[t], target[t]));
  }
  if (terms.empty()) throw ContractError("xe_loss: target has no non-PAD tokens");
  const double factor = sum_mode ? -1.0 : -1.0 / static_cast<double>(terms.size());
  return scale(sum_scalars(terms), factor);
}

using RewardFn = std::function<double(const Tokens&, const std::vector<Tokens>&)>;

/// -A * sum_t log P_t[s_t]; A enters as a constant.
inline Tensor scst_loss(const std::vector<Tensor>& sample_log_probs, double advantage) {
  return scale(sum_scalars(sample_log_probs), -advantage);
}

struct ScstResult {
  Tensor pseudo_loss;
  Hypothesis sample;
  Hypothesis greedy;
  double sample_reward = 0.0;
  double greedy_reward = 0.0;
  double advantage = 0.0;
};

inline ScstResult scst_step(const DecoderParams& decoder, const DecoderContext& ctx,
                            const std::vector<Tokens>& references, const RewardFn& reward, SeededRng& rng,
                            std::size_t max_steps) {
  if (references.empty()) throw ContractError("scst_step: references are empty");
  ScstResult r;
  auto sampled = decode_sample(decoder, ctx, rng, max_steps);
  r.sample = sampled.hyp;
  r.greedy = decode_greedy(decoder, ctx, max_steps);
  r.sample_reward = reward(r.sample.tokens, references);
  r.greedy_reward = reward(r.greedy.tokens, references);
  r.advantage = r.sample_reward - r.greedy_reward;
  r.pseudo_loss = scst_loss(sampled.step_log_probs, r.advantage);
  return r;
}

// ---------------------------------------------------------------- optimiser wiring

/// Adam over the two rate tracks with one global-norm clip across both.
struct GroupOptimizer {
  std::vector<Tensor> main;
  std::vector<Tensor> dictionary;
  AdamState main_state;
  AdamState dictionary_state;
  double clip_norm = 5.0;

  static GroupOptimizer over(const ParameterList& params, const AdamConfig& adam, double clip_norm,
                             bool include_dictionary) {
    GroupOptimizer opt;
    for (const auto& p : params) {
      if (p.group == ParamGroup::main) {
        opt.main.push_back(p.tensor);
      } else if (include_dictionary) {
        opt.dictionary.push_back(p.tensor);
      }
    }
    opt.main_state = AdamState::for_params(opt.main, adam);
    opt.dictionary_state = AdamState::for_params(opt.dictionary, adam);
    opt.clip_norm = clip_norm;
    return opt;
  }

  void zero_grad() {
    for (auto& t : main) t.zero_grad();
    for (auto& t : dictionary) t.zero_grad();
  }

  void step(double lr_main, double lr_dict, bool update_main = true) {
    std::vector<Tensor> all = main;
    all.insert(all.end(), dictionary.begin(), dictionary.end());
    clip_grad_norm(all, clip_norm);
    if (update_main) adam_update(main_state, main, lr_main);
    if (!dictionary.empty()) adam_update(dictionary_state, dictionary, lr_dict);
  }
};

// ---------------------------------------------------------------- logging

struct EpochLog {
  std::size_t epoch = 0;
  std::string phase;
  double lr_main = 0.0;
  double lr_dict = 0.0;
  double loss = 0.0;
  std::optional<double> reward_mean;
};

inline std::string log_csv(const std::vector<EpochLog>& rows) {
  std::ostringstream out;
  out.precision(10);
  out << "epoch,phase,lr_main,lr_dict,loss,reward_mean\n";
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.phase << ',' << r.lr_main << ',' << r.lr_dict << ',' << r.loss << ',';
    if (r.reward_mean) out << *r.reward_mean;
    out << '\n';
  }
  return out.str();
}

template <class Model>
struct TrainHooks {
  std::function<void(const EpochLog&)> on_epoch;
  std::function<void(Phase, const Model&)> on_phase_end;
};

namespace detail {

inline std::vector<std::vector<std::size_t>> epoch_batches(std::size_t n, std::size_t batch_size, SeededRng& rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, start + batch_size)));
  }
  return batches;
}

/// Runs one epoch of XE updates; `record_loss(i)` builds record i's loss on the active tape.
inline double xe_epoch(const std::function<Tensor(std::size_t)>& record_loss, std::size_t n, std::size_t batch_size,
                       SeededRng& rng, GroupOptimizer& opt, double lr_main, double lr_dict, bool update_main) {
  double total = 0.0;
  for (const auto& batch : epoch_batches(n, batch_size, rng)) {
    opt.zero_grad();
    Tape tape;
    Tape::Scope scope(tape);
    std::vector<Tensor> losses;
    for (auto i : batch) {
      losses.push_back(record_loss(i));
      total += losses.back().item();
    }
    Tensor batch_loss = scale(sum_scalars(losses), 1.0 / static_cast<double>(batch.size()));
    tape.backward(batch_loss);
    opt.step(lr_main, lr_dict, update_main);
  }
  return total / static_cast<double>(n);
}

inline nlohmann::json config_snapshot(const TrainConfig& cfg) { return cfg; }

}  // namespace detail

// ---------------------------------------------------------------- evaluation helpers

struct ReconstructionStats {
  std::size_t correct = 0;  // position-wise token matches, EOS position included
  std::size_t total = 0;
  std::size_t exact = 0;    // sequences reproduced exactly
  std::size_t records = 0;

  double accuracy() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

inline void score_reconstruction(ReconstructionStats& stats, const Hypothesis& hyp,
                                 const std::vector<std::size_t>& target) {
  std::vector<std::size_t> produced = hyp.tokens;
  if (hyp.finished) produced.push_back(kEos);
  std::size_t correct = 0;
  for (std::size_t t = 0; t < target.size(); ++t) {
    if (t < produced.size() && produced[t] == target[t]) ++correct;
  }
  stats.correct += correct;
  stats.total += target.size();
  stats.records += 1;
  if (produced == target) stats.exact += 1;
}

inline ReconstructionStats sgae_reconstruction(const SgaeModel& model, const std::vector<CorpusRecord>& corpus,
                                               bool use_dictionary, std::size_t max_steps) {
  NoTapeScope no_tape;
  ReconstructionStats stats;
  for (const auto& rec : corpus) {
    auto ctx = model.encode(*rec.sentence_graph, use_dictionary);
    score_reconstruction(stats, decode_greedy(model.decoder, ctx, max_steps), rec.sentence);
  }
  return stats;
}

inline ReconstructionStats captioner_reconstruction(const CaptionerModel& model, const std::vector<CorpusRecord>& corpus,
                                                    std::size_t max_steps) {
  NoTapeScope no_tape;
  ReconstructionStats stats;
  for (const auto& rec : corpus) {
    auto ctx = model.encode(*rec.image_graph);
    score_reconstruction(stats, decode_greedy(model.decoder, ctx, max_steps), rec.sentence);
  }
  return stats;
}

inline std::vector<Tokens> record_references(const CorpusRecord& rec) { return {metric_tokens(rec.sentence)}; }

/// CIDEr-D reward whose df table is built from the corpus sentences, one group per record.
inline CiderReward corpus_reward(const std::vector<CorpusRecord>& corpus, double sigma = 6.0) {
  std::vector<std::vector<Tokens>> groups;
  groups.reserve(corpus.size());
  for (const auto& rec : corpus) groups.push_back(record_references(rec));
  return {build_df(groups), {sigma, 10.0}};
}

inline double mean_greedy_reward(const CaptionerModel& model, const std::vector<CorpusRecord>& corpus,
                                 const RewardFn& reward, std::size_t max_steps) {
  NoTapeScope no_tape;
  double total = 0.0;
  for (const auto& rec : corpus) {
    auto ctx = model.encode(*rec.image_graph);
    total += reward(decode_greedy(model.decoder, ctx, max_steps).tokens, record_references(rec));
  }
  return corpus.empty() ? 0.0 : total / static_cast<double>(corpus.size());
}

// ---------------------------------------------------------------- auto-encoder

struct SgaeTrainResult {
  SgaeModel model;
  Checkpoint pretrain;
  Checkpoint dictionary_phase;
  std::vector<EpochLog> log;
};

inline SgaeDims sgae_dims(const TrainConfig& cfg, const CorpusVocabs& vocabs) {
  return {cfg.dim, cfg.atoms, vocabs.words.size(), vocabs.sentence_symbols.size(), cfg.attention_dim};
}

inline Checkpoint make_checkpoint(const ParameterList& params, Phase phase, std::size_t epoch, const SeededRng& rng,
                                  const TrainConfig& cfg, nlohmann::json metadata) {
  Checkpoint c;
  c.phase = phase_name(phase);
  c.epoch = epoch;
  c.rng_state = rng.state();
  c.config = detail::config_snapshot(cfg);
  c.metadata = std::move(metadata);
  c.tensors = capture(params);
  return c;
}

inline SgaeTrainResult train_sgae(const std::vector<CorpusRecord>& corpus, const CorpusVocabs& vocabs,
                                  const TrainConfig& cfg, const TrainHooks<SgaeModel>& hooks = {}) {
  cfg.validate();
  if (corpus.empty()) throw DataError("train_sgae: corpus is empty");
  for (const auto& rec : corpus) {
    if (!rec.sentence_graph) throw DataError("train_sgae: record " + rec.id + " has no sentence_graph");
    if (rec.sentence.empty()) throw DataError("train_sgae: record " + rec.id + " has no sentence");
  }
  SeededRng rng(cfg.seed);
  SgaeTrainResult out;
  out.model = SgaeModel::init(rng, sgae_dims(cfg, vocabs));
  const SgaeModel& model = out.model;
  const ParameterList params = model.parameters();
  const nlohmann::json metadata = {{"model", "sgae"}, {"dims", model.dims}, {"vocabs", vocabs.to_json()}};
  std::size_t epoch = 0;

  auto run_phase = [&](Phase phase, std::size_t epochs, bool use_dictionary) {
    GroupOptimizer opt = GroupOptimizer::over(params, cfg.adam(), cfg.clip_norm, use_dictionary);
    const bool update_main = !(use_dictionary && cfg.freeze_non_dictionary);
    auto record_loss = [&](std::size_t i) {
      const auto& rec = corpus[i];
      auto ctx = model.encode(*rec.sentence_graph, use_dictionary);
      return xe_loss(teacher_forced(model.decoder, ctx, rec.sentence), rec.sentence, cfg.sum_loss);
    };
    for (std::size_t e = 0; e < epochs; ++e, ++epoch) {
      const double lr_main = lr_at(cfg.lr_main, epoch, cfg.decay_factor, cfg.decay_every);
      const double lr_dict = lr_at(cfg.lr_dict, epoch, cfg.decay_factor, cfg.decay_every);
      const double loss =
          detail::xe_epoch(record_loss, corpus.size(), cfg.batch_size, rng, opt, lr_main, lr_dict, update_main);
      EpochLog row{epoch, phase_name(phase), lr_main, lr_dict, loss, std::nullopt};
      out.log.push_back(row);
      if (hooks.on_epoch) hooks.on_epoch(row);
    }
    if (hooks.on_phase_end) hooks.on_phase_end(phase, model);
    return make_checkpoint(params, phase, epoch, rng, cfg, metadata);
  };

  out.pretrain = run_phase(Phase::sgae_pretrain, cfg.sgae_pretrain_epochs, false);
  out.dictionary_phase = run_phase(Phase::sgae_dict, cfg.sgae_dict_epochs, true);
  return out;
}

// ---------------------------------------------------------------- captioner

enum class CaptionerPhases { xe_only, xe_rl };

struct CaptionerTrainResult {
  CaptionerModel model;
  Checkpoint xe;
  std::optional<Checkpoint> rl;
  std::vector<EpochLog> log;
};

inline CaptionerDims captioner_dims(const TrainConfig& cfg, const CorpusVocabs& vocabs) {
  return {cfg.dim, cfg.atoms, vocabs.words.size(), vocabs.image_symbols.size(), cfg.feature_dim, cfg.attention_dim};
}

/// Copies the auto-encoder's D into `dict`; a missing or mis-shaped tensor is a model error.
inline void load_shared_dictionary(const Checkpoint& sgae_ckpt, DictionaryMemory& dict) {
  const auto* stored = sgae_ckpt.find("dictionary.D");
  if (!stored) throw ModelError("auto-encoder checkpoint lacks tensor 'dictionary.D'");
  load_tensor(*stored, dict.atoms);
}

inline CaptionerTrainResult train_captioner(const std::vector<CorpusRecord>& corpus, const CorpusVocabs& vocabs,
                                            const Checkpoint& sgae_ckpt, const TrainConfig& cfg,
                                            CaptionerPhases phases = CaptionerPhases::xe_rl,
                                            const TrainHooks<CaptionerModel>& hooks = {}) {
  cfg.validate();
  if (corpus.empty()) throw DataError("train_captioner: corpus is empty");
  for (const auto& rec : corpus) {
    if (!rec.image_graph) throw DataError("train_captioner: record " + rec.id + " has no image_graph");
    if (rec.sentence.empty()) throw DataError("train_captioner: record " + rec.id + " has no sentence");
  }
  SeededRng rng(cfg.seed);
  CaptionerTrainResult out;
  out.model = CaptionerModel::init(rng, captioner_dims(cfg, vocabs));
  load_shared_dictionary(sgae_ckpt, out.model.dictionary);
  const CaptionerModel& model = out.model;
  const ParameterList params = model.parameters();
  const nlohmann::json metadata = {{"model", "captioner"}, {"dims", model.dims}, {"vocabs", vocabs.to_json()}};
  const std::size_t steps = cfg.decode_steps();
  std::size_t epoch = 0;

  {
    GroupOptimizer opt = GroupOptimizer::over(params, cfg.adam(), cfg.clip_norm, true);
    auto record_loss = [&](std::size_t i) {
      const auto& rec = corpus[i];
      auto ctx = model.encode(*rec.image_graph);
      return xe_loss(teacher_forced(model.decoder, ctx, rec.sentence), rec.sentence, cfg.sum_loss);
    };
    for (std::size_t e = 0; e < cfg.xe_epochs; ++e, ++epoch) {
      const double lr_main = lr_at(cfg.lr_main, epoch, cfg.decay_factor, cfg.decay_every);
      const double lr_dict = lr_at(cfg.lr_dict, epoch, cfg.decay_factor, cfg.decay_every);
      const double loss = detail::xe_epoch(record_loss, corpus.size(), cfg.batch_size, rng, opt, lr_main, lr_dict, true);
      EpochLog row{epoch, phase_name(Phase::captioner_xe), lr_main, lr_dict, loss, std::nullopt};
      out.log.push_back(row);
      if (hooks.on_epoch) hooks.on_epoch(row);
    }
    if (hooks.on_phase_end) hooks.on_phase_end(Phase::captioner_xe, model);
    out.xe = make_checkpoint(params, Phase::captioner_xe, epoch, rng, cfg, metadata);
  }
  if (phases == CaptionerPhases::xe_only) return out;

  const CiderReward reward = corpus_reward(corpus, cfg.cider_sigma);
  GroupOptimizer opt = GroupOptimizer::over(params, cfg.adam(), cfg.clip_norm, true);
  for (std::size_t e = 0; e < cfg.rl_epochs; ++e, ++epoch) {
    const double lr_main = cfg.rl_lr_scale * lr_at(cfg.lr_main, epoch, cfg.decay_factor, cfg.decay_every);
    const double lr_dict = cfg.rl_lr_scale * lr_at(cfg.lr_dict, epoch, cfg.decay_factor, cfg.decay_every);
    double loss_total = 0.0, reward_total = 0.0;
    for (const auto& batch : detail::epoch_batches(corpus.size(), cfg.batch_size, rng)) {
      opt.zero_grad();
      Tape tape;
      Tape::Scope scope(tape);
      std::vector<Tensor> losses;
      for (auto i : batch) {
        const auto& rec = corpus[i];
        auto ctx = model.encode(*rec.image_graph);
        auto r = scst_step(model.decoder, ctx, record_references(rec), reward, rng, steps);
        losses.push_back(r.pseudo_loss);
        loss_total += r.pseudo_loss.item();
        reward_total += r.sample_reward;
      }
      tape.backward(scale(sum_scalars(losses), 1.0 / static_cast<double>(batch.size())));
      opt.step(lr_main, lr_dict, true);
    }
    const double n = static_cast<double>(corpus.size());
    EpochLog row{epoch, phase_name(Phase::captioner_rl), lr_main, lr_dict, loss_total / n, reward_total / n};
    out.log.push_back(row);
    if (hooks.on_epoch) hooks.on_epoch(row);
  }
  if (hooks.on_phase_end) hooks.on_phase_end(Phase::captioner_rl, model);
  out.rl = make_checkpoint(params, Phase::captioner_rl, epoch, rng, cfg, metadata);
  return out;
}

}  // namespace sgae
