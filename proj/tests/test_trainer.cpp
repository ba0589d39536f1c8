#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "sgae/sgae.hpp"
#include "test_util.hpp"

using namespace sgae;
using sgae::testing::TempDir;

namespace {

Tensor log_vector(std::vector<double> probs) {
  for (auto& p : probs) p = std::log(p);
  return Tensor::vector(probs);
}

struct SmallSetup {
  TrainConfig cfg;
  CorpusVocabs vocabs;
  std::vector<CorpusRecord> corpus;
};

SmallSetup small_setup(std::size_t records = 8) {
  SmallSetup s;
  s.cfg.dim = 8;
  s.cfg.atoms = 6;
  s.cfg.attention_dim = 8;
  s.cfg.feature_dim = 4;
  s.cfg.word_min_count = 1;
  s.cfg.symbol_min_count = 1;
  s.cfg.batch_size = 4;
  s.cfg.sgae_pretrain_epochs = 2;
  s.cfg.sgae_dict_epochs = 2;
  s.cfg.xe_epochs = 2;
  s.cfg.rl_epochs = 1;
  s.cfg.lr_main = 5e-3;
  s.cfg.lr_dict = 5e-3;
  s.cfg.seed = 5;
  auto raw = synthetic_corpus({.records = records, .feature_dim = 4, .seed = 3});
  s.vocabs = build_vocabs(raw, s.cfg.corpus());
  s.corpus = encode_corpus(raw, s.vocabs, s.cfg.corpus());
  return s;
}

const CheckpointTensor& tensor_named(const Checkpoint& c, const std::string& name) {
  const auto* t = c.find(name);
  if (!t) throw std::runtime_error("no tensor " + name);
  return *t;
}

std::vector<std::vector<double>> snapshot(const ParameterList& params) {
  std::vector<std::vector<double>> out;
  for (const auto& p : params) out.push_back(p.tensor.values());
  return out;
}

}  // namespace

// ---------------------------------------------------------------- losses

TEST(XeLoss, CertainTargetCostsNothing) {
  Tensor lp = Tensor::vector({0.0, -40.0, -40.0});
  EXPECT_EQ(xe_loss({lp}, {0}).item(), 0.0);
}

TEST(XeLoss, UniformDistributionCostsLogV) {
  for (std::size_t v : {2u, 5u, 17u}) {
    Tensor lp = log_vector(std::vector<double>(v, 1.0 / static_cast<double>(v)));
    EXPECT_NEAR(xe_loss({lp, lp}, {1, 0}).item(), std::log(static_cast<double>(v)), 1e-12);
  }
}

TEST(XeLoss, MeanAndSumOverSteps) {
  Tensor a = log_vector({0.5, 0.25, 0.25});
  Tensor b = log_vector({0.5, 0.25, 0.25});
  const double mean = xe_loss({a, b}, {0, 1}).item();
  const double total = xe_loss({a, b}, {0, 1}, true).item();
  EXPECT_NEAR(mean, (std::log(2.0) + std::log(4.0)) / 2.0, 1e-12);
  EXPECT_NEAR(total, std::log(2.0) + std::log(4.0), 1e-12);
}

TEST(XeLoss, PadPositionsAreIgnored) {
  Tensor a = log_vector({0.1, 0.2, 0.3, 0.4});
  Tensor b = log_vector({0.7, 0.1, 0.1, 0.1});
  EXPECT_DOUBLE_EQ(xe_loss({a, b}, {1, kPad}).item(), -std::log(0.2));
  EXPECT_THROW(xe_loss({a}, {kPad}), ContractError);
}

TEST(XeLoss, RejectsBadTargets) {
  Tensor a = log_vector({0.5, 0.5});
  EXPECT_THROW(xe_loss({a}, {2}), DimensionError);
  EXPECT_THROW(xe_loss({a, a}, {0}), DimensionError);
}

TEST(XeLoss, GradientIsMinusOneOverNAtTargets) {
  Tensor a = Tensor::vector({-1.0, -2.0, -3.0}, true);
  Tensor b = Tensor::vector({-1.5, -0.5, -2.5}, true);
  Tape tape;
  Tape::Scope scope(tape);
  tape.backward(xe_loss({a, b}, {2, 0}));
  EXPECT_EQ(sgae::testing::to_vector(a.grad()), (std::vector<double>{0.0, 0.0, -0.5}));
  EXPECT_EQ(sgae::testing::to_vector(b.grad()), (std::vector<double>{-0.5, 0.0, 0.0}));
}

// ---------------------------------------------------------------- schedule

TEST(LearningRate, StepDecayEveryFiveEpochs) {
  EXPECT_DOUBLE_EQ(lr_at(5e-4, 0), 5e-4);
  EXPECT_DOUBLE_EQ(lr_at(5e-4, 4), 5e-4);
  EXPECT_NEAR(lr_at(5e-4, 5), 4e-4, 1e-18);
  EXPECT_NEAR(lr_at(5e-4, 9), 4e-4, 1e-18);
  EXPECT_NEAR(lr_at(5e-4, 10), 3.2e-4, 1e-18);
  EXPECT_NEAR(lr_at(5e-5, 5), 4e-5, 1e-19);
  for (std::size_t e = 1; e < 60; ++e) EXPECT_LE(lr_at(5e-4, e), lr_at(5e-4, e - 1));
  EXPECT_DOUBLE_EQ(lr_at(1.0, 7, 0.5, 2), 0.125);
  EXPECT_THROW(lr_at(1.0, 1, 0.8, 0), ConfigError);
}

// ---------------------------------------------------------------- optimiser

TEST(Adam, ZeroGradientsLeaveParametersUnchanged) {
  Tensor x = Tensor::vector({1.0, -2.0, 3.0}, true);
  std::vector<Tensor> params{x};
  auto state = AdamState::for_params(params);
  const auto before = x.values();
  adam_update(state, params, 0.1);  // no gradient buffer at all
  EXPECT_EQ(x.values(), before);
  std::vector<double> zeros(3, 0.0);
  adam_update(state, params, {std::span<const double>(zeros)}, 0.1);
  EXPECT_EQ(x.values(), before);
}

TEST(Adam, FirstStepClosedForm) {
  Tensor x = Tensor::vector({1.0, 1.0, 1.0}, true);
  std::vector<Tensor> params{x};
  auto state = AdamState::for_params(params);
  const std::vector<double> g{0.3, -2.0, 1e-3};
  adam_update(state, params, {std::span<const double>(g)}, 0.01);
  for (std::size_t i = 0; i < 3; ++i) {
    // bias correction makes m_hat = g, v_hat = g^2
    EXPECT_NEAR(x[i], 1.0 - 0.01 * g[i] / (std::abs(g[i]) + 1e-8), 1e-15);
  }
}

TEST(Adam, MinimisesQuadraticBowl) {
  Tensor x = Tensor::vector({3.0, -2.0}, true);
  std::vector<Tensor> params{x};
  auto state = AdamState::for_params(params);
  std::size_t steps = 0;
  for (; steps < 500; ++steps) {
    if (std::abs(x[0]) < 1e-3 && std::abs(x[1]) < 1e-3) break;
    x.zero_grad();
    Tape tape;
    Tape::Scope scope(tape);
    tape.backward(sum(square(x)));
    adam_update(state, params, 0.1);
  }
  EXPECT_LT(steps, 500u);
}

TEST(Adam, ShapeMismatchesThrow) {
  Tensor x = Tensor::vector({1.0, 2.0}, true);
  std::vector<Tensor> params{x};
  auto state = AdamState::for_params(params);
  std::vector<double> bad(3, 1.0);
  EXPECT_THROW(adam_update(state, params, {std::span<const double>(bad)}, 0.1), DimensionError);
  EXPECT_THROW(adam_update(state, params, {}, 0.1), DimensionError);
  std::vector<Tensor> other{Tensor::vector({1.0}, true)};
  EXPECT_THROW(adam_update(state, other, 0.1), DimensionError);
}

TEST(Clip, RescalesAboveThreshold) {
  Tensor a = Tensor::vector({0.0}, true);
  Tensor b = Tensor::vector({0.0}, true);
  a.mutable_grad()[0] = 3.0;
  b.mutable_grad()[0] = 4.0;
  std::vector<Tensor> params{a, b};
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 10.0), 5.0);
  EXPECT_DOUBLE_EQ(a.grad()[0], 3.0);
  EXPECT_DOUBLE_EQ(clip_grad_norm(params, 1.0), 5.0);
  EXPECT_NEAR(a.grad()[0], 0.6, 1e-15);
  EXPECT_NEAR(b.grad()[0], 0.8, 1e-15);
  EXPECT_NEAR(global_grad_norm(params), 1.0, 1e-15);
  a.mutable_grad()[0] = 30.0;
  clip_grad_norm(params, 0.0);  // disabled
  EXPECT_DOUBLE_EQ(a.grad()[0], 30.0);
}

TEST(GroupOptimizer, DictionaryTrackIsOptional) {
  SeededRng rng(2);
  auto model = SgaeModel::init(rng, {4, 3, 8, 6, 4});
  const auto params = model.parameters();
  auto without = GroupOptimizer::over(params, {}, 5.0, false);
  auto with = GroupOptimizer::over(params, {}, 5.0, true);
  EXPECT_TRUE(without.dictionary.empty());
  ASSERT_EQ(with.dictionary.size(), 1u);
  EXPECT_EQ(with.main.size(), without.main.size());
  EXPECT_EQ(with.main.size() + 1, params.size());
}

// ---------------------------------------------------------------- checkpoints

TEST(Checkpoint, SerialisationRoundTrip) {
  SeededRng rng(4);
  auto model = SgaeModel::init(rng, {4, 3, 8, 6, 4});
  TrainConfig cfg;
  auto ckpt = make_checkpoint(model.parameters(), Phase::sgae_pretrain, 7, rng, cfg, {{"model", "sgae"}});
  const std::string bytes = serialize_checkpoint(ckpt);
  EXPECT_EQ(bytes.substr(0, 4), "SGAE");
  auto back = deserialize_checkpoint(bytes);
  EXPECT_EQ(back, ckpt);
  EXPECT_EQ(serialize_checkpoint(back), bytes);
  EXPECT_EQ(back.epoch, 7u);
  EXPECT_EQ(back.phase, phase_name(Phase::sgae_pretrain));

  SeededRng resumed(0);
  resumed.restore(back.rng_state);
  EXPECT_EQ(resumed.next_u64(), rng.next_u64());
}

TEST(Checkpoint, StoresFloat32Values) {
  SeededRng rng(4);
  auto model = SgaeModel::init(rng, {4, 3, 8, 6, 4});
  auto ckpt = make_checkpoint(model.parameters(), Phase::sgae_pretrain, 0, rng, {}, {});
  SeededRng other(99);
  auto copy = SgaeModel::init(other, model.dims);
  restore(ckpt, copy.parameters());
  const auto a = model.parameters();
  const auto b = copy.parameters();
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].tensor.numel(); ++i) {
      EXPECT_EQ(b[k].tensor[i], static_cast<double>(static_cast<float>(a[k].tensor[i])));
    }
  }
}

TEST(Checkpoint, CorruptBytesAreModelErrors) {
  SeededRng rng(4);
  auto model = SgaeModel::init(rng, {4, 3, 8, 6, 4});
  const std::string bytes = serialize_checkpoint(make_checkpoint(model.parameters(), Phase::sgae_dict, 1, rng, {}, {}));
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(deserialize_checkpoint(bad_magic), ModelError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, bytes.size() - 1)), ModelError);
  EXPECT_THROW(deserialize_checkpoint(bytes.substr(0, 40)), ModelError);
  EXPECT_THROW(deserialize_checkpoint(""), ModelError);
  std::string bad_version = bytes;
  bad_version[4] = 9;
  EXPECT_THROW(deserialize_checkpoint(bad_version), ModelError);
}

TEST(Checkpoint, FileRoundTripAndRestoreErrors) {
  TempDir dir("ckpt");
  SeededRng rng(4);
  auto model = SgaeModel::init(rng, {4, 3, 8, 6, 4});
  auto ckpt = make_checkpoint(model.parameters(), Phase::sgae_dict, 1, rng, {}, {});
  save_checkpoint(ckpt, dir.file("a.ckpt"));
  EXPECT_EQ(load_checkpoint(dir.file("a.ckpt")), ckpt);
  EXPECT_THROW(load_checkpoint(dir.file("missing.ckpt")), DataError);

  auto larger = SgaeModel::init(rng, {5, 3, 8, 6, 4});
  EXPECT_THROW(restore(ckpt, larger.parameters()), ModelError);
  Checkpoint partial = ckpt;
  partial.tensors.pop_back();
  EXPECT_THROW(restore(partial, model.parameters()), ModelError);
}

// ---------------------------------------------------------------- configuration

TEST(TrainConfig, OverlayChangesOnlyGivenKeys) {
  TrainConfig base;
  auto cfg = overlay_config(base, {{"dim", 12}, {"lr_main", 0.01}});
  EXPECT_EQ(cfg.dim, 12u);
  EXPECT_DOUBLE_EQ(cfg.lr_main, 0.01);
  cfg.dim = base.dim;
  cfg.lr_main = base.lr_main;
  EXPECT_EQ(cfg, base);
}

TEST(TrainConfig, OverlayRejectsBadInput) {
  TrainConfig base;
  EXPECT_THROW(overlay_config(base, {{"dimension", 3}}), ConfigError);
  EXPECT_THROW(overlay_config(base, {{"dim", "big"}}), ConfigError);
  EXPECT_THROW(overlay_config(base, {{"dim", {1, 2}}}), ConfigError);
  EXPECT_THROW(overlay_config(base, nlohmann::json::array()), ConfigError);
  EXPECT_THROW(overlay_config(base, {{"lr_main", 0.0}}), ConfigError);
}

TEST(TrainConfig, ValidateRejectsOutOfRangeValues) {
  auto expect_invalid = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    EXPECT_THROW(c.validate(), ConfigError);
  };
  expect_invalid([](TrainConfig& c) { c.lr_main = -1.0; });
  expect_invalid([](TrainConfig& c) { c.lr_dict = -1e-5; });
  expect_invalid([](TrainConfig& c) { c.decay_factor = 1.5; });
  expect_invalid([](TrainConfig& c) { c.decay_every = 0; });
  expect_invalid([](TrainConfig& c) { c.batch_size = 0; });
  expect_invalid([](TrainConfig& c) { c.atoms = 0; });
  expect_invalid([](TrainConfig& c) { c.adam_beta2 = 1.0; });
  TrainConfig frozen;
  frozen.lr_dict = 0.0;
  EXPECT_NO_THROW(frozen.validate());
  EXPECT_EQ(frozen.decode_steps(), frozen.max_len + 1);
}

// ---------------------------------------------------------------- training loops

TEST(EpochBatches, PartitionAShuffledIndexSet) {
  SeededRng rng(1);
  auto batches = detail::epoch_batches(10, 4, rng);
  ASSERT_EQ(batches.size(), 3u);
  EXPECT_EQ(batches[2].size(), 2u);
  std::set<std::size_t> seen;
  for (const auto& b : batches) seen.insert(b.begin(), b.end());
  EXPECT_EQ(seen.size(), 10u);
}

TEST(TrainSgae, ZeroEpochsReturnsInitialisation) {
  auto s = small_setup();
  s.cfg.sgae_pretrain_epochs = 0;
  s.cfg.sgae_dict_epochs = 0;
  auto result = train_sgae(s.corpus, s.vocabs, s.cfg);
  SeededRng rng(s.cfg.seed);
  auto init = SgaeModel::init(rng, sgae_dims(s.cfg, s.vocabs));
  EXPECT_EQ(result.pretrain.tensors, capture(init.parameters()));
  EXPECT_EQ(result.dictionary_phase.tensors, capture(init.parameters()));
  EXPECT_TRUE(result.log.empty());
}

TEST(TrainSgae, PretrainingNeverTouchesDictionary) {
  auto s = small_setup();
  SeededRng rng(s.cfg.seed);
  auto init = SgaeModel::init(rng, sgae_dims(s.cfg, s.vocabs));
  auto result = train_sgae(s.corpus, s.vocabs, s.cfg);
  EXPECT_EQ(tensor_named(result.pretrain, "dictionary.D"), capture_tensor("dictionary.D", init.dictionary.atoms));
  EXPECT_NE(tensor_named(result.pretrain, "decoder.output.weight").values,
            capture_tensor("x", init.decoder.output.weight).values);
  EXPECT_NE(tensor_named(result.dictionary_phase, "dictionary.D"), tensor_named(result.pretrain, "dictionary.D"));
}

TEST(TrainSgae, ZeroDictionaryRateFreezesDictionary) {
  auto s = small_setup();
  s.cfg.lr_dict = 0.0;
  SeededRng rng(s.cfg.seed);
  auto init = SgaeModel::init(rng, sgae_dims(s.cfg, s.vocabs));
  auto result = train_sgae(s.corpus, s.vocabs, s.cfg);
  EXPECT_EQ(tensor_named(result.dictionary_phase, "dictionary.D"),
            capture_tensor("dictionary.D", init.dictionary.atoms));
}

TEST(TrainSgae, FreezeVariantUpdatesOnlyDictionaryInSecondPhase) {
  auto s = small_setup();
  s.cfg.freeze_non_dictionary = true;
  auto result = train_sgae(s.corpus, s.vocabs, s.cfg);
  for (const auto& t : result.pretrain.tensors) {
    const auto& after = tensor_named(result.dictionary_phase, t.name);
    if (t.name == "dictionary.D") {
      EXPECT_NE(after, t);
    } else {
      EXPECT_EQ(after, t) << t.name;
    }
  }
}

TEST(TrainSgae, DeterministicAndGloballyCounted) {
  auto s = small_setup();
  std::vector<Phase> ends;
  TrainHooks<SgaeModel> hooks;
  hooks.on_phase_end = [&](Phase p, const SgaeModel&) { ends.push_back(p); };
  auto a = train_sgae(s.corpus, s.vocabs, s.cfg, hooks);
  auto b = train_sgae(s.corpus, s.vocabs, s.cfg);
  EXPECT_EQ(serialize_checkpoint(a.pretrain), serialize_checkpoint(b.pretrain));
  EXPECT_EQ(serialize_checkpoint(a.dictionary_phase), serialize_checkpoint(b.dictionary_phase));
  EXPECT_EQ(ends, (std::vector<Phase>{Phase::sgae_pretrain, Phase::sgae_dict}));
  ASSERT_EQ(a.log.size(), 4u);
  for (std::size_t e = 0; e < 4; ++e) EXPECT_EQ(a.log[e].epoch, e);
  EXPECT_EQ(a.pretrain.epoch, 2u);
  EXPECT_EQ(a.dictionary_phase.epoch, 4u);
  EXPECT_EQ(log_csv(a.log).substr(0, 40), "epoch,phase,lr_main,lr_dict,loss,reward_");
}

TEST(TrainSgae, RejectsUnusableCorpora) {
  auto s = small_setup();
  EXPECT_THROW(train_sgae({}, s.vocabs, s.cfg), DataError);
  auto broken = s.corpus;
  broken[1].sentence_graph.reset();
  EXPECT_THROW(train_sgae(broken, s.vocabs, s.cfg), DataError);
  s.cfg.batch_size = 0;
  EXPECT_THROW(train_sgae(s.corpus, s.vocabs, s.cfg), ConfigError);
}

TEST(TrainSgae, EndToEndGradientsMatchFiniteDifferences) {
  SeededRng rng(21);
  auto model = SgaeModel::init(rng, {.dim = 4, .atoms = 3, .vocab = 8, .symbols = 7, .attention_dim = 4});
  SceneGraph g;
  g.objects = {{4, {6}, std::nullopt}, {5, {}, std::nullopt}};
  g.relationships = {{0, 1, 4, std::nullopt}};
  const std::vector<std::size_t> target{4, 6, 5, kEos};
  const auto params = tensors_of(model.parameters());
  auto loss = [&] { return xe_loss(teacher_forced(model.decoder, model.encode(g, true), target), target); };
  auto report = finite_diff_check(loss, params);
  EXPECT_LE(report.max_rel_error, 1e-4) << report.worst_tensor << "[" << report.worst_index << "]";
  EXPECT_GT(report.checked, 300u);
}

// ---------------------------------------------------------------- self-critical updates

TEST(Scst, PseudoLossScalesSampleLogProbability) {
  SeededRng rng(6);
  auto model = SgaeModel::init(rng, {4, 3, 8, 6, 4});
  SceneGraph g;
  g.objects = {{4, {}, std::nullopt}};
  auto ctx = model.encode(g, false);
  RewardFn length_reward = [](const Tokens& t, const std::vector<Tokens>&) { return static_cast<double>(t.size()); };
  Tape tape;
  Tape::Scope scope(tape);
  auto r = scst_step(model.decoder, ctx, {{4}}, length_reward, rng, 5);
  EXPECT_DOUBLE_EQ(r.advantage, r.sample_reward - r.greedy_reward);
  EXPECT_NEAR(r.pseudo_loss.item(), -r.advantage * r.sample.log_prob, 1e-9);
  EXPECT_THROW(scst_step(model.decoder, ctx, {}, length_reward, rng, 5), ContractError);
}

TEST(Scst, ConstantRewardLeavesParametersUnchanged) {
  auto s = small_setup();
  SeededRng rng(8);
  auto model = CaptionerModel::init(rng, captioner_dims(s.cfg, s.vocabs));
  const auto params = model.parameters();
  const auto before = snapshot(params);
  auto opt = GroupOptimizer::over(params, s.cfg.adam(), s.cfg.clip_norm, true);
  RewardFn constant = [](const Tokens&, const std::vector<Tokens>&) { return 0.7; };
  for (int step = 0; step < 3; ++step) {
    opt.zero_grad();
    Tape tape;
    Tape::Scope scope(tape);
    std::vector<Tensor> losses;
    for (const auto& rec : s.corpus) {
      auto r = scst_step(model.decoder, model.encode(*rec.image_graph), record_references(rec), constant, rng, 6);
      EXPECT_EQ(r.advantage, 0.0);
      losses.push_back(r.pseudo_loss);
    }
    tape.backward(sum_scalars(losses));
    EXPECT_EQ(global_grad_norm(tensors_of(params)), 0.0);
    opt.step(0.1, 0.1);
  }
  EXPECT_EQ(snapshot(params), before);
}

// ---------------------------------------------------------------- captioner

TEST(TrainCaptioner, StartsFromSharedDictionary) {
  auto s = small_setup();
  auto sgae = train_sgae(s.corpus, s.vocabs, s.cfg);
  s.cfg.xe_epochs = 0;
  auto result = train_captioner(s.corpus, s.vocabs, sgae.dictionary_phase, s.cfg, CaptionerPhases::xe_only);
  EXPECT_FALSE(result.rl.has_value());
  EXPECT_EQ(tensor_named(result.xe, "dictionary.D"), tensor_named(sgae.dictionary_phase, "dictionary.D"));
}

TEST(TrainCaptioner, MissingDictionaryIsModelError) {
  auto s = small_setup();
  Checkpoint empty;
  EXPECT_THROW(train_captioner(s.corpus, s.vocabs, empty, s.cfg), ModelError);
  DictionaryMemory dict;
  EXPECT_THROW(load_shared_dictionary(empty, dict), ModelError);
}

TEST(TrainCaptioner, RlPhaseLogsRewardAndContinuesEpochCount) {
  auto s = small_setup();
  auto sgae = train_sgae(s.corpus, s.vocabs, s.cfg);
  auto result = train_captioner(s.corpus, s.vocabs, sgae.dictionary_phase, s.cfg);
  ASSERT_TRUE(result.rl.has_value());
  ASSERT_EQ(result.log.size(), 3u);
  EXPECT_FALSE(result.log[1].reward_mean.has_value());
  EXPECT_TRUE(result.log[2].reward_mean.has_value());
  EXPECT_EQ(result.log[2].epoch, 2u);
  EXPECT_EQ(result.rl->phase, phase_name(Phase::captioner_rl));
  auto again = train_captioner(s.corpus, s.vocabs, sgae.dictionary_phase, s.cfg);
  EXPECT_EQ(serialize_checkpoint(*again.rl), serialize_checkpoint(*result.rl));
}
