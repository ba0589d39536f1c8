#pragma once

// Two-LSTM attention decoder shared by the sentence auto-encoder and the
// captioner. One step, given the previous word w and embedding set Z = {z_m}:
//
//   e       = W_word[:, w]
//   h1, c1  = LSTM1([e, mean(Z), h2_prev]; h1_prev, c1_prev)
//   beta    = softmax_m( w_a . tanh(W_z z_m + W_h h1) )
//   z_hat   = sum_m beta_m z_m
//   h2, c2  = LSTM2([h1, z_hat]; h2_prev, c2_prev)
//   P       = softmax(W_p h2 + b_p)
//
// Widths: word embedding and both hidden states are d; z has width d_z
// (d for the auto-encoder, 2d for the captioner whose z = [v', v_hat]);
// LSTM1 takes d + d_z + d inputs and LSTM2 takes d + d_z.
//
// max_len everywhere counts decoding steps, the EOS step included. Returned
// token sequences never contain EOS; `finished` records whether it was emitted.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <span>
#include <tuple>
#include <vector>

#include "sgae/layers.hpp"
#include "sgae/vocabulary.hpp"

namespace sgae {

struct DecoderConfig {
  std::size_t vocab = 0;
  std::size_t hidden = 32;
  std::size_t context_dim = 32;
  std::size_t attention_dim = 512;
  std::size_t bos = kBos;
  std::size_t eos = kEos;
};

struct DecoderParams {
  DecoderConfig config;
  Tensor word_embedding;      // [d x V]
  LstmCell attention_lstm;    // LSTM1
  LstmCell language_lstm;     // LSTM2
  Tensor attention_vector;    // w_a [A]
  Tensor context_projection;  // W_z [A x d_z]
  Tensor hidden_projection;   // W_h [A x d]
  Linear output;              // W_p [V x d], b_p [V]

  static DecoderParams init(SeededRng& rng, const DecoderConfig& cfg) {
    if (cfg.vocab == 0 || cfg.hidden == 0 || cfg.context_dim == 0 || cfg.attention_dim == 0) {
      throw ContractError("decoder dimensions must be positive");
    }
    if (cfg.bos >= cfg.vocab || cfg.eos >= cfg.vocab) throw ContractError("decoder BOS/EOS ids outside vocabulary");
    DecoderParams p;
    p.config = cfg;
    const std::size_t d = cfg.hidden;
    p.word_embedding = gaussian_weight(rng, d, cfg.vocab, d);
    p.attention_lstm = LstmCell::init(rng, d + cfg.context_dim + d, d);
    p.language_lstm = LstmCell::init(rng, d + cfg.context_dim, d);
    p.attention_vector = gaussian_weight(rng, cfg.attention_dim, 1, cfg.attention_dim);
    p.attention_vector = Tensor({cfg.attention_dim}, p.attention_vector.values(), true);
    p.context_projection = gaussian_weight(rng, cfg.attention_dim, cfg.context_dim, cfg.context_dim);
    p.hidden_projection = gaussian_weight(rng, cfg.attention_dim, d, d);
    p.output = Linear::init(rng, d, cfg.vocab);
    return p;
  }

  void collect(ParameterList& out, const std::string& prefix) const {
    out.push_back({prefix + ".word_embedding", word_embedding});
    attention_lstm.collect(out, prefix + ".lstm1");
    language_lstm.collect(out, prefix + ".lstm2");
    out.push_back({prefix + ".attention.w_a", attention_vector});
    out.push_back({prefix + ".attention.w_z", context_projection});
    out.push_back({prefix + ".attention.w_h", hidden_projection});
    output.collect(out, prefix + ".output");
  }
};

struct DecoderState {
  Tensor h1, c1, h2, c2;

  static DecoderState zeros(std::size_t hidden) {
    return {Tensor::zeros({hidden}), Tensor::zeros({hidden}), Tensor::zeros({hidden}), Tensor::zeros({hidden})};
  }
};

/// The embedding set Z with the per-sequence quantities that do not change
/// across steps: its mean and its attention projection.
struct DecoderContext {
  Tensor members;     // [M x d_z]
  Tensor members_t;   // [d_z x M]
  Tensor mean;        // [d_z]
  Tensor projected;   // [M x A], row m = W_z z_m

  std::size_t size() const { return members.dim(0); }
};

inline DecoderContext prepare_context(const DecoderParams& params, const std::vector<Tensor>& z) {
  if (z.empty()) throw ContractError("decoder embedding set must be non-empty");
  for (const auto& m : z) {
    if (m.rank() != 1 || m.numel() != params.config.context_dim) {
      throw DimensionError("decoder embedding of shape " + shape_str(m.shape()) + ", expected [" +
                           std::to_string(params.config.context_dim) + "]");
    }
  }
  DecoderContext ctx;
  ctx.members = stack(z);
  ctx.members_t = transpose(ctx.members);
  ctx.mean = mean_rows(z);
  ctx.projected = matmul(ctx.members, transpose(params.context_projection));
  return ctx;
}

struct StepOutput {
  Tensor log_probs;  // log P_t [V]
  DecoderState state;
  Tensor attention;  // beta [M]

  std::vector<double> probs() const {
    std::vector<double> p(log_probs.numel());
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::exp(log_probs[i]);
    return p;
  }
};

inline StepOutput step(const DecoderParams& params, std::size_t prev_word, const DecoderContext& ctx,
                       const DecoderState& state) {
  if (prev_word >= params.config.vocab) throw DimensionError("decoder step: word id outside vocabulary");
  if (state.h1.numel() != params.config.hidden || state.h2.numel() != params.config.hidden) {
    throw DimensionError("decoder step: state width differs from hidden size");
  }
  Tensor e = column(params.word_embedding, prev_word);
  Tensor lstm1_in = concat({e, ctx.mean, state.h2});
  auto [h1, c1] = params.attention_lstm(lstm1_in, state.h1, state.c1);
  Tensor scores = matmul(tanh(add_rowwise(ctx.projected, matmul(params.hidden_projection, h1))),
                         params.attention_vector);
  Tensor beta = softmax(scores);
  Tensor z_hat = matmul(ctx.members_t, beta);
  auto [h2, c2] = params.language_lstm(concat({h1, z_hat}), state.h2, state.c2);
  Tensor log_probs = log_softmax(params.output(h2));
  return {log_probs, {h1, c1, h2, c2}, beta};
}

/// Teacher forcing: feeds BOS, target[0], ..., target[T-2] and returns log P_t for t = 1..T.
inline std::vector<Tensor> teacher_forced(const DecoderParams& params, const DecoderContext& ctx,
                                          const std::vector<std::size_t>& target) {
  std::vector<Tensor> out;
  out.reserve(target.size());
  DecoderState state = DecoderState::zeros(params.config.hidden);
  std::size_t prev = params.config.bos;
  for (auto tok : target) {
    auto s = step(params, prev, ctx, state);
    out.push_back(s.log_probs);
    state = s.state;
    prev = tok;
  }
  return out;
}

struct Hypothesis {
  std::vector<std::size_t> tokens;  // EOS excluded
  double log_prob = 0.0;
  bool finished = false;

  bool operator==(const Hypothesis&) const = default;
};

namespace detail {

inline std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

}  // namespace detail

inline Hypothesis decode_greedy(const DecoderParams& params, const DecoderContext& ctx, std::size_t max_len) {
  NoTapeScope no_tape;
  Hypothesis hyp;
  DecoderState state = DecoderState::zeros(params.config.hidden);
  std::size_t prev = params.config.bos;
  for (std::size_t t = 0; t < max_len; ++t) {
    auto s = step(params, prev, ctx, state);
    const std::size_t tok = detail::argmax_lowest(s.log_probs.data());
    hyp.log_prob += s.log_probs[tok];
    if (tok == params.config.eos) {
      hyp.finished = true;
      break;
    }
    hyp.tokens.push_back(tok);
    state = s.state;
    prev = tok;
  }
  return hyp;
}

struct BeamOptions {
  std::size_t width = 5;
  std::size_t max_len = 16;
  bool length_normalize = false;  // rank final hypotheses by log_prob / steps
};

/// Length-synchronous beam search. Each step keeps the best `width` one-token
/// extensions of the live hypotheses, ordered by summed log-probability and
/// then lexicographically by token ids; extensions ending in EOS retire into
/// the completed pool. Hypotheses still live at max_len join the pool
/// unfinished. Returns the pool best first.
inline std::vector<Hypothesis> decode_beam(const DecoderParams& params, const DecoderContext& ctx,
                                           const BeamOptions& options) {
  if (options.width == 0) throw ContractError("decode_beam: width must be at least 1");
  NoTapeScope no_tape;
  struct Live {
    Hypothesis hyp;
    DecoderState state;
    std::size_t last;
  };
  struct Candidate {
    std::size_t parent;
    std::size_t token;
    double log_prob;
  };
  const std::size_t eos = params.config.eos;
  std::vector<Live> live{{Hypothesis{}, DecoderState::zeros(params.config.hidden), params.config.bos}};
  std::vector<Hypothesis> pool;

  auto sequence_less = [&](const Candidate& a, const Candidate& b) {
    const auto& ta = live[a.parent].hyp.tokens;
    const auto& tb = live[b.parent].hyp.tokens;
    if (ta != tb) return ta < tb;
    return a.token < b.token;
  };

  for (std::size_t t = 0; t < options.max_len && !live.empty(); ++t) {
    std::vector<Candidate> candidates;
    std::vector<DecoderState> next_states;
    for (std::size_t b = 0; b < live.size(); ++b) {
      auto s = step(params, live[b].last, ctx, live[b].state);
      next_states.push_back(s.state);
      for (std::size_t v = 0; v < params.config.vocab; ++v) {
        candidates.push_back({b, v, live[b].hyp.log_prob + s.log_probs[v]});
      }
    }
    const std::size_t keep = std::min(options.width, candidates.size());
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(keep), candidates.end(),
                      [&](const Candidate& a, const Candidate& b) {
                        if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
                        return sequence_less(a, b);
                      });
    std::vector<Live> next;
    for (std::size_t c = 0; c < keep; ++c) {
      const auto& cand = candidates[c];
      Hypothesis hyp = live[cand.parent].hyp;
      hyp.log_prob = cand.log_prob;
      if (cand.token == eos) {
        hyp.finished = true;
        pool.push_back(std::move(hyp));
      } else {
        hyp.tokens.push_back(cand.token);
        next.push_back({std::move(hyp), next_states[cand.parent], cand.token});
      }
    }
    live = std::move(next);
  }
  for (auto& l : live) pool.push_back(std::move(l.hyp));

  auto score = [&](const Hypothesis& h) {
    if (!options.length_normalize) return h.log_prob;
    const double steps = static_cast<double>(h.tokens.size() + (h.finished ? 1 : 0));
    return steps > 0 ? h.log_prob / steps : h.log_prob;
  };
  std::stable_sort(pool.begin(), pool.end(), [&](const Hypothesis& a, const Hypothesis& b) {
    const double sa = score(a), sb = score(b);
    if (sa != sb) return sa > sb;
    return std::tie(a.tokens, a.finished) < std::tie(b.tokens, b.finished);
  });
  return pool;
}

struct SampledSequence {
  Hypothesis hyp;
  std::vector<Tensor> step_log_probs;  // log P_t[s_t], recorded on the active tape
};

/// Multinomial sampling from P_t at every step.
inline SampledSequence decode_sample(const DecoderParams& params, const DecoderContext& ctx, SeededRng& rng,
                                     std::size_t max_len) {
  SampledSequence out;
  DecoderState state = DecoderState::zeros(params.config.hidden);
  std::size_t prev = params.config.bos;
  for (std::size_t t = 0; t < max_len; ++t) {
    auto s = step(params, prev, ctx, state);
    const auto probs = s.probs();
    const std::size_t tok = rng.categorical(probs);
    out.step_log_probs.push_back(pick(s.log_probs, tok));
    out.hyp.log_prob += s.log_probs[tok];
    if (tok == params.config.eos) {
      out.hyp.finished = true;
      break;
    }
    out.hyp.tokens.push_back(tok);
    state = s.state;
    prev = tok;
  }
  return out;
}

/// Log-probability the decoder assigns to a full token sequence (EOS appended when `finished`).
inline double sequence_log_prob(const DecoderParams& params, const DecoderContext& ctx,
                                const std::vector<std::size_t>& tokens, bool finished) {
  NoTapeScope no_tape;
  std::vector<std::size_t> target = tokens;
  if (finished) target.push_back(params.config.eos);
  double total = 0.0;
  DecoderState state = DecoderState::zeros(params.config.hidden);
  std::size_t prev = params.config.bos;
  for (auto tok : target) {
    auto s = step(params, prev, ctx, state);
    total += s.log_probs[tok];
    state = s.state;
    prev = tok;
  }
  return total;
}

}  // namespace sgae
