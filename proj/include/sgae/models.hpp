#pragma once

// The two assembled networks.
//
// Sentence auto-encoder: sentence graph -> GCN -> X -> [dictionary] -> decoder.
// Captioner: image graph + RoI features -> MGCN -> V' -> dictionary -> V_hat,
//            decoder over z_m = [v'_m, v_hat_m].
//
// Tensor names (checkpoint registry):
//   gcn.symbol_embedding, gcn.g_{r,a,s,o}.{weight,bias}
//   mgcn.symbol_embedding, mgcn.fuse_{o,r,a}.{w1,w2}, mgcn.f_{r,a,s,o}.{weight,bias}
//   dictionary.D
//   decoder.* (auto-encoder) / captioner.* (captioner), see DecoderParams::collect

#include <cstddef>
#include <string>
#include <vector>

#include "json.hpp"

#include "sgae/decoder.hpp"
#include "sgae/dictionary.hpp"
#include "sgae/gcn.hpp"
#include "sgae/mgcn.hpp"

namespace sgae {

struct SgaeDims {
  std::size_t dim = 32;
  std::size_t atoms = 64;
  std::size_t vocab = 0;
  std::size_t symbols = 0;
  std::size_t attention_dim = 512;

  bool operator==(const SgaeDims&) const = default;
};

struct CaptionerDims {
  std::size_t dim = 32;
  std::size_t atoms = 64;
  std::size_t vocab = 0;
  std::size_t image_symbols = 0;
  std::size_t feature_dim = 2048;
  std::size_t attention_dim = 512;

  bool operator==(const CaptionerDims&) const = default;
};

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(SgaeDims, dim, atoms, vocab, symbols, attention_dim)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(CaptionerDims, dim, atoms, vocab, image_symbols, feature_dim, attention_dim)

struct SgaeModel {
  SgaeDims dims;
  GcnParams gcn;
  DictionaryMemory dictionary;
  DecoderParams decoder;

  static SgaeModel init(SeededRng& rng, const SgaeDims& dims) {
    SgaeModel m;
    m.dims = dims;
    m.gcn = GcnParams::init(rng, dims.dim, dims.symbols);
    m.dictionary = init_dictionary(rng, dims.dim, dims.atoms);
    m.decoder = DecoderParams::init(
        rng, {.vocab = dims.vocab, .hidden = dims.dim, .context_dim = dims.dim, .attention_dim = dims.attention_dim});
    return m;
  }

  ParameterList parameters() const {
    ParameterList out;
    gcn.collect(out, "gcn");
    dictionary.collect(out, "dictionary");
    decoder.collect(out, "decoder");
    return out;
  }

  /// X from the GCN, re-encoded through D when `use_dictionary`.
  std::vector<Tensor> embeddings(const SceneGraph& graph, bool use_dictionary) const {
    std::vector<Tensor> x = gcn_forward(gcn, graph).flatten();
    return use_dictionary ? reencode_all(dictionary, x) : x;
  }

  DecoderContext encode(const SceneGraph& graph, bool use_dictionary) const {
    return prepare_context(decoder, embeddings(graph, use_dictionary));
  }
};

struct CaptionerModel {
  CaptionerDims dims;
  MgcnParams mgcn;
  DictionaryMemory dictionary;
  DecoderParams decoder;

  static CaptionerModel init(SeededRng& rng, const CaptionerDims& dims) {
    CaptionerModel m;
    m.dims = dims;
    m.mgcn = MgcnParams::init(rng, dims.dim, dims.image_symbols, dims.feature_dim);
    m.dictionary = init_dictionary(rng, dims.dim, dims.atoms);
    m.decoder = DecoderParams::init(rng, {.vocab = dims.vocab,
                                          .hidden = dims.dim,
                                          .context_dim = 2 * dims.dim,
                                          .attention_dim = dims.attention_dim});
    return m;
  }

  ParameterList parameters() const {
    ParameterList out;
    mgcn.collect(out, "mgcn");
    dictionary.collect(out, "dictionary");
    decoder.collect(out, "captioner");
    return out;
  }

  /// z_m = [v'_m, v_hat_m] for every member of V'.
  std::vector<Tensor> embeddings(const SceneGraph& graph) const {
    std::vector<Tensor> visual = mgcn_forward(mgcn, graph).flatten();
    std::vector<Tensor> reencoded = reencode_visual(dictionary, visual);
    std::vector<Tensor> z;
    z.reserve(visual.size());
    for (std::size_t m = 0; m < visual.size(); ++m) z.push_back(concat({visual[m], reencoded[m]}));
    return z;
  }

  DecoderContext encode(const SceneGraph& graph) const { return prepare_context(decoder, embeddings(graph)); }
};

}  // namespace sgae
