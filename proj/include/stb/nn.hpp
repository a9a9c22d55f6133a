#pragma once

#include <string>
#include <vector>

#include "stb/param_store.hpp"

namespace stb {

// Affine map on the trailing dimension: y = x.w + b.
struct Linear {
  std::string w, b;
  size_t d_in = 0, d_out = 0;

  static Linear create(ParamStore& ps, const std::string& prefix, size_t d_in,
                       size_t d_out, const Rng& rng);
  Var apply(Workspace& ws, Var x) const;
  static size_t param_count(size_t d_in, size_t d_out) {
    return d_in * d_out + d_out;
  }
};

struct LayerNormBlock {
  std::string gain, bias;
  size_t d = 0;
  double eps = 1e-5;

  static LayerNormBlock create(ParamStore& ps, const std::string& prefix,
                               size_t d);
  Var apply(Workspace& ws, Var x) const;
  static size_t param_count(size_t d) { return 2 * d; }
};

// Z -> FC2(relu(FC1(Z)) + Z); the residual joins before the second map.
struct RmlpBlock {
  Linear fc1, fc2;
  size_t d = 0;

  static RmlpBlock create(ParamStore& ps, const std::string& prefix, size_t d,
                          const Rng& rng);
  Var apply(Workspace& ws, Var z) const;
  static size_t param_count(size_t d) { return 2 * Linear::param_count(d, d); }
};

// Scaled dot-product attention, `heads` heads over the trailing model dim.
// Query/key/value inputs share the model width d; per-head width d/heads.
struct MhaBlock {
  Linear wq, wk, wv, wo;
  size_t d = 0, heads = 1;

  static MhaBlock create(ParamStore& ps, const std::string& prefix, size_t d,
                         size_t heads, const Rng& rng);
  // q: [..., T_q, d]; k, v: [..., T_k, d] with equal leading dims.
  Var apply(Workspace& ws, Var q, Var k, Var v) const;
  static size_t param_count(size_t d) { return 4 * Linear::param_count(d, d); }
};

// Self-attention then feature block, post-norm residuals:
//   u1 = LN1(x + SelfMHA(x)); out = LN2(u1 + RMLP(u1)).
struct EncoderLayer {
  MhaBlock attn;
  RmlpBlock rmlp;
  LayerNormBlock ln1, ln2;

  static EncoderLayer create(ParamStore& ps, const std::string& prefix,
                             size_t d, size_t heads, const Rng& rng);
  Var apply(Workspace& ws, Var x) const;
  static size_t param_count(size_t d) {
    return MhaBlock::param_count(d) + RmlpBlock::param_count(d) +
           2 * LayerNormBlock::param_count(d);
  }
};

// Self-attention, cross-attention against the encoder output, feature block;
// post-norm residual after each stage.
struct DecoderLayer {
  MhaBlock self_attn, cross_attn;
  RmlpBlock rmlp;
  LayerNormBlock ln1, ln2, ln3;

  static DecoderLayer create(ParamStore& ps, const std::string& prefix,
                             size_t d, size_t heads, const Rng& rng);
  Var apply(Workspace& ws, Var x, Var enc) const;
  static size_t param_count(size_t d) {
    return 2 * MhaBlock::param_count(d) + RmlpBlock::param_count(d) +
           3 * LayerNormBlock::param_count(d);
  }
};

}  // namespace stb
