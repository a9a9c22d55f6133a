#include "stb/nn.hpp"

#include <cmath>

namespace stb {

Linear Linear::create(ParamStore& ps, const std::string& prefix, size_t d_in,
                      size_t d_out, const Rng& rng) {
  Linear l;
  l.w = prefix + ".w";
  l.b = prefix + ".b";
  l.d_in = d_in;
  l.d_out = d_out;
  ps.create(l.w, {d_in, d_out}, d_in, rng);
  ps.create(l.b, {d_out}, d_in, rng);
  return l;
}

Var Linear::apply(Workspace& ws, Var x) const {
  return add_rowvec(matmul(x, ws[w]), ws[b]);
}

LayerNormBlock LayerNormBlock::create(ParamStore& ps,
                                      const std::string& prefix, size_t d) {
  LayerNormBlock n;
  n.gain = prefix + ".gain";
  n.bias = prefix + ".bias";
  n.d = d;
  ps.create_const(n.gain, {d}, 1.0);
  ps.create_const(n.bias, {d}, 0.0);
  return n;
}

Var LayerNormBlock::apply(Workspace& ws, Var x) const {
  return layer_norm(x, ws[gain], ws[bias], eps);
}

RmlpBlock RmlpBlock::create(ParamStore& ps, const std::string& prefix,
                            size_t d, const Rng& rng) {
  RmlpBlock r;
  r.fc1 = Linear::create(ps, prefix + ".fc1", d, d, rng);
  r.fc2 = Linear::create(ps, prefix + ".fc2", d, d, rng);
  r.d = d;
  return r;
}

Var RmlpBlock::apply(Workspace& ws, Var z) const {
  return fc2.apply(ws, add(relu(fc1.apply(ws, z)), z));
}

MhaBlock MhaBlock::create(ParamStore& ps, const std::string& prefix, size_t d,
                          size_t heads, const Rng& rng) {
  if (heads == 0 || d % heads != 0) {
    throw ConfigError(strf("attention width %zu not divisible by %zu heads",
                           d, heads));
  }
  MhaBlock m;
  m.wq = Linear::create(ps, prefix + ".q", d, d, rng);
  m.wk = Linear::create(ps, prefix + ".k", d, d, rng);
  m.wv = Linear::create(ps, prefix + ".v", d, d, rng);
  m.wo = Linear::create(ps, prefix + ".o", d, d, rng);
  m.d = d;
  m.heads = heads;
  return m;
}

Var MhaBlock::apply(Workspace& ws, Var q, Var k, Var v) const {
  Var Q = wq.apply(ws, q);
  Var K = wk.apply(ws, k);
  Var V = wv.apply(ws, v);
  const size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Var> head_outs;
  head_outs.reserve(heads);
  for (size_t h = 0; h < heads; ++h) {
    Var Qh = slice_last(Q, h * dh, (h + 1) * dh);
    Var Kh = slice_last(K, h * dh, (h + 1) * dh);
    Var Vh = slice_last(V, h * dh, (h + 1) * dh);
    Var scores = scale(matmul(Qh, transpose_last2(Kh)), inv_sqrt);
    head_outs.push_back(matmul(softmax_last(scores), Vh));
  }
  Var concat = heads == 1 ? head_outs[0] : concat_last(head_outs);
  return wo.apply(ws, concat);
}

EncoderLayer EncoderLayer::create(ParamStore& ps, const std::string& prefix,
                                  size_t d, size_t heads, const Rng& rng) {
  EncoderLayer e;
  e.attn = MhaBlock::create(ps, prefix + ".attn", d, heads, rng);
  e.rmlp = RmlpBlock::create(ps, prefix + ".rmlp", d, rng);
  e.ln1 = LayerNormBlock::create(ps, prefix + ".ln1", d);
  e.ln2 = LayerNormBlock::create(ps, prefix + ".ln2", d);
  return e;
}

Var EncoderLayer::apply(Workspace& ws, Var x) const {
  Var u1 = ln1.apply(ws, add(x, attn.apply(ws, x, x, x)));
  return ln2.apply(ws, add(u1, rmlp.apply(ws, u1)));
}

DecoderLayer DecoderLayer::create(ParamStore& ps, const std::string& prefix,
                                  size_t d, size_t heads, const Rng& rng) {
  DecoderLayer dl;
  dl.self_attn = MhaBlock::create(ps, prefix + ".self", d, heads, rng);
  dl.cross_attn = MhaBlock::create(ps, prefix + ".cross", d, heads, rng);
  dl.rmlp = RmlpBlock::create(ps, prefix + ".rmlp", d, rng);
  dl.ln1 = LayerNormBlock::create(ps, prefix + ".ln1", d);
  dl.ln2 = LayerNormBlock::create(ps, prefix + ".ln2", d);
  dl.ln3 = LayerNormBlock::create(ps, prefix + ".ln3", d);
  return dl;
}

Var DecoderLayer::apply(Workspace& ws, Var x, Var enc) const {
  Var v1 = ln1.apply(ws, add(x, self_attn.apply(ws, x, x, x)));
  Var v2 = ln2.apply(ws, add(v1, cross_attn.apply(ws, v1, enc, enc)));
  return ln3.apply(ws, add(v2, rmlp.apply(ws, v2)));
}

}  // namespace stb
