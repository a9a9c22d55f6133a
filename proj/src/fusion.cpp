#include "stb/fusion.hpp"

#include "stb/autodiff.hpp"

namespace stb {

void FusionConfig::validate() const {
  if (l == 0 || j == 0 || d_s == 0 || d_m == 0 || d_model == 0 ||
      gate_tokens == 0 || t_out == 0)
    throw ConfigError("fusion config dimensions must be positive");
  if (d_m != d_s)
    throw ConfigError(strf("gated feedback needs d_m == d_s, got %zu != %zu",
                           d_m, d_s));
  if (d_s % gate_tokens != 0)
    throw ConfigError(strf("spatial width %zu not divisible by %zu gate tokens",
                           d_s, gate_tokens));
}

FusionStack::FusionStack(ParamStore& ps, const FusionConfig& cfg,
                         size_t embed_rank, const Rng& rng,
                         const std::string& prefix)
    : cfg_(cfg), rank_(embed_rank) {
  cfg.validate();
  if (embed_rank == 0) throw ConfigError("fusion needs a positive embedding rank");
  for (size_t g = 0; g < cfg.j; ++g)
    phi_.push_back(Linear::create(ps, strf("%s.phi%zu", prefix.c_str(), g),
                                  embed_rank, cfg.d_s, rng));
  for (size_t i = 0; i < cfg.l; ++i) {
    Layer layer;
    for (size_t d = 0; d < cfg.sf_depth; ++d)
      layer.sf.push_back(RmlpBlock::create(
          ps, strf("%s.l%zu.sf%zu", prefix.c_str(), i, d), cfg.sf_width(), rng));
    for (size_t g = 0; g < cfg.j; ++g)
      layer.fc_graph.push_back(
          Linear::create(ps, strf("%s.l%zu.fc%zu", prefix.c_str(), i, g),
                         cfg.sf_width(), cfg.d_m, rng));
    for (size_t d = 0; d < cfg.mf_depth; ++d)
      layer.mf.push_back(RmlpBlock::create(
          ps, strf("%s.l%zu.mf%zu", prefix.c_str(), i, d), cfg.mf_width(), rng));
    layer.fc_merge = Linear::create(ps, strf("%s.l%zu.merge", prefix.c_str(), i),
                                    cfg.mf_width(), cfg.d_m, rng);
    layer.gate_attn = MhaBlock::create(
        ps, strf("%s.l%zu.gate", prefix.c_str(), i), cfg.token_width(), 1, rng);
    layer.gate_fc = Linear::create(ps, strf("%s.l%zu.gatefc", prefix.c_str(), i),
                                   cfg.d_s, cfg.d_s, rng);
    layers_.push_back(std::move(layer));
  }
  head_ = Linear::create(ps, prefix + ".head", cfg.head_width(), cfg.t_out, rng);
}

FusionState FusionStack::init(Workspace& ws, Var h, Var x_final) const {
  const Shape hs = h.shape();
  const Shape xs = x_final.shape();
  if (hs.size() != 2 || hs[1] != rank_)
    throw ShapeError(strf("node embedding must be [N, %zu], got %s", rank_,
                          shape_str(hs).c_str()));
  if (xs.size() < 2 || xs[xs.size() - 2] != hs[0] ||
      xs[xs.size() - 1] != cfg_.d_model)
    throw ShapeError(strf("temporal readout must be [..., %zu, %zu], got %s",
                          hs[0], cfg_.d_model, shape_str(xs).c_str()));

  Shape gshape(xs.begin(), xs.end() - 1);
  gshape.push_back(cfg_.d_s);
  FusionState state;
  for (size_t g = 0; g < cfg_.j; ++g) {
    Var g0 = phi_[g].apply(ws, h);  // [N, d_s]
    if (gshape.size() > 2) g0 = broadcast_to(g0, gshape);
    state.g.push_back(g0);
  }
  Shape mshape(xs.begin(), xs.end() - 1);
  mshape.push_back(cfg_.d_m);
  state.m = ws.tape().input(Tensor::zeros(mshape));
  state.layer = 0;
  return state;
}

Var FusionStack::single_fusion(Workspace& ws, Var x_final, Var g, Var m_prev,
                               size_t layer, size_t graph) const {
  if (layer >= cfg_.l || graph >= cfg_.j)
    throw ConfigError(strf("layer %zu / graph %zu outside %zux%zu fusion stack",
                           layer, graph, cfg_.l, cfg_.j));
  const Layer& ly = layers_[layer];
  Var z = concat_last({x_final, g, m_prev});
  for (const auto& block : ly.sf) z = block.apply(ws, z);
  return ly.fc_graph[graph].apply(ws, z);
}

Var FusionStack::multi_fusion(Workspace& ws, const std::vector<Var>& s_list,
                              size_t layer) const {
  if (layer >= cfg_.l)
    throw ConfigError(strf("layer %zu outside %zu-layer fusion stack", layer,
                           cfg_.l));
  if (s_list.size() != cfg_.j)
    throw ShapeError(strf("multi_fusion expects %zu graph results, got %zu",
                          cfg_.j, s_list.size()));
  for (const Var& s : s_list)
    if (!shape_eq(s.shape(), s_list[0].shape()))
      throw ShapeError(strf("ragged single-fusion results: %s vs %s",
                            shape_str(s_list[0].shape()).c_str(),
                            shape_str(s.shape()).c_str()));
  const Layer& ly = layers_[layer];
  Var z = s_list.size() == 1 ? s_list[0] : concat_last(s_list);
  for (const auto& block : ly.mf) z = block.apply(ws, z);
  return ly.fc_merge.apply(ws, z);
}

Var FusionStack::feedback_update(Workspace& ws, Var s, Var g,
                                 size_t layer) const {
  if (layer >= cfg_.l)
    throw ConfigError(strf("layer %zu outside %zu-layer fusion stack", layer,
                           cfg_.l));
  if (!shape_eq(s.shape(), g.shape()))
    throw ShapeError(strf("gate inputs disagree: %s vs %s",
                          shape_str(s.shape()).c_str(),
                          shape_str(g.shape()).c_str()));
  const Layer& ly = layers_[layer];
  const Shape gs = g.shape();
  // [..., N, d_s] -> [..., N, K, d_s/K]: attention mixes channel chunks
  // within one node only; every node is a separate batch slice.
  Shape tokens(gs.begin(), gs.end() - 1);
  tokens.push_back(cfg_.gate_tokens);
  tokens.push_back(cfg_.token_width());
  Var chunked = reshape(g, tokens);
  Var mixed = ly.gate_attn.apply(ws, chunked, chunked, chunked);
  Var gate = sigmoid(ly.gate_fc.apply(ws, reshape(mixed, gs)));
  return mul(s, gate);
}

FusionStack::Output FusionStack::forward(Workspace& ws, Var x_final,
                                         Var h) const {
  FusionState state = init(ws, h, x_final);
  Tape& tape = ws.tape();
  for (size_t i = 0; i < cfg_.l; ++i) {
    std::vector<Var> s_list;
    for (size_t g = 0; g < cfg_.j; ++g) {
      tape.set_context(strf("fusion layer %zu graph %zu", i + 1, g + 1));
      s_list.push_back(single_fusion(ws, x_final, state.g[g], state.m, i, g));
    }
    tape.set_context(strf("fusion layer %zu merge", i + 1));
    state.m = multi_fusion(ws, s_list, i);
    if (i + 1 < cfg_.l) {
      for (size_t g = 0; g < cfg_.j; ++g) {
        tape.set_context(strf("fusion layer %zu graph %zu gate", i + 1, g + 1));
        state.g[g] = feedback_update(ws, s_list[g], state.g[g], i);
      }
    }
    state.layer = i + 1;
  }
  tape.set_context("forecast head");
  Output out;
  out.m_final = state.m;
  Var head_in =
      cfg_.head_skip ? concat_last({state.m, x_final}) : state.m;
  out.forecast = head_.apply(ws, head_in);
  tape.set_context("");
  return out;
}

size_t FusionStack::param_count(const FusionConfig& cfg, size_t embed_rank) {
  size_t total = cfg.j * Linear::param_count(embed_rank, cfg.d_s);
  size_t per_layer = cfg.sf_depth * RmlpBlock::param_count(cfg.sf_width()) +
                     cfg.j * Linear::param_count(cfg.sf_width(), cfg.d_m) +
                     cfg.mf_depth * RmlpBlock::param_count(cfg.mf_width()) +
                     Linear::param_count(cfg.mf_width(), cfg.d_m) +
                     MhaBlock::param_count(cfg.token_width()) +
                     Linear::param_count(cfg.d_s, cfg.d_s);
  total += cfg.l * per_layer;
  total += Linear::param_count(cfg.head_width(), cfg.t_out);
  return total;
}

}  // namespace stb
