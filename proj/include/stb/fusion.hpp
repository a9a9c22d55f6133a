#pragma once

#include <string>
#include <vector>

#include "stb/nn.hpp"
#include "stb/tensor.hpp"

namespace stb {

// Stacked spatiotemporal fusion. Each layer fuses the temporal readout with
// per-graph spatial features, merges the per-graph results, and gates the
// spatial features for the next layer. All mixing is per node; nothing in
// this module allocates anything dense over node pairs.
struct FusionConfig {
  size_t l = 3;          // fusion layers
  size_t j = 2;          // prior graphs
  size_t d_s = 64;       // spatial feature width
  size_t d_m = 64;       // fused state width; must equal d_s for the gate
  size_t d_model = 64;   // temporal readout width
  size_t gate_tokens = 4;  // K channel chunks fed to the gate attention
  size_t t_out = 12;
  size_t sf_depth = 1;   // rmlp blocks in the shared single-graph stack
  size_t mf_depth = 1;   // rmlp blocks in the multi-graph stack
  bool head_skip = true;  // output head sees [M_L || x_final]

  void validate() const;
  size_t sf_width() const { return d_model + d_s + d_m; }
  size_t mf_width() const { return j * d_m; }
  size_t token_width() const { return d_s / gate_tokens; }
  size_t head_width() const { return d_m + (head_skip ? d_model : 0); }
};

// Per-graph spatial features plus the running fused state.
struct FusionState {
  std::vector<Var> g;  // J tensors [..., N, d_s]
  Var m;               // [..., N, d_m]
  size_t layer = 0;
};

class FusionStack {
 public:
  FusionStack(ParamStore& ps, const FusionConfig& cfg, size_t embed_rank,
              const Rng& rng, const std::string& prefix = "fusion");

  const FusionConfig& config() const { return cfg_; }

  // Layer-0 state: G_0^j = phi^j(h) broadcast to x_final's leading dims,
  // M_0 = 0. h is the node embedding table [N, rank].
  FusionState init(Workspace& ws, Var h, Var x_final) const;
  // S_i^j from [x_final || g || m_prev]; the rmlp stack is shared across
  // graphs within the layer, the closing FC head is graph-specific.
  Var single_fusion(Workspace& ws, Var x_final, Var g, Var m_prev,
                    size_t layer, size_t graph) const;
  // M_i from the J single-graph results.
  Var multi_fusion(Workspace& ws, const std::vector<Var>& s_list,
                   size_t layer) const;
  // G_{i+1}^j = s (.) logistic(FC(SelfAttn over K channel chunks of g))).
  // The attention runs per node; no cross-node mixing.
  Var feedback_update(Workspace& ws, Var s, Var g, size_t layer) const;

  struct Output {
    Var m_final;
    Var forecast;  // [..., N, T_out]
  };
  Output forward(Workspace& ws, Var x_final, Var h) const;

  static size_t param_count(const FusionConfig& cfg, size_t embed_rank);

 private:
  struct Layer {
    std::vector<RmlpBlock> sf;
    std::vector<Linear> fc_graph;
    std::vector<RmlpBlock> mf;
    Linear fc_merge;
    MhaBlock gate_attn;
    Linear gate_fc;
  };

  FusionConfig cfg_;
  size_t rank_ = 0;
  std::vector<Linear> phi_;
  std::vector<Layer> layers_;
  Linear head_;
};

}  // namespace stb
