#pragma once

#include <string>
#include <vector>

#include "stb/nn.hpp"
#include "stb/tensor.hpp"

namespace stb {

// Widths and depths of the two-scale temporal pathway. The long window is
// cut into non-overlapping patches; both branches meet at length T_short.
struct TemporalConfig {
  size_t t_short = 12;
  size_t t_long = 48;
  size_t t_out = 12;
  size_t patch_len = 12;
  size_t d_p = 32;   // patch channel width
  size_t d_x = 32;   // attention model width
  size_t d_model = 64;
  size_t l_e = 1;
  size_t l_d = 1;
  size_t heads = 4;
  bool use_time_embeddings = false;
  size_t steps_per_day = 0;  // required when time embeddings are on
  bool use_long = true;  // drop the patch branch entirely when false

  void validate() const;
  size_t patch_count() const { return t_long / patch_len; }
  size_t fused_width() const { return (use_long ? d_p : 0) + 2 * d_x; }
};

// Optional per-step clock indices (shared across nodes) for one batch.
// Lengths must equal lead * T_short where lead is the product of the input's
// leading dims before the node axis.
struct ClockIndices {
  const std::vector<size_t>* tod = nullptr;
  const std::vector<size_t>* dow = nullptr;
  bool present() const { return tod && dow && !tod->empty(); }
};

// The multi-scale temporal network. All ops accept [..., T, F]-shaped inputs
// and treat every leading dim as batch; parameters are shared across nodes.
class TemporalPath {
 public:
  TemporalPath(ParamStore& ps, const TemporalConfig& cfg, size_t n_features,
               const Rng& rng, const std::string& prefix = "temporal");

  const TemporalConfig& config() const { return cfg_; }
  size_t n_features() const { return f_; }

  // [..., T_short, F] -> [..., T_short, d_x]: input lift plus learned
  // position embeddings (and clock embeddings when provided).
  Var lift_short(Workspace& ws, Var x_short,
                 const ClockIndices& clock = {}) const;
  // [..., T_long, F] -> [..., P, d_p]: flatten each patch, project.
  Var long_patches(Workspace& ws, Var x_long) const;
  // [..., T_long, F] -> [..., T_short, d_p]: patches mapped onto the short
  // axis with a learned linear stage over patch positions.
  Var long_projection(Workspace& ws, Var x_long) const;
  // L_E stacked self-attention layers; depth 0 is the identity.
  Var encode(Workspace& ws, Var lifted) const;
  // L_D stacked self+cross attention layers; depth 0 is the identity.
  Var decode(Workspace& ws, Var lifted, Var enc) const;
  // Concat channels at T_short, flatten time, read out to [..., d_model].
  Var fuse(Workspace& ws, Var long_aligned, Var enc, Var dec) const;
  // Whole path from raw windows to the per-node temporal readout.
  Var forward(Workspace& ws, Var x_short, Var x_long,
              const ClockIndices& clock = {}) const;

  static size_t param_count(const TemporalConfig& cfg, size_t n_features);

 private:
  TemporalConfig cfg_;
  size_t f_ = 0;
  Linear lift_;
  std::string pos_;
  std::string tod_table_, dow_table_;
  Linear patch_proj_;
  Linear align_;
  std::vector<EncoderLayer> enc_layers_;
  std::vector<DecoderLayer> dec_layers_;
  Linear readout_;
};

// Absolute forecast errors: [N, T_out] table plus the per-horizon mean over
// nodes. Rank-3 input [S, N, T_out] averages the error over samples first.
struct HorizonErrors {
  Tensor abs_error;
  std::vector<double> mean;
};
HorizonErrors horizon_error_report(const Tensor& predictions,
                                   const Tensor& targets);

}  // namespace stb
