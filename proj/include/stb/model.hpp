#pragma once

#include <utility>
#include <vector>

#include "stb/data.hpp"
#include "stb/embedding.hpp"
#include "stb/fusion.hpp"
#include "stb/temporal.hpp"

namespace stb {

// Everything the full forecaster needs beyond the dataset itself. The
// temporal and fusion blocks must agree on d_model and T_out; embed_rank is
// the width of the node table feeding the fusion stack.
struct ModelConfig {
  TemporalConfig temporal;
  FusionConfig fusion;
  size_t embed_rank = 16;
  double beta = 1.0;           // negative-pair weight in the embedding term
  double lambda_recon = 0.1;   // joint-loss weight, 0 drops the term
  size_t negatives_per_edge = 5;

  void validate() const;
};

// The composed forecaster: node embedding, two-scale temporal path, and the
// fusion stack, all parameterized in one store so the optimizer sees a
// single flat vector. Prior graphs are fixed inputs; the first one anchors
// the reconstruction term of the joint loss.
class StModel {
 public:
  StModel(const ModelConfig& cfg, size_t n_nodes, size_t n_features,
          std::vector<SparseGraph> graphs, uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }
  size_t n_nodes() const { return n_; }
  size_t n_features() const { return f_; }
  const std::vector<SparseGraph>& graphs() const { return graphs_; }
  size_t param_count() const { return params_.total_size(); }

  // [B, N, T_out] prediction (normalized scale). The workspace must wrap
  // this model's own parameter store.
  Var forecast(Workspace& ws, const Batch& batch);

  struct LossParts {
    Var total;
    Var forecast_l1;
    Var recon;  // unset when the term is disabled
    Var prediction;
    bool has_recon = false;
  };
  // Mean absolute forecast error plus lambda times the embedding
  // reconstruction term against the first prior graph.
  LossParts loss(Workspace& ws, const Batch& batch,
                 const std::vector<std::pair<int, int>>& negatives);

 private:
  ClockIndices clock_for(const Batch& batch) const;

  ModelConfig cfg_;
  size_t n_ = 0, f_ = 0;
  std::vector<SparseGraph> graphs_;
  ParamStore params_;
  EmbeddingModel embed_;
  TemporalPath temporal_;
  FusionStack fusion_;
};

}  // namespace stb
