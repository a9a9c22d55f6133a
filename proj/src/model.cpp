#include "stb/model.hpp"

#include "stb/autodiff.hpp"

namespace stb {

void ModelConfig::validate() const {
  temporal.validate();
  fusion.validate();
  if (temporal.d_model != fusion.d_model)
    throw ConfigError(strf("temporal d_model %zu != fusion d_model %zu",
                           temporal.d_model, fusion.d_model));
  if (temporal.t_out != fusion.t_out)
    throw ConfigError(strf("temporal t_out %zu != fusion t_out %zu",
                           temporal.t_out, fusion.t_out));
  if (embed_rank == 0) throw ConfigError("embed_rank must be positive");
  if (lambda_recon < 0) throw ConfigError("lambda_recon must be >= 0");
  if (beta < 0) throw ConfigError("beta must be >= 0");
}

namespace {

const ModelConfig& checked(const ModelConfig& cfg, size_t n_nodes,
                           size_t n_features,
                           const std::vector<SparseGraph>& graphs) {
  cfg.validate();
  if (n_nodes == 0) throw ConfigError("model needs at least one node");
  if (n_features == 0) throw ConfigError("model needs at least one feature");
  if (graphs.size() != cfg.fusion.j)
    throw ConfigError(strf("configured for %zu prior graphs, got %zu",
                           cfg.fusion.j, graphs.size()));
  for (size_t j = 0; j < graphs.size(); ++j)
    if (graphs[j].n_nodes() != n_nodes)
      throw ConfigError(strf("graph %zu has %zu nodes, series has %zu", j,
                             graphs[j].n_nodes(), n_nodes));
  return cfg;
}

}  // namespace

StModel::StModel(const ModelConfig& cfg, size_t n_nodes, size_t n_features,
                 std::vector<SparseGraph> graphs, uint64_t seed)
    : cfg_(checked(cfg, n_nodes, n_features, graphs)),
      n_(n_nodes),
      f_(n_features),
      graphs_(std::move(graphs)),
      embed_(EmbeddingModel::create(params_, "embed", n_nodes, cfg.embed_rank,
                                    Rng(seed).fork(fnv1a("embed")))),
      temporal_(params_, cfg.temporal, n_features,
                Rng(seed).fork(fnv1a("temporal"))),
      fusion_(params_, cfg.fusion, cfg.embed_rank,
              Rng(seed).fork(fnv1a("fusion"))) {}

ClockIndices StModel::clock_for(const Batch& batch) const {
  if (!cfg_.temporal.use_time_embeddings) return {};
  if (batch.tod.empty())
    throw ConfigError("time embeddings enabled but the batch carries no clock");
  if (batch.steps_per_day != cfg_.temporal.steps_per_day)
    throw ConfigError(strf("batch has %zu steps per day, config expects %zu",
                           batch.steps_per_day, cfg_.temporal.steps_per_day));
  return {&batch.tod, &batch.dow};
}

Var StModel::forecast(Workspace& ws, const Batch& batch) {
  return loss(ws, batch, {}).prediction;
}

StModel::LossParts StModel::loss(
    Workspace& ws, const Batch& batch,
    const std::vector<std::pair<int, int>>& negatives) {
  if (&ws.params() != &params_)
    throw ConfigError("workspace wraps a different parameter store");
  if (batch.size() == 0) throw ValidationError("empty batch");
  if (batch.x_short.rank() < 3 || batch.x_short.dim(batch.x_short.rank() - 3) != n_)
    throw ShapeError(strf("batch built for %zu nodes, model has %zu",
                          batch.x_short.rank() < 3
                              ? size_t(0)
                              : batch.x_short.dim(batch.x_short.rank() - 3),
                          n_));
  Tape& tape = ws.tape();
  Var xs = tape.input(batch.x_short);
  Var xl = tape.input(batch.x_long);
  Var h = embed_.nodes(ws);
  tape.set_context("temporal path");
  Var x_final = temporal_.forward(ws, xs, xl, clock_for(batch));
  FusionStack::Output out = fusion_.forward(ws, x_final, h);

  LossParts parts;
  parts.prediction = out.forecast;
  tape.set_context("forecast loss");
  Var target = tape.input(batch.target);
  parts.forecast_l1 = mean_abs(sub(out.forecast, target));
  parts.total = parts.forecast_l1;
  if (cfg_.lambda_recon > 0) {
    tape.set_context("embedding reconstruction");
    parts.recon = reconstruction_loss(h, graphs_[0], negatives, cfg_.beta);
    parts.total = add(parts.forecast_l1, scale(parts.recon, cfg_.lambda_recon));
    parts.has_recon = true;
  }
  tape.set_context("");
  return parts;
}

}  // namespace stb
