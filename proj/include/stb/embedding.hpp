#pragma once

#include <utility>
#include <vector>

#include "stb/graph.hpp"
#include "stb/nn.hpp"
#include "stb/spectral.hpp"

namespace stb {

// Learnable node table refined by a two-layer residual MLP:
//   nodes() = E + FC2(relu(FC1(E))).
// FC2 starts at zero so the freshly created model reproduces its table
// exactly; the layer picks up gradient as soon as training moves it.
struct EmbeddingModel {
  std::string table;
  Linear fc1, fc2;
  size_t n = 0, m = 0;

  static EmbeddingModel create(ParamStore& ps, const std::string& prefix,
                               size_t n, size_t m, const Rng& rng);
  Var nodes(Workspace& ws) const;
};

// Number of unordered non-adjacent pairs (u != v).
size_t non_edge_count(const SparseGraph& g);

// Uniform without-replacement sample of `count` non-edges, deterministic per
// seed. Errors when the graph has fewer than `count` non-edges.
std::vector<std::pair<int, int>> negative_sample(const SparseGraph& g,
                                                 size_t count, uint64_t seed);

// sum_edges (A_uv - h_u.h_v)^2 + beta * sum_negatives (h_u.h_v)^2.
// Cost scales with |E| + |negatives|. Negatives overlapping the edge set are
// rejected.
Var reconstruction_loss(Var h, const SparseGraph& g,
                        const std::vector<std::pair<int, int>>& negatives,
                        double beta);

struct EmbedFitConfig {
  size_t m = 2;
  double beta = 1.0;
  size_t negatives_per_edge = 5;
  size_t epochs = 500;
  double lr = 0.01;
  uint64_t seed = 1;
  enum class Init { random, spectral } init = Init::random;
};

struct EmbedFitResult {
  NodeEmbedding embedding;
  ParamStore params;
  double initial_loss = 0.0;           // first epoch, before any step
  std::vector<double> loss_trace;      // fixed-negative-set evaluations
  double final_edge_loss = 0.0;        // edge term only, no negatives
};

// Full-batch gradient descent on reconstruction_loss over EmbeddingModel
// parameters; negatives resampled every epoch from the seed stream. The
// spectral option seeds the table with the smooth end of the Laplacian
// spectrum, scaled by the least-squares-optimal factor for the first epoch's
// objective, which can only improve on the zero table.
EmbedFitResult fit_embedding(const SparseGraph& g, const EmbedFitConfig& cfg);

}  // namespace stb
