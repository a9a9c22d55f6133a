#include "stb/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace stb {

EmbeddingModel EmbeddingModel::create(ParamStore& ps,
                                      const std::string& prefix, size_t n,
                                      size_t m, const Rng& rng) {
  EmbeddingModel e;
  e.table = prefix + ".table";
  e.n = n;
  e.m = m;
  ps.create(e.table, {n, m}, m, rng);
  e.fc1 = Linear::create(ps, prefix + ".fc1", m, m, rng);
  e.fc2.w = prefix + ".fc2.w";
  e.fc2.b = prefix + ".fc2.b";
  e.fc2.d_in = e.fc2.d_out = m;
  ps.create_const(e.fc2.w, {m, m}, 0.0);
  ps.create_const(e.fc2.b, {m}, 0.0);
  return e;
}

Var EmbeddingModel::nodes(Workspace& ws) const {
  Var E = ws[table];
  return add(E, fc2.apply(ws, relu(fc1.apply(ws, E))));
}

size_t non_edge_count(const SparseGraph& g) {
  const SparseGraph sym = g.symmetrized();
  const size_t n = sym.n_nodes();
  return n * (n - 1) / 2 - sym.edges().size();
}

std::vector<std::pair<int, int>> negative_sample(const SparseGraph& g,
                                                 size_t count,
                                                 uint64_t seed) {
  const SparseGraph sym = g.symmetrized();
  const size_t n = sym.n_nodes();
  const size_t available = non_edge_count(g);
  if (count > available) {
    throw ValidationError(
        strf("requested %zu negative pairs but the graph has only %zu "
             "non-edges",
             count, available));
  }
  std::vector<std::pair<int, int>> out;
  if (count == 0) return out;
  Rng rng(seed);

  if (count * 2 >= available) {
    // Dense regime: enumerate non-edges, then partial Fisher-Yates.
    std::vector<std::pair<int, int>> pool;
    pool.reserve(available);
    for (int u = 0; u + 1 < static_cast<int>(n); ++u)
      for (int v = u + 1; v < static_cast<int>(n); ++v)
        if (!sym.has_edge(u, v)) pool.emplace_back(u, v);
    for (size_t i = 0; i < count; ++i) {
      const size_t j = i + rng.index(pool.size() - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    return pool;
  }

  std::unordered_set<uint64_t> seen;
  out.reserve(count);
  while (out.size() < count) {
    int u = static_cast<int>(rng.index(n));
    int v = static_cast<int>(rng.index(n));
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    if (sym.has_edge(u, v)) continue;
    const uint64_t k = (static_cast<uint64_t>(static_cast<uint32_t>(u)) << 32) |
                       static_cast<uint32_t>(v);
    if (!seen.insert(k).second) continue;
    out.emplace_back(u, v);
  }
  return out;
}

Var reconstruction_loss(Var h, const SparseGraph& g,
                        const std::vector<std::pair<int, int>>& negatives,
                        double beta) {
  if (beta < 0.0)
    throw ValidationError(strf("negative-sample weight %g must be >= 0", beta));
  const SparseGraph sym = g.symmetrized();
  for (const auto& [u, v] : negatives) {
    if (sym.has_edge(u, v)) {
      throw ValidationError(
          strf("negative pair (%d, %d) is an edge of the graph", u, v));
    }
  }
  Tape& tape = *h.tape();

  std::vector<std::pair<int, int>> edge_pairs;
  Tensor targets({sym.edges().size()});
  edge_pairs.reserve(sym.edges().size());
  for (size_t i = 0; i < sym.edges().size(); ++i) {
    const Edge& e = sym.edges()[i];
    edge_pairs.emplace_back(e.u, e.v);
    targets[i] = e.w;
  }
  Var loss = sum_squares(sub(tape.input(std::move(targets)),
                             pair_dot(h, edge_pairs)));
  if (!negatives.empty() && beta > 0.0)
    loss = add(loss, scale(sum_squares(pair_dot(h, negatives)), beta));
  return loss;
}

namespace {

double edge_only_loss(const Tensor& h, const SparseGraph& sym) {
  const size_t m = h.dim(1);
  double loss = 0.0;
  for (const Edge& e : sym.edges()) {
    double dot = 0.0;
    for (size_t j = 0; j < m; ++j)
      dot += h.at({static_cast<size_t>(e.u), j}) *
             h.at({static_cast<size_t>(e.v), j});
    const double r = e.w - dot;
    loss += r * r;
  }
  return loss;
}

// Least-squares scale for seeding the table with an eigenbasis: minimizes
// sum_e (A_e - s p_e)^2 + beta sum_n (s q_n)^2 over s >= 0, where p, q are
// the basis pair products. s = 0 recovers the zero-table loss, so the
// seeded start never does worse.
double basis_scale(const Tensor& U, const SparseGraph& sym,
                   const std::vector<std::pair<int, int>>& negatives,
                   double beta) {
  const size_t m = U.dim(1);
  auto dot = [&](int a, int b) {
    double s = 0.0;
    for (size_t j = 0; j < m; ++j)
      s += U.at({static_cast<size_t>(a), j}) * U.at({static_cast<size_t>(b), j});
    return s;
  };
  double num = 0.0, den = 0.0;
  for (const Edge& e : sym.edges()) {
    const double p = dot(e.u, e.v);
    num += e.w * p;
    den += p * p;
  }
  for (const auto& [u, v] : negatives) {
    const double q = dot(u, v);
    den += beta * q * q;
  }
  if (den <= 0.0) return 0.0;
  return std::max(0.0, num / den);
}

}  // namespace

EmbedFitResult fit_embedding(const SparseGraph& g, const EmbedFitConfig& cfg) {
  const SparseGraph sym = g.symmetrized();
  const size_t n = sym.n_nodes();
  if (cfg.m == 0 || cfg.m > n)
    throw ConfigError(strf("embedding rank %zu invalid for %zu nodes", cfg.m, n));
  if (cfg.lr <= 0.0) throw ConfigError("embedding learning rate must be > 0");

  Rng rng(cfg.seed);
  EmbedFitResult result;
  EmbeddingModel model =
      EmbeddingModel::create(result.params, "embed", n, cfg.m, rng);

  const size_t negs_available = non_edge_count(sym);
  const size_t negs_wanted =
      std::min(cfg.negatives_per_edge * sym.edges().size(), negs_available);
  const Rng neg_rng = rng.fork(0x6e6567);  // per-epoch sample streams
  const std::vector<std::pair<int, int>> eval_negs =
      negs_wanted > 0
          ? negative_sample(sym, negs_wanted, rng.fork(0x6576616c).next_u64())
          : std::vector<std::pair<int, int>>{};

  if (cfg.init == EmbedFitConfig::Init::spectral) {
    const Tensor U = smooth_eigenbasis(build_laplacian(sym), cfg.m);
    const auto first_negs =
        negs_wanted > 0
            ? negative_sample(sym, negs_wanted, neg_rng.fork(1).next_u64())
            : std::vector<std::pair<int, int>>{};
    const double c = std::sqrt(basis_scale(U, sym, first_negs, cfg.beta));
    Tensor& table = result.params.get(model.table);
    for (size_t i = 0; i < table.size(); ++i) table[i] = c * U[i];
  }

  auto epoch_negatives = [&](size_t epoch) {
    return negs_wanted > 0
               ? negative_sample(sym, negs_wanted,
                                 neg_rng.fork(epoch).next_u64())
               : std::vector<std::pair<int, int>>{};
  };
  auto eval_fixed = [&]() {
    Tape tape;
    Workspace ws(tape, result.params);
    return reconstruction_loss(model.nodes(ws), sym, eval_negs, cfg.beta)
        .value()[0];
  };

  {
    Tape tape;
    Workspace ws(tape, result.params);
    result.initial_loss =
        reconstruction_loss(model.nodes(ws), sym, epoch_negatives(1),
                            cfg.beta)
            .value()[0];
  }

  result.loss_trace.push_back(eval_fixed());
  for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    try {
      const auto negs = epoch_negatives(epoch);
      Tape tape;
      Workspace ws(tape, result.params);
      Var loss = reconstruction_loss(model.nodes(ws), sym, negs, cfg.beta);
      tape.backward(loss);
      std::vector<double> theta = result.params.flatten();
      const std::vector<double> grad = ws.grad_flat();
      for (size_t i = 0; i < theta.size(); ++i)
        theta[i] -= cfg.lr * grad[i];
      result.params.unflatten(theta);
      result.loss_trace.push_back(eval_fixed());
    } catch (const NumericError& e) {
      throw TrainError(strf("embedding fit diverged at epoch %zu: %s", epoch,
                            e.what()));
    }
  }

  {
    Tape tape;
    Workspace ws(tape, result.params);
    result.embedding.h = model.nodes(ws).value();
    result.embedding.provenance = NodeEmbedding::Provenance::learned;
  }
  result.final_edge_loss = edge_only_loss(result.embedding.h, sym);
  return result;
}

}  // namespace stb
