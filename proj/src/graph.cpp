#include "stb/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

namespace stb {

SparseGraph::SparseGraph(size_t n_nodes, std::vector<Edge> edges,
                         bool directed)
    : n_(n_nodes), edges_(std::move(edges)), directed_(directed) {
  if (n_ == 0) throw ValidationError("graph must have at least one node");
  for (Edge& e : edges_) {
    if (e.u < 0 || e.v < 0 || static_cast<size_t>(e.u) >= n_ ||
        static_cast<size_t>(e.v) >= n_) {
      throw ValidationError(strf("edge (%d, %d) out of range for %zu nodes",
                                 e.u, e.v, n_));
    }
    if (e.u == e.v)
      throw ValidationError(strf("self edge at node %d", e.u));
    if (!std::isfinite(e.w) || e.w < 0.0) {
      throw ValidationError(strf("edge (%d, %d) has invalid weight %g", e.u,
                                 e.v, e.w));
    }
    if (!directed_ && e.u > e.v) std::swap(e.u, e.v);
  }
  for (const Edge& e : edges_) {
    if (!edge_keys_.insert(key(e.u, e.v)).second)
      throw ValidationError(strf("duplicate edge (%d, %d)", e.u, e.v));
  }
}

uint64_t SparseGraph::key(int u, int v) const {
  return (static_cast<uint64_t>(static_cast<uint32_t>(u)) << 32) |
         static_cast<uint32_t>(v);
}

bool SparseGraph::has_edge(int u, int v) const {
  if (!directed_ && u > v) std::swap(u, v);
  return edge_keys_.count(key(u, v)) > 0;
}

double SparseGraph::total_weight() const {
  double s = 0.0;
  for (const Edge& e : edges_) s += e.w;
  return s;
}

std::vector<double> SparseGraph::strengths() const {
  std::vector<double> s(n_, 0.0);
  for (const Edge& e : edges_) {
    s[static_cast<size_t>(e.u)] += e.w;
    s[static_cast<size_t>(e.v)] += e.w;
  }
  return s;
}

SparseGraph SparseGraph::symmetrized() const {
  if (!directed_) return *this;
  std::map<std::pair<int, int>, double> best;
  for (const Edge& e : edges_) {
    const auto k = e.u < e.v ? std::make_pair(e.u, e.v)
                             : std::make_pair(e.v, e.u);
    auto it = best.find(k);
    if (it == best.end())
      best.emplace(k, e.w);
    else
      it->second = std::max(it->second, e.w);
  }
  std::vector<Edge> out;
  out.reserve(best.size());
  for (const auto& [k, w] : best) out.push_back(Edge{k.first, k.second, w});
  return SparseGraph(n_, std::move(out), false);
}

SparseGraph SparseGraph::from_csv(const std::string& path, bool directed) {
  std::ifstream in(path);
  if (!in) throw ParseError(strf("cannot open graph file '%s'", path.c_str()));
  std::string line;
  if (!std::getline(in, line) || line.rfind("src,dst,weight", 0) != 0) {
    throw ParseError(strf("%s:1: expected header 'src,dst,weight'",
                          path.c_str()));
  }
  std::vector<Edge> edges;
  int max_node = -1;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    Edge e;
    char trailing = 0;
    if (std::sscanf(line.c_str(), "%d,%d,%lf%c", &e.u, &e.v, &e.w,
                    &trailing) < 3) {
      throw ParseError(strf("%s:%zu: malformed edge row '%s'", path.c_str(),
                            line_no, line.c_str()));
    }
    max_node = std::max({max_node, e.u, e.v});
    edges.push_back(e);
  }
  if (max_node < 0)
    throw ParseError(strf("%s: no edges", path.c_str()));
  return SparseGraph(static_cast<size_t>(max_node) + 1, std::move(edges),
                     directed);
}

void SparseGraph::to_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ParseError(strf("cannot write graph file '%s'", path.c_str()));
  out << "src,dst,weight\n";
  for (const Edge& e : edges_)
    out << e.u << ',' << e.v << ',' << strf("%.17g", e.w) << '\n';
}

std::vector<double> SparseSymMatrix::matvec(
    const std::vector<double>& x) const {
  if (x.size() != n)
    throw ShapeError(strf("matvec: vector length %zu vs matrix order %zu",
                          x.size(), n));
  std::vector<double> y(n, 0.0);
  for (size_t i = 0; i < n; ++i)
    for (size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k)
      y[i] += val[k] * x[col[k]];
  return y;
}

double SparseSymMatrix::quad_form(const std::vector<double>& x) const {
  const std::vector<double> y = matvec(x);
  double s = 0.0;
  for (size_t i = 0; i < n; ++i) s += x[i] * y[i];
  return s;
}

double SparseSymMatrix::row_sum(size_t i) const {
  double s = 0.0;
  for (size_t k = row_ptr[i]; k < row_ptr[i + 1]; ++k) s += val[k];
  return s;
}

SparseSymMatrix build_laplacian(const SparseGraph& g) {
  const SparseGraph sym = g.symmetrized();
  const size_t n = sym.n_nodes();

  // Ascending-neighbor adjacency per node.
  std::vector<std::vector<std::pair<size_t, double>>> adj(n);
  for (const Edge& e : sym.edges()) {
    adj[static_cast<size_t>(e.u)].emplace_back(static_cast<size_t>(e.v), e.w);
    adj[static_cast<size_t>(e.v)].emplace_back(static_cast<size_t>(e.u), e.w);
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());

  SparseSymMatrix L;
  L.n = n;
  L.row_ptr.resize(n + 1, 0);
  for (size_t i = 0; i < n; ++i) L.row_ptr[i + 1] = L.row_ptr[i] + adj[i].size() + 1;
  L.col.reserve(L.row_ptr[n]);
  L.val.reserve(L.row_ptr[n]);
  for (size_t i = 0; i < n; ++i) {
    // Degree accumulated in the same order the off-diagonals are stored, so
    // the sequential row sum cancels exactly.
    double degree = 0.0;
    for (const auto& [j, w] : adj[i]) {
      L.col.push_back(j);
      L.val.push_back(-w);
      degree += w;
    }
    L.col.push_back(i);
    L.val.push_back(degree);
  }
  return L;
}

}  // namespace stb
