#pragma once

#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "stb/common.hpp"

namespace stb {

struct Edge {
  int u = 0;
  int v = 0;
  double w = 0.0;
};

// Weighted sparse adjacency over n nodes. Undirected graphs store each edge
// once with u < v; directed graphs keep (u,v) and (v,u) distinct.
class SparseGraph {
 public:
  SparseGraph(size_t n_nodes, std::vector<Edge> edges, bool directed);

  // CSV with header `src,dst,weight`. Errors name the offending line.
  static SparseGraph from_csv(const std::string& path, bool directed);
  void to_csv(const std::string& path) const;

  size_t n_nodes() const { return n_; }
  const std::vector<Edge>& edges() const { return edges_; }
  bool directed() const { return directed_; }

  bool has_edge(int u, int v) const;  // orientation-sensitive iff directed
  double total_weight() const;
  // Weighted degree per node (in+out for directed input).
  std::vector<double> strengths() const;

  // Undirected closure with w = max(w_uv, w_vu).
  SparseGraph symmetrized() const;

 private:
  uint64_t key(int u, int v) const;

  size_t n_;
  std::vector<Edge> edges_;
  bool directed_;
  std::unordered_set<uint64_t> edge_keys_;
};

// Symmetric sparse matrix in CSR form. Each row stores its off-diagonal
// entries in ascending column order followed by the diagonal entry, so a
// sequential row sum cancels exactly against the diagonal accumulated in the
// same order.
struct SparseSymMatrix {
  size_t n = 0;
  std::vector<size_t> row_ptr;
  std::vector<size_t> col;
  std::vector<double> val;

  std::vector<double> matvec(const std::vector<double>& x) const;
  double quad_form(const std::vector<double>& x) const;  // x' M x
  double row_sum(size_t i) const;  // sequential, stored order
};

// L = D - A over the symmetrized closure of g. Never materializes a dense
// matrix; rejects negative weights.
SparseSymMatrix build_laplacian(const SparseGraph& g);

}  // namespace stb
