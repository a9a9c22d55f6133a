#pragma once

#include <string>
#include <vector>

#include "stb/graph.hpp"
#include "stb/tensor.hpp"

namespace stb {

struct EntropyReport {
  double h_spatial = 0.0;            // nats
  std::vector<size_t> windows;
  std::vector<double> h_temporal;    // nats, one per window
  std::vector<double> mismatch;      // |h_spatial - h_temporal|
  size_t recommended_window = 0;     // argmin mismatch
  size_t n_nodes = 0;
  size_t bins = 0;
};

// Shannon entropy of the weighted-degree distribution pi_i proportional to
// strength(i); 0 ln 0 taken as 0. Regular graphs give exactly ln N.
double spatial_entropy(const SparseGraph& g);

// Per-node equal-width histogram entropy of the last `window` values of
// x[node, :, feature], averaged over nodes. A constant (or single-valued)
// node contributes 0.
double temporal_entropy(const Tensor& x, size_t window, size_t bins,
                        size_t feature = 0);

EntropyReport mismatch_report(const SparseGraph& g, const Tensor& x,
                              const std::vector<size_t>& windows, size_t bins,
                              size_t feature = 0);

// CSV rows `window,h_spatial,h_temporal,mismatch,n_nodes`.
void write_entropy_csv(const EntropyReport& r, const std::string& path);

}  // namespace stb
