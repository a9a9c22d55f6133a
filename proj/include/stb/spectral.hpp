#pragma once

#include "stb/graph.hpp"
#include "stb/tensor.hpp"

namespace stb {

struct NodeEmbedding {
  Tensor h;  // [N, M]
  enum class Provenance { spectral, learned } provenance =
      Provenance::learned;
  size_t rank() const { return h.rank() == 2 ? h.dim(1) : 0; }
};

// All eigenvalues of L, ascending. Dense solve, desk-scale gated.
std::vector<double> laplacian_eigenvalues(const SparseSymMatrix& L);

// Rank-M truncation from the M largest-eigenvalue pairs: H = U_M sqrt(L_M).
// H H' is then the best rank-M Frobenius approximation of L.
NodeEmbedding spectral_embedding(const SparseSymMatrix& L, size_t M);

// Orthonormal eigenvectors for the M smallest eigenvalues (the smooth end of
// the spectrum); used to seed the learned embedding, where dot products
// between connected nodes should start positive.
Tensor smooth_eigenbasis(const SparseSymMatrix& L, size_t M);

}  // namespace stb
