#include "stb/spectral.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace stb {

namespace {

constexpr size_t kDenseGate = 4096;

Eigen::MatrixXd to_dense(const SparseSymMatrix& L) {
  if (L.n > kDenseGate) {
    throw ConfigError(strf(
        "dense eigendecomposition gated at %zu nodes, got %zu", kDenseGate,
        L.n));
  }
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(L.n, L.n);
  for (size_t i = 0; i < L.n; ++i)
    for (size_t k = L.row_ptr[i]; k < L.row_ptr[i + 1]; ++k)
      D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(L.col[k])) =
          L.val[k];
  return D;
}

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solve(
    const SparseSymMatrix& L) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(to_dense(L));
  if (es.info() != Eigen::Success)
    throw NumericError("eigendecomposition failed to converge");
  return es;
}

}  // namespace

std::vector<double> laplacian_eigenvalues(const SparseSymMatrix& L) {
  const auto es = solve(L);
  std::vector<double> out(L.n);
  for (size_t i = 0; i < L.n; ++i)
    out[i] = es.eigenvalues()(static_cast<Eigen::Index>(i));
  return out;
}

NodeEmbedding spectral_embedding(const SparseSymMatrix& L, size_t M) {
  if (M == 0 || M > L.n) {
    throw ConfigError(strf("embedding rank %zu invalid for %zu nodes", M,
                           L.n));
  }
  const auto es = solve(L);
  NodeEmbedding e;
  e.provenance = NodeEmbedding::Provenance::spectral;
  e.h = Tensor({L.n, M});
  // Eigen reports eigenvalues ascending; take the top M.
  for (size_t m = 0; m < M; ++m) {
    const Eigen::Index c = static_cast<Eigen::Index>(L.n - 1 - m);
    const double lam = std::max(0.0, es.eigenvalues()(c));
    const double s = std::sqrt(lam);
    for (size_t i = 0; i < L.n; ++i)
      e.h.at({i, m}) = s * es.eigenvectors()(static_cast<Eigen::Index>(i), c);
  }
  return e;
}

Tensor smooth_eigenbasis(const SparseSymMatrix& L, size_t M) {
  if (M == 0 || M > L.n)
    throw ConfigError(strf("basis rank %zu invalid for %zu nodes", M, L.n));
  const auto es = solve(L);
  Tensor U({L.n, M});
  for (size_t m = 0; m < M; ++m)
    for (size_t i = 0; i < L.n; ++i)
      U.at({i, m}) = es.eigenvectors()(static_cast<Eigen::Index>(i),
                                       static_cast<Eigen::Index>(m));
  return U;
}

}  // namespace stb
