#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <vector>

namespace mals {

template <typename Scalar>
using MatX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VecX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Eigen::Index;

/// Column-major vectorization: vec(M) = (m11 m21 ... mp1 m12 ...)^T.
template <typename Derived>
VecX<typename Derived::Scalar> vec(const Eigen::MatrixBase<Derived>& m) {
  VecX<typename Derived::Scalar> out(m.size());
  Index k = 0;
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i) out(k++) = m(i, j);
  return out;
}

/// Inverse of vec for a p x q target shape.
template <typename Derived>
MatX<typename Derived::Scalar> unvec(const Eigen::MatrixBase<Derived>& v,
                                     Index p, Index q) {
  if (v.rows() != p * q || v.cols() != 1)
    throw std::invalid_argument("unvec: vector length does not match p*q");
  MatX<typename Derived::Scalar> out(p, q);
  for (Index j = 0; j < q; ++j)
    for (Index i = 0; i < p; ++i) out(i, j) = v(j * p + i);
  return out;
}

/// Kronecker product A (x) B: block (i,j) of the result is A(i,j)*B.
template <typename DerivedA, typename DerivedB>
MatX<typename DerivedA::Scalar> kron(const Eigen::MatrixBase<DerivedA>& a,
                                     const Eigen::MatrixBase<DerivedB>& b) {
  MatX<typename DerivedA::Scalar> out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < a.cols(); ++j)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

/// Block signature for the F/G reshaping operators: a matrix of m x n
/// blocks, each block p x q.
struct ReshapeSig {
  Index m, n, p, q;
  ReshapeSig(Index m_, Index n_, Index p_, Index q_) : m(m_), n(n_), p(p_), q(q_) {
    if (m < 1 || n < 1 || p < 1 || q < 1)
      throw std::invalid_argument("ReshapeSig: all dimensions must be >= 1");
  }
};

/// F: R^{mp x nq} -> R^{mn x pq}. Row (j-1)m+i of the output (1-based)
/// is vec of block (i,j), so blocks are walked in column-major order.
/// Pure index permutation; no arithmetic on the entries.
template <typename Derived>
MatX<typename Derived::Scalar> reshape_f(const Eigen::MatrixBase<Derived>& b,
                                         const ReshapeSig& sig) {
  if (b.rows() != sig.m * sig.p || b.cols() != sig.n * sig.q)
    throw std::invalid_argument("reshape_f: input shape does not match signature");
  MatX<typename Derived::Scalar> out(sig.m * sig.n, sig.p * sig.q);
  for (Index j = 0; j < sig.n; ++j)
    for (Index i = 0; i < sig.m; ++i) {
      const Index row = j * sig.m + i;
      for (Index jj = 0; jj < sig.q; ++jj)
        for (Index ii = 0; ii < sig.p; ++ii)
          out(row, jj * sig.p + ii) = b(i * sig.p + ii, j * sig.q + jj);
    }
  return out;
}

/// G: R^{mn x pq} -> R^{mp x nq}, the two-sided inverse of F.
/// Block (i,j) of the output is unvec of row (j-1)m+i of the input.
template <typename Derived>
MatX<typename Derived::Scalar> reshape_g(const Eigen::MatrixBase<Derived>& b,
                                         const ReshapeSig& sig) {
  if (b.rows() != sig.m * sig.n || b.cols() != sig.p * sig.q)
    throw std::invalid_argument("reshape_g: input shape does not match signature");
  MatX<typename Derived::Scalar> out(sig.m * sig.p, sig.n * sig.q);
  for (Index j = 0; j < sig.n; ++j)
    for (Index i = 0; i < sig.m; ++i) {
      const Index row = j * sig.m + i;
      for (Index jj = 0; jj < sig.q; ++jj)
        for (Index ii = 0; ii < sig.p; ++ii)
          out(i * sig.p + ii, j * sig.q + jj) = b(row, jj * sig.p + ii);
    }
  return out;
}

/// Symmetry elimination/duplication maps for vectorized symmetric
/// second moments. With vec index (j-1)n+i (1-based), P removes the
/// upper-triangle rows (i < j), T redirects them onto their lower
/// mirrors, and Q = T with those columns removed, so T = Q*P and
/// P*Q = I exactly.
template <typename Scalar = double>
struct SymmetryMapsT {
  Index dim;
  MatX<Scalar> P;  // n(n+1)/2 x n^2
  MatX<Scalar> Q;  // n^2 x n(n+1)/2
  MatX<Scalar> T;  // n^2 x n^2
};

using SymmetryMaps = SymmetryMapsT<double>;

template <typename Scalar = double>
SymmetryMapsT<Scalar> symmetry_maps(Index n) {
  if (n < 1) throw std::invalid_argument("symmetry_maps: n must be >= 1");
  const Index full = n * n;
  const Index half = n * (n + 1) / 2;

  // 0-based: vec index j*n+i holds entry (i,j); kept indices have i >= j.
  std::vector<Index> kept;
  kept.reserve(half);
  std::vector<Index> mirror(full);
  for (Index j = 0; j < n; ++j)
    for (Index i = 0; i < n; ++i) {
      const Index idx = j * n + i;
      mirror[idx] = (i < j) ? i * n + j : idx;
      if (i >= j) kept.push_back(idx);
    }

  SymmetryMapsT<Scalar> maps;
  maps.dim = n;
  maps.P = MatX<Scalar>::Zero(half, full);
  maps.T = MatX<Scalar>::Zero(full, full);
  maps.Q = MatX<Scalar>::Zero(full, half);
  for (Index r = 0; r < half; ++r) maps.P(r, kept[r]) = Scalar(1);
  for (Index idx = 0; idx < full; ++idx) maps.T(idx, mirror[idx]) = Scalar(1);
  for (Index c = 0; c < half; ++c) maps.Q.col(c) = maps.T.col(kept[c]);
  return maps;
}

}  // namespace mals
