#pragma once

#include <Eigen/Dense>

#include <vector>

#include "mals/errors.hpp"
#include "mals/reshape.hpp"

namespace mals {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Operators of the simplified second-moment recursion
///   X~_{t+1} = (A~ + S~A') X~_t + (B~ + S~B') U~_t + K_BA W_t + K_AB W'_t
/// with A~ = P1 (A (x) A) Q1, B~ = P1 (B (x) B) Q2, K_BA = P1 (B (x) A),
/// K_AB = P1 (A (x) B), S~A' = P1 SA' Q1, S~B' = P1 SB' Q2.
struct LiftedOps {
  Index n = 0, m = 0;
  MatrixXd tildeA;       // nh x nh, nh = n(n+1)/2
  MatrixXd tildeB;       // nh x mh, mh = m(m+1)/2
  MatrixXd K_BA;         // nh x nm
  MatrixXd K_AB;         // nh x nm
  MatrixXd tildeSigmaA;  // nh x nh
  MatrixXd tildeSigmaB;  // nh x mh
};

inline Index half_dim(Index n) { return n * (n + 1) / 2; }

/// Lift of the nominal pair (A, B); noise blocks are zero.
inline LiftedOps lift_ops(const MatrixXd& A, const MatrixXd& B) {
  const Index n = A.rows(), m = B.cols();
  if (A.cols() != n || B.rows() != n)
    throw std::invalid_argument("lift_ops: nonconformable A, B");
  const auto s1 = symmetry_maps(n);
  const auto s2 = symmetry_maps(m);
  LiftedOps ops;
  ops.n = n;
  ops.m = m;
  ops.tildeA = s1.P * kron(A, A) * s1.Q;
  ops.tildeB = s1.P * kron(B, B) * s2.Q;
  ops.K_BA = s1.P * kron(B, A);
  ops.K_AB = s1.P * kron(A, B);
  ops.tildeSigmaA = MatrixXd::Zero(half_dim(n), half_dim(n));
  ops.tildeSigmaB = MatrixXd::Zero(half_dim(n), half_dim(m));
  return ops;
}

/// Sigma' = G(Sigma) with F(Sigma') = Sigma; equals E{Abar (x) Abar} when
/// Sigma is the covariance of vec(Abar). For SigmaA use sig (n,n,n,n),
/// for SigmaB use (n,m,n,m).
inline MatrixXd sigma_prime_from_cov(const MatrixXd& sigma, const ReshapeSig& sig) {
  const double scale = std::max(1.0, sigma.cwiseAbs().maxCoeff());
  if ((sigma - sigma.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
    throw std::invalid_argument("sigma_prime_from_cov: input must be symmetric");
  return reshape_g(sigma, sig);
}

/// (S~A', S~B') = (P1 SA' Q1, P1 SB' Q2).
inline std::pair<MatrixXd, MatrixXd> simplify_sigma(const MatrixXd& sigmaPrimeA,
                                                    const MatrixXd& sigmaPrimeB,
                                                    Index n, Index m) {
  if (sigmaPrimeA.rows() != n * n || sigmaPrimeA.cols() != n * n ||
      sigmaPrimeB.rows() != n * n || sigmaPrimeB.cols() != m * m)
    throw std::invalid_argument("simplify_sigma: shape mismatch");
  const auto s1 = symmetry_maps(n);
  const auto s2 = symmetry_maps(m);
  return {s1.P * sigmaPrimeA * s1.Q, s1.P * sigmaPrimeB * s2.Q};
}

/// First-moment recursion mu_{t+1} = A mu_t + B nu_t; returns mu_0..mu_l.
inline std::vector<VectorXd> propagate_first(const MatrixXd& A, const MatrixXd& B,
                                             const VectorXd& mu0,
                                             const std::vector<VectorXd>& nus) {
  std::vector<VectorXd> mu;
  mu.reserve(nus.size() + 1);
  mu.push_back(mu0);
  for (const auto& nu : nus) mu.push_back(A * mu.back() + B * nu);
  return mu;
}

/// Simplified second-moment recursion; sequences U, W, Wp must cover
/// t = 0..l-1. Returns X~_0..X~_l.
inline std::vector<VectorXd> propagate_second(const LiftedOps& ops, const VectorXd& X0,
                                              const std::vector<VectorXd>& U_seq,
                                              const std::vector<VectorXd>& W_seq,
                                              const std::vector<VectorXd>& Wp_seq) {
  if (U_seq.size() != W_seq.size() || U_seq.size() != Wp_seq.size())
    throw std::invalid_argument("propagate_second: sequence length mismatch");
  const MatrixXd Aeff = ops.tildeA + ops.tildeSigmaA;
  const MatrixXd Beff = ops.tildeB + ops.tildeSigmaB;
  std::vector<VectorXd> x;
  x.reserve(U_seq.size() + 1);
  x.push_back(X0);
  for (std::size_t t = 0; t < U_seq.size(); ++t)
    x.push_back(Aeff * x.back() + Beff * U_seq[t] + ops.K_BA * W_seq[t] +
                ops.K_AB * Wp_seq[t]);
  return x;
}

/// Cross second moments of exogenous inputs: W_t = vec(mu_t nu_t^T),
/// W'_t = vec(nu_t mu_t^T) for t = 0..l-1.
inline std::pair<std::vector<VectorXd>, std::vector<VectorXd>> cross_moments(
    const std::vector<VectorXd>& mu, const std::vector<VectorXd>& nus) {
  std::vector<VectorXd> w, wp;
  w.reserve(nus.size());
  wp.reserve(nus.size());
  for (std::size_t t = 0; t < nus.size(); ++t) {
    w.push_back(vec((mu[t] * nus[t].transpose()).eval()));
    wp.push_back(vec((nus[t] * mu[t].transpose()).eval()));
  }
  return {std::move(w), std::move(wp)};
}

/// True iff the two covariance-prime pairs generate identical simplified
/// second-moment dynamics and both F-reshapes are PSD (membership in the
/// equivalence class S_Sigma^+ relative to each other).
inline bool equivalence_class_check(const MatrixXd& s1a, const MatrixXd& s1b,
                                    const MatrixXd& s2a, const MatrixXd& s2b,
                                    Index n, Index m) {
  const auto p1 = simplify_sigma(s1a, s1b, n, m);
  const auto p2 = simplify_sigma(s2a, s2b, n, m);
  const double tol = 1e-10;
  if ((p1.first - p2.first).cwiseAbs().maxCoeff() >
      tol * std::max(1.0, p1.first.cwiseAbs().maxCoeff()))
    return false;
  if ((p1.second - p2.second).cwiseAbs().maxCoeff() >
      tol * std::max(1.0, p1.second.cwiseAbs().maxCoeff()))
    return false;
  auto psd = [](const MatrixXd& sPrime, const ReshapeSig& sig) {
    const MatrixXd f = reshape_f(sPrime, sig);
    const MatrixXd sym = 0.5 * (f + f.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(sym);
    return es.eigenvalues().minCoeff() >=
           -1e-8 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  };
  const ReshapeSig sigA(n, n, n, n), sigB(n, m, n, m);
  return psd(s1a, sigA) && psd(s2a, sigA) && psd(s1b, sigB) && psd(s2b, sigB);
}

}  // namespace mals
