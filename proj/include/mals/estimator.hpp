#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <tuple>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mals/errors.hpp"
#include "mals/input_design.hpp"
#include "mals/linalg.hpp"
#include "mals/moments.hpp"
#include "mals/system.hpp"

namespace mals {

/// Sample-averaged moment statistics over a batch of rollouts, plus the
/// exact input second moments of the schedule.
struct MomentEstimates {
  Index n = 0, m = 0;
  Index horizon = 0;
  long long n_r = 0;
  std::vector<VectorXd> muHat;   // t = 0..l, n-vectors
  std::vector<VectorXd> XHat;    // t = 0..l, simplified n(n+1)/2-vectors
  std::vector<VectorXd> WHat;    // t = 0..l, vec(muHat_t nu_t^T); nu_l := 0
  std::vector<VectorXd> WpHat;   // t = 0..l, vec(nu_t muHat_t^T)
  std::vector<VectorXd> U;       // t = 0..l-1, exact P2 vec(Ubar + nu nu^T)
};

namespace detail {
// Pairwise-tree summation over rollout index; the fixed reduction order
// makes aggregation bit-reproducible and permutation-stable to round-off.
inline VectorXd pairwise_sum(Index lo, Index hi,
                             const std::function<VectorXd(Index)>& leaf) {
  if (hi - lo <= 4) {
    VectorXd acc = leaf(lo);
    for (Index k = lo + 1; k < hi; ++k) acc += leaf(k);
    return acc;
  }
  const Index mid = lo + (hi - lo) / 2;
  return pairwise_sum(lo, mid, leaf) + pairwise_sum(mid, hi, leaf);
}
}  // namespace detail

/// Sample averages over the first `count` rollouts (all when count <= 0).
inline MomentEstimates aggregate(const RolloutBatch& batch, const InputSchedule& schedule,
                                 Index count = -1) {
  const Index n_r = count > 0 ? count : static_cast<Index>(batch.rollouts.size());
  if (n_r < 1 || n_r > static_cast<Index>(batch.rollouts.size()))
    throw std::invalid_argument("aggregate: empty batch or count out of range");
  const Index l = schedule.horizon();
  for (Index k = 0; k < n_r; ++k)
    if (static_cast<Index>(batch.rollouts[k].states.size()) != l + 1)
      throw std::invalid_argument("aggregate: rollout horizon mismatch with schedule");
  const Index n = batch.rollouts[0].states[0].size();
  const Index m = schedule.input_dim();
  const auto s1 = symmetry_maps(n);

  // Stack [x_t; vec(x_t x_t^T)] over all t so one tree covers everything.
  const Index per_t = n + n * n;
  auto leaf = [&](Index k) {
    const auto& states = batch.rollouts[k].states;
    VectorXd s(per_t * (l + 1));
    for (Index t = 0; t <= l; ++t) {
      s.segment(t * per_t, n) = states[t];
      s.segment(t * per_t + n, n * n) = vec((states[t] * states[t].transpose()).eval());
    }
    return s;
  };
  const VectorXd total = detail::pairwise_sum(0, n_r, leaf) / static_cast<double>(n_r);

  MomentEstimates est;
  est.n = n;
  est.m = m;
  est.horizon = l;
  est.n_r = n_r;
  est.muHat.reserve(l + 1);
  est.XHat.reserve(l + 1);
  for (Index t = 0; t <= l; ++t) {
    est.muHat.push_back(total.segment(t * per_t, n));
    est.XHat.push_back(s1.P * total.segment(t * per_t + n, n * n));
  }
  est.WHat.reserve(l + 1);
  est.WpHat.reserve(l + 1);
  for (Index t = 0; t <= l; ++t) {
    const VectorXd nu = t < l ? schedule.nus()[t] : VectorXd::Zero(m).eval();
    est.WHat.push_back(vec((est.muHat[t] * nu.transpose()).eval()));
    est.WpHat.push_back(vec((nu * est.muHat[t].transpose()).eval()));
  }
  est.U = input_second_moments(schedule);
  return est;
}

/// Analytic moments of a system under a schedule, in the same container
/// as the sampled statistics. Substituting these for the sample averages
/// makes both least-squares stages exact.
inline MomentEstimates exact_moments(const SystemModel& sys, const InputSchedule& schedule,
                                     const VectorXd& mu0, const VectorXd& X0_full) {
  const Index n = sys.n, m = sys.m, l = schedule.horizon();
  const auto s1 = symmetry_maps(n);
  auto ops = lift_ops(sys.A, sys.B);
  const MatrixXd spA = sigma_prime_from_cov(sys.SigmaA, ReshapeSig(n, n, n, n));
  const MatrixXd spB = sigma_prime_from_cov(sys.SigmaB, ReshapeSig(n, m, n, m));
  std::tie(ops.tildeSigmaA, ops.tildeSigmaB) = simplify_sigma(spA, spB, n, m);

  MomentEstimates est;
  est.n = n;
  est.m = m;
  est.horizon = l;
  est.n_r = 1;
  est.muHat = propagate_first(sys.A, sys.B, mu0, schedule.nus());
  est.U = input_second_moments(schedule);
  auto [w, wp] = cross_moments(est.muHat, schedule.nus());
  est.XHat = propagate_second(ops, (s1.P * X0_full).eval(), est.U, w, wp);
  est.WHat = std::move(w);
  est.WpHat = std::move(wp);
  const VectorXd zero = VectorXd::Zero(n * m);
  est.WHat.push_back(zero);
  est.WpHat.push_back(zero);
  return est;
}

/// Stage 1: (Ahat, Bhat) = Y Z^T (Z Z^T)^dagger from the first-moment
/// regression, plus the numerical-rank certificate of Z.
struct NominalEstimate {
  MatrixXd Ahat;
  MatrixXd Bhat;
  RankCertificate certZ;
};

inline NominalEstimate estimate_nominal(const MomentEstimates& est,
                                        const InputSchedule& schedule) {
  const Index n = est.n, m = est.m, l = est.horizon;
  if (l < 2) throw std::invalid_argument("estimate_nominal: horizon must be >= 2");
  MatrixXd y(n, l), z(n + m, l);
  for (Index t = 0; t < l; ++t) {
    y.col(l - 1 - t) = est.muHat[t + 1];
    z.col(l - 1 - t).head(n) = est.muHat[t];
    z.col(l - 1 - t).tail(m) = schedule.nus()[t];
  }
  const MatrixXd ab = y * z.transpose() * pinv((z * z.transpose()).eval());
  NominalEstimate out;
  out.Ahat = ab.leftCols(n);
  out.Bhat = ab.rightCols(m);
  out.certZ = certificate_from_singular_values("Z", singular_values(z), n + m, l, n + m);
  return out;
}

namespace detail {
/// Residuals C_{t+1} = X_{t+1} - [A~ X_t + K_BA W_t + K_AB W'_t + B~ U_t]
/// for t = 0..l-1, under the lifted nominal operators.
inline std::vector<VectorXd> stage2_residuals(const MomentEstimates& est,
                                              const LiftedOps& ops) {
  std::vector<VectorXd> c;
  c.reserve(est.horizon);
  for (Index t = 0; t < est.horizon; ++t)
    c.push_back(est.XHat[t + 1] - (ops.tildeA * est.XHat[t] + ops.K_BA * est.WHat[t] +
                                   ops.K_AB * est.WpHat[t] + ops.tildeB * est.U[t]));
  return c;
}
}  // namespace detail

/// Stage 2: (S~A'hat, S~B'hat) = C D^T (D D^T)^dagger split by columns.
struct CovarianceEstimate {
  MatrixXd tildeSigmaAhat;  // n(n+1)/2 x n(n+1)/2
  MatrixXd tildeSigmaBhat;  // n(n+1)/2 x m(m+1)/2
  RankCertificate certD;
};

inline CovarianceEstimate estimate_covariance(const MomentEstimates& est,
                                              const MatrixXd& Ahat, const MatrixXd& Bhat,
                                              const InputSchedule& schedule) {
  const Index l = est.horizon;
  const Index nh = half_dim(est.n), mh = half_dim(est.m);
  const LiftedOps ops = lift_ops(Ahat, Bhat);
  const auto resid = detail::stage2_residuals(est, ops);
  MatrixXd c(nh, l), d(nh + mh, l);
  for (Index t = 0; t < l; ++t) {
    c.col(l - 1 - t) = resid[t];
    d.col(l - 1 - t).head(nh) = est.XHat[t];
    d.col(l - 1 - t).tail(mh) = est.U[t];
  }
  const MatrixXd s = c * d.transpose() * pinv((d * d.transpose()).eval());
  CovarianceEstimate out;
  out.tildeSigmaAhat = s.leftCols(nh);
  out.tildeSigmaBhat = s.rightCols(mh);
  out.certD =
      certificate_from_singular_values("D", singular_values(d), nh + mh, l, nh + mh);
  return out;
}

/// Variance-only estimates when the noise directions are known.
struct VarianceResult {
  VectorXd sigma2hat;  // one per A direction
  VectorXd delta2hat;  // one per B direction
  bool has_negative = false;
  RankCertificate cert;

  /// Labeled postprocess: the raw least-squares values clipped at zero.
  VectorXd sigma2_clipped() const { return sigma2hat.cwiseMax(0.0); }
  VectorXd delta2_clipped() const { return delta2hat.cwiseMax(0.0); }
};

/// Known-directions estimator: regress the stage-2 residual stack on the
/// lifted directions A~_i = P1 (A_i (x) A_i) Q1 and B~_j = P1 (B_j (x) B_j) Q2.
/// The normal-equation accumulation below is algebraically C D^T (D D^T)^dagger
/// for the row-stacked regressor of vec(A~_i X_{l-1} ... A~_i X_0) blocks.
inline VarianceResult estimate_variances_known_directions(const MomentEstimates& est,
                                                          const MatrixXd& Ahat,
                                                          const MatrixXd& Bhat,
                                                          const EigenNoise& noise,
                                                          const InputSchedule& schedule) {
  const Index l = est.horizon;
  const Index nh = half_dim(est.n), mh = half_dim(est.m);
  const Index r = static_cast<Index>(noise.directionsA.size());
  const Index s = static_cast<Index>(noise.directionsB.size());
  const auto s1 = symmetry_maps(est.n);
  const auto s2 = symmetry_maps(est.m);

  std::vector<MatrixXd> liftA, liftB;
  liftA.reserve(r);
  liftB.reserve(s);
  for (const auto& dir : noise.directionsA) liftA.push_back(s1.P * kron(dir, dir) * s1.Q);
  for (const auto& dir : noise.directionsB) liftB.push_back(s1.P * kron(dir, dir) * s2.Q);

  const LiftedOps ops = lift_ops(Ahat, Bhat);
  const auto resid = detail::stage2_residuals(est, ops);

  // Accumulated cross moments: the Gram entries of the stacked regressor
  // reduce to traces against these sums.
  MatrixXd sXX = MatrixXd::Zero(nh, nh), sUU = MatrixXd::Zero(mh, mh);
  MatrixXd sUX = MatrixXd::Zero(mh, nh);
  MatrixXd sCX = MatrixXd::Zero(nh, nh), sCU = MatrixXd::Zero(nh, mh);
  for (Index t = 0; t < l; ++t) {
    sXX.noalias() += est.XHat[t] * est.XHat[t].transpose();
    sUU.noalias() += est.U[t] * est.U[t].transpose();
    sUX.noalias() += est.U[t] * est.XHat[t].transpose();
    sCX.noalias() += resid[t] * est.XHat[t].transpose();
    sCU.noalias() += resid[t] * est.U[t].transpose();
  }

  MatrixXd dd(r + s, r + s);
  VectorXd cd(r + s);
  for (Index i = 0; i < r; ++i) {
    const MatrixXd aiSxx = liftA[i] * sXX;
    for (Index j = 0; j <= i; ++j)
      dd(i, j) = dd(j, i) = (liftA[j].array() * aiSxx.array()).sum();
    for (Index j = 0; j < s; ++j)
      dd(i, r + j) = dd(r + j, i) =
          (liftB[j].array() * (liftA[i] * sUX.transpose()).array()).sum();
    cd(i) = (liftA[i].array() * sCX.array()).sum();
  }
  for (Index i = 0; i < s; ++i) {
    const MatrixXd biSuu = liftB[i] * sUU;
    for (Index j = 0; j <= i; ++j)
      dd(r + i, r + j) = dd(r + j, r + i) = (liftB[j].array() * biSuu.array()).sum();
    cd(r + i) = (liftB[i].array() * sCU.array()).sum();
  }

  const VectorXd theta = pinv(dd) * cd;
  VarianceResult out;
  out.sigma2hat = theta.head(r);
  out.delta2hat = theta.tail(s);
  out.has_negative = theta.minCoeff() < 0.0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(dd);
  VectorXd sv(r + s);
  for (Index i = 0; i < r + s; ++i) {
    const double ev = es.eigenvalues()(r + s - 1 - i);
    sv(i) = ev > 0 ? std::sqrt(ev) : 0.0;
  }
  out.cert = certificate_from_singular_values("Dvar", sv, r + s, nh * l, r + s);
  return out;
}

/// Pair index (i < j), 0-based lexicographic, over a dimension.
inline Index pair_count(Index n) { return n * (n - 1) / 2; }
inline Index pair_index(Index i, Index j, Index n) {
  // i < j, 0-based
  return i * n - i * (i + 1) / 2 + (j - i - 1);
}

/// Member of the covariance equivalence class:
///   SigmaA(alpha) = F(Q1 S~A' Q3^T + E_alpha), Q3 = D_n Q1,
///   SigmaB(beta)  = F(Q1 S~B' Q4^T + E_beta), Q4 = D_m Q2,
/// where alpha is indexed by (i<j over n, k<l over n) and beta by
/// (i<j over n, k<l over m). alpha = beta = 0 splits each unidentifiable
/// symmetric-pair sum evenly.
inline std::pair<MatrixXd, MatrixXd> covariance_family(const MatrixXd& tildeSigmaA,
                                                       const MatrixXd& tildeSigmaB,
                                                       const MatrixXd& alpha,
                                                       const MatrixXd& beta, Index n,
                                                       Index m) {
  if (alpha.rows() != pair_count(n) || alpha.cols() != pair_count(n) ||
      beta.rows() != pair_count(n) || beta.cols() != pair_count(m))
    throw std::invalid_argument("covariance_family: parameter map shape mismatch");
  const auto s1 = symmetry_maps(n);
  const auto s2 = symmetry_maps(m);
  VectorXd dn = VectorXd::Ones(n * n), dm = VectorXd::Ones(m * m);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j) dn(i * n + j) = 0.5;
  for (Index i = 0; i < m; ++i)
    for (Index j = 0; j < m; ++j)
      if (i != j) dm(i * m + j) = 0.5;
  const MatrixXd q3 = dn.asDiagonal() * s1.Q;
  const MatrixXd q4 = dm.asDiagonal() * s2.Q;

  MatrixXd primeA = s1.Q * tildeSigmaA * q3.transpose();
  MatrixXd primeB = s1.Q * tildeSigmaB * q4.transpose();
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j) {
      const Index row_p = i * n + j, row_m = j * n + i;
      for (Index k = 0; k < n; ++k)
        for (Index lcol = k + 1; lcol < n; ++lcol) {
          const double a = alpha(pair_index(i, j, n), pair_index(k, lcol, n));
          if (a == 0.0) continue;
          const Index col_p = k * n + lcol, col_m = lcol * n + k;
          primeA(row_p, col_p) += a;
          primeA(row_p, col_m) -= a;
          primeA(row_m, col_p) -= a;
          primeA(row_m, col_m) += a;
        }
      for (Index k = 0; k < m; ++k)
        for (Index lcol = k + 1; lcol < m; ++lcol) {
          const double b = beta(pair_index(i, j, n), pair_index(k, lcol, m));
          if (b == 0.0) continue;
          const Index col_p = k * m + lcol, col_m = lcol * m + k;
          primeB(row_p, col_p) += b;
          primeB(row_p, col_m) -= b;
          primeB(row_m, col_p) -= b;
          primeB(row_m, col_m) += b;
        }
    }
  return {reshape_f(primeA, ReshapeSig(n, n, n, n)),
          reshape_f(primeB, ReshapeSig(n, m, n, m))};
}

/// Searches the SigmaA(alpha) family for a PSD member by subgradient
/// ascent on the smallest eigenvalue. Returns the witness, or nullopt if
/// none is found within the iteration budget.
inline std::optional<MatrixXd> psd_select(const MatrixXd& tildeSigmaA, Index n,
                                          int search_budget = 200) {
  const Index np = pair_count(n);
  const auto s1 = symmetry_maps(n);
  VectorXd dn = VectorXd::Ones(n * n);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j)
      if (i != j) dn(i * n + j) = 0.5;
  const MatrixXd q3 = dn.asDiagonal() * s1.Q;
  const ReshapeSig sig(n, n, n, n);
  const MatrixXd sigma0raw =
      reshape_f((s1.Q * tildeSigmaA * q3.transpose()).eval(), sig);
  const MatrixXd sigma0 = 0.5 * (sigma0raw + sigma0raw.transpose());

  // Basis directions of the family, one per (i<j, k<l), symmetrized.
  std::vector<MatrixXd> basis;
  basis.reserve(np * np);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      for (Index k = 0; k < n; ++k)
        for (Index lcol = k + 1; lcol < n; ++lcol) {
          MatrixXd e = MatrixXd::Zero(n * n, n * n);
          e(i * n + j, k * n + lcol) = 1.0;
          e(i * n + j, lcol * n + k) = -1.0;
          e(j * n + i, k * n + lcol) = -1.0;
          e(j * n + i, lcol * n + k) = 1.0;
          const MatrixXd f = reshape_f(e, sig);
          basis.push_back(0.5 * (f + f.transpose()));
        }

  const double scale = std::max(1.0, tildeSigmaA.cwiseAbs().maxCoeff());
  VectorXd alpha = VectorXd::Zero(np * np);
  auto member = [&](const VectorXd& a) {
    MatrixXd s = sigma0;
    for (Index u = 0; u < a.size(); ++u)
      if (a(u) != 0.0) s += a(u) * basis[u];
    return s;
  };

  double step = 0.1 * scale;
  MatrixXd sigma = sigma0;
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
  double best = es.eigenvalues().minCoeff();
  for (int it = 0; it < search_budget; ++it) {
    if (best >= -1e-8 * scale) return sigma;
    // Subgradient of lambda_min through the bottom eigenvector.
    const VectorXd v = es.eigenvectors().col(0);
    VectorXd grad(np * np);
    for (Index u = 0; u < grad.size(); ++u) grad(u) = v.dot(basis[u] * v);
    const double gnorm = grad.norm();
    if (gnorm < 1e-14) break;
    bool improved = false;
    for (int bt = 0; bt < 20 && !improved; ++bt) {
      const VectorXd trial = alpha + (step / gnorm) * grad;
      const MatrixXd trialSigma = member(trial);
      Eigen::SelfAdjointEigenSolver<MatrixXd> tes(trialSigma);
      if (tes.eigenvalues().minCoeff() > best) {
        alpha = trial;
        sigma = trialSigma;
        es = tes;
        best = tes.eigenvalues().minCoeff();
        improved = true;
        step *= 1.5;
      } else {
        step *= 0.5;
      }
    }
    if (!improved) break;
  }
  if (best >= -1e-8 * scale) return sigma;
  return std::nullopt;
}

/// Full estimation output plus provenance.
struct EstimationResult {
  MatrixXd Ahat, Bhat;
  MatrixXd tildeSigmaAhat, tildeSigmaBhat;
  RankCertificate certZ, certD;
  std::map<std::string, double> metrics;
  std::vector<std::string> flags;
  std::uint64_t seed = 0;
  long long n_r = 0;
  Index horizon = 0;
};

inline double rel_fro_error(const MatrixXd& est, const MatrixXd& truth) {
  const double denom = truth.norm();
  return denom > 0 ? (est - truth).norm() / denom : est.norm();
}

/// Normalized variance errors |v - vhat| / v; zero-variance entries are
/// omitted and flagged rather than divided through.
struct VarianceErrorMetrics {
  std::vector<double> sigmaErr, deltaErr;
  double mean_sigma = 0, max_sigma = 0, mean_delta = 0, max_delta = 0;
  std::vector<std::string> flags;
};

inline VarianceErrorMetrics variance_error_metrics(const VarianceResult& result,
                                                   const EigenNoise& truth) {
  VarianceErrorMetrics out;
  auto run = [&out](const VectorXd& hat, const std::vector<double>& tv,
                    std::vector<double>& err, double& mean, double& mx,
                    const char* label) {
    double sum = 0;
    Index used = 0;
    for (std::size_t i = 0; i < tv.size(); ++i) {
      if (tv[i] == 0.0) {
        out.flags.push_back(std::string(label) + "[" + std::to_string(i) +
                            "]: zero true variance, metric omitted");
        continue;
      }
      const double e = std::abs(tv[i] - hat(static_cast<Index>(i))) / tv[i];
      err.push_back(e);
      sum += e;
      mx = std::max(mx, e);
      ++used;
    }
    mean = used > 0 ? sum / used : 0.0;
  };
  run(result.sigma2hat, truth.variancesA, out.sigmaErr, out.mean_sigma, out.max_sigma,
      "sigma2");
  run(result.delta2hat, truth.variancesB, out.deltaErr, out.mean_delta, out.max_delta,
      "delta2");
  return out;
}

}  // namespace mals
