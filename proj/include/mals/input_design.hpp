#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "mals/errors.hpp"
#include "mals/linalg.hpp"
#include "mals/moments.hpp"
#include "mals/rng.hpp"
#include "mals/system.hpp"

namespace mals {

/// Exploratory input statistics: fixed per-step means nu_t and second
/// moment matrices Ubar_t. Immutable once generated.
class InputSchedule {
 public:
  InputSchedule(Index m, std::vector<VectorXd> nus, std::vector<MatrixXd> ubars,
                std::uint64_t seed)
      : m_(m), nus_(std::move(nus)), ubars_(std::move(ubars)), seed_(seed) {
    if (nus_.size() != ubars_.size())
      throw ConfigError("InputSchedule: nu/Ubar length mismatch");
    factors_.reserve(ubars_.size());
    for (const auto& u : ubars_) factors_.push_back(psd_factor(u));
  }

  Index input_dim() const { return m_; }
  Index horizon() const { return static_cast<Index>(nus_.size()); }
  std::uint64_t seed() const { return seed_; }
  const std::vector<VectorXd>& nus() const { return nus_; }
  const std::vector<MatrixXd>& ubars() const { return ubars_; }
  const MatrixXd& factor(Index t) const { return factors_[t]; }

 private:
  Index m_;
  std::vector<VectorXd> nus_;
  std::vector<MatrixXd> ubars_;
  std::vector<MatrixXd> factors_;  // Ubar_t = F_t F_t^T, for input sampling
  std::uint64_t seed_;
};

/// Horizon bound guaranteeing full row rank of Z with probability one:
/// l >= (1/2) m n^2 + (1/2) m n + m + 1.
inline long long min_horizon_first(long long n, long long m) {
  return (m * n * n + m * n) / 2 + m + 1;
}

/// Horizon bound for full row rank of D:
/// l >= (1/2) m^2 n^4 + (1/2) m^2 n^2 + m^2 + 1.
inline long long min_horizon_second(long long n, long long m) {
  return (m * m * n * n * n * n + m * m * n * n) / 2 + m * m + 1;
}

/// Draws the schedule: nu_t i.i.d. N(0, mean_cov), Ubar_t i.i.d.
/// Wishart(wishart_scale, dof) realized as G G^T with dof Gaussian
/// columns. Deterministic given the seed.
inline InputSchedule design_schedule(Index m, Index horizon, const MatrixXd& mean_cov,
                                     const MatrixXd& wishart_scale, Index wishart_dof,
                                     std::uint64_t seed) {
  if (horizon < 1) throw ConfigError("design_schedule: horizon must be >= 1");
  if (wishart_dof < m)
    throw ConfigError(
        "design_schedule: degenerate Wishart (dof < m); the rank guarantees "
        "require a non-degenerate distribution");
  if (mean_cov.rows() != m || mean_cov.cols() != m || wishart_scale.rows() != m ||
      wishart_scale.cols() != m)
    throw ConfigError("design_schedule: parameter shape mismatch");
  const MatrixXd l_mean = psd_factor(mean_cov);
  const MatrixXd l_scale = psd_factor(wishart_scale);
  if (Eigen::FullPivLU<MatrixXd>(wishart_scale).rank() < m)
    throw ConfigError(
        "design_schedule: singular Wishart scale; the rank guarantees require a "
        "non-degenerate distribution");

  std::vector<VectorXd> nus;
  std::vector<MatrixXd> ubars;
  nus.reserve(horizon);
  ubars.reserve(horizon);
  for (Index t = 0; t < horizon; ++t) {
    Substream mean_rng(seed, kStreamScheduleMean, static_cast<std::uint64_t>(t));
    nus.push_back(l_mean * mean_rng.gaussian_vector(m));
    Substream second_rng(seed, kStreamScheduleSecond, static_cast<std::uint64_t>(t));
    MatrixXd g(m, wishart_dof);
    for (Index c = 0; c < wishart_dof; ++c)
      g.col(c) = l_scale * second_rng.gaussian_vector(m);
    ubars.push_back(g * g.transpose());
  }
  return InputSchedule(m, std::move(nus), std::move(ubars), seed);
}

/// One input draw u_t ~ N(nu_t, Ubar_t).
inline VectorXd sample_input(const InputSchedule& schedule, Index t, Substream& rng) {
  if (t < 0 || t >= schedule.horizon())
    throw std::invalid_argument("sample_input: t out of range");
  return schedule.nus()[t] + schedule.factor(t) * rng.gaussian_vector(schedule.input_dim());
}

struct RankCertificate {
  std::string matrix_name;
  Index required_rank = 0;
  Index computed_rank = 0;
  double min_singular_value = 0.0;
  bool full_rank = false;
};

inline RankCertificate certificate_from_singular_values(const std::string& name,
                                                        const VectorXd& sv, Index rows,
                                                        Index cols, Index required) {
  RankCertificate cert;
  cert.matrix_name = name;
  cert.required_rank = required;
  cert.computed_rank = rank_from_singular_values(sv, rows, cols);
  cert.min_singular_value = sv.size() >= required ? sv(required - 1) : 0.0;
  cert.full_rank = cert.computed_rank == required;
  return cert;
}

/// Rank certificate for the first-moment regressor
/// Z = [mu_{l-1} ... mu_0; nu_{l-1} ... nu_0], built from the analytic
/// propagation, required rank n + m.
inline RankCertificate rank_certificate_Z(const MatrixXd& A, const MatrixXd& B,
                                          const VectorXd& mu0,
                                          const InputSchedule& schedule) {
  const Index n = A.rows(), m = B.cols();
  const Index l = schedule.horizon();
  const auto mu = propagate_first(A, B, mu0, schedule.nus());
  MatrixXd z(n + m, l);
  for (Index t = 0; t < l; ++t) {
    z.col(l - 1 - t).head(n) = mu[t];
    z.col(l - 1 - t).tail(m) = schedule.nus()[t];
  }
  return certificate_from_singular_values("Z", singular_values(z), n + m, l, n + m);
}

/// Exact input second moments U_t = P2 vec(Ubar_t + nu_t nu_t^T).
inline std::vector<VectorXd> input_second_moments(const InputSchedule& schedule) {
  const auto s2 = symmetry_maps(schedule.input_dim());
  std::vector<VectorXd> u;
  u.reserve(schedule.horizon());
  for (Index t = 0; t < schedule.horizon(); ++t) {
    const VectorXd& nu = schedule.nus()[t];
    u.push_back(s2.P * vec((schedule.ubars()[t] + nu * nu.transpose()).eval()));
  }
  return u;
}

/// Rank certificate for the second-moment regressor
/// D = [X_{l-1} ... X_0; U_{l-1} ... U_0], built from the analytic
/// propagation of the noise-inclusive simplified dynamics; required rank
/// n(n+1)/2 + m(m+1)/2. A and B are needed to propagate the first-moment
/// cross terms W_t, W'_t.
inline RankCertificate rank_certificate_D(const LiftedOps& ops, const MatrixXd& A,
                                          const MatrixXd& B, const VectorXd& mu0,
                                          const VectorXd& X0,
                                          const InputSchedule& schedule) {
  const Index l = schedule.horizon();
  const Index nh = half_dim(ops.n), mh = half_dim(ops.m);
  const auto mu = propagate_first(A, B, mu0, schedule.nus());
  const auto [w, wp] = cross_moments(mu, schedule.nus());
  const auto u = input_second_moments(schedule);
  const auto x = propagate_second(ops, X0, u, w, wp);
  MatrixXd d(nh + mh, l);
  for (Index t = 0; t < l; ++t) {
    d.col(l - 1 - t).head(nh) = x[t];
    d.col(l - 1 - t).tail(mh) = u[t];
  }
  return certificate_from_singular_values("D", singular_values(d), nh + mh, l, nh + mh);
}

}  // namespace mals
