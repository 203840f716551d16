#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

#include "mals/errors.hpp"
#include "mals/reshape.hpp"
#include "mals/rng.hpp"

namespace mals {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Linear system with multiplicative noise:
///   x_{t+1} = (A + Abar_t) x_t + (B + Bbar_t) u_t,
/// with Abar_t, Bbar_t zero mean, i.i.d., mutually independent, and
/// SigmaA = E{vec(Abar) vec(Abar)^T}, SigmaB = E{vec(Bbar) vec(Bbar)^T}.
struct SystemModel {
  Index n = 0, m = 0;
  MatrixXd A;       // n x n
  MatrixXd B;       // n x m
  MatrixXd SigmaA;  // n^2 x n^2
  MatrixXd SigmaB;  // nm x nm

  void validate() const;
};

/// Eigendecomposed noise form: Abar_t = sum_i A_i p_{i,t} with
/// E{p^2} = variancesA[i], and likewise for Bbar_t.
struct EigenNoise {
  std::vector<MatrixXd> directionsA;  // each n x n
  std::vector<double> variancesA;
  std::vector<MatrixXd> directionsB;  // each n x m
  std::vector<double> variancesB;
};

struct Rollout {
  std::vector<VectorXd> states;  // x_0 .. x_l
  std::vector<VectorXd> inputs;  // u_0 .. u_{l-1}
};

struct RolloutBatch {
  std::vector<Rollout> rollouts;
};

inline void SystemModel::validate() const {
  if (A.rows() != n || A.cols() != n || B.rows() != n || B.cols() != m)
    throw ConfigError("SystemModel: A/B shape mismatch with (n, m)");
  if (SigmaA.rows() != n * n || SigmaA.cols() != n * n)
    throw ConfigError("SystemModel: SigmaA must be n^2 x n^2");
  if (SigmaB.rows() != n * m || SigmaB.cols() != n * m)
    throw ConfigError("SystemModel: SigmaB must be nm x nm");
  if (!A.allFinite() || !B.allFinite() || !SigmaA.allFinite() || !SigmaB.allFinite())
    throw ConfigError("SystemModel: entries must be finite");
  auto check_psd = [](const MatrixXd& s, const char* name) {
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, s.cwiseAbs().maxCoeff()))
      throw ConfigError(std::string("SystemModel: ") + name + " not symmetric");
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(s);
    if (es.eigenvalues().minCoeff() < -1e-10 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff()))
      throw ConfigError(std::string("SystemModel: ") + name + " not positive semidefinite");
  };
  check_psd(SigmaA, "SigmaA");
  check_psd(SigmaB, "SigmaB");
}

/// Covariances of vec(Abar), vec(Bbar) implied by the eigendecomposed
/// form: SigmaA = sum_i var_i vec(A_i) vec(A_i)^T, PSD by construction.
inline std::pair<MatrixXd, MatrixXd> cov_from_eigen(const EigenNoise& e, Index n, Index m) {
  MatrixXd sa = MatrixXd::Zero(n * n, n * n);
  MatrixXd sb = MatrixXd::Zero(n * m, n * m);
  if (e.directionsA.size() != e.variancesA.size() ||
      e.directionsB.size() != e.variancesB.size())
    throw ConfigError("EigenNoise: direction/variance count mismatch");
  for (std::size_t i = 0; i < e.directionsA.size(); ++i) {
    const MatrixXd& d = e.directionsA[i];
    if (d.rows() != n || d.cols() != n)
      throw ConfigError("EigenNoise: A direction shape mismatch");
    if (e.variancesA[i] < 0) throw ConfigError("EigenNoise: negative variance");
    const VectorXd v = vec(d);
    sa.noalias() += e.variancesA[i] * v * v.transpose();
  }
  for (std::size_t j = 0; j < e.directionsB.size(); ++j) {
    const MatrixXd& d = e.directionsB[j];
    if (d.rows() != n || d.cols() != m)
      throw ConfigError("EigenNoise: B direction shape mismatch");
    if (e.variancesB[j] < 0) throw ConfigError("EigenNoise: negative variance");
    const VectorXd v = vec(d);
    sb.noalias() += e.variancesB[j] * v * v.transpose();
  }
  return {sa, sb};
}

/// Square-root factor L with Sigma = L L^T, via symmetric eigendecomposition.
/// Eigenvalues in [-1e-10, 0) (relative to the largest) are clipped to 0;
/// anything more negative rejects the matrix.
inline MatrixXd psd_factor(const MatrixXd& sigma) {
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(sigma);
  if (es.info() != Eigen::Success)
    throw NumericError("psd_factor: eigendecomposition failed");
  VectorXd ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -1e-8 * scale)
    throw NumericError("psd_factor: matrix is not positive semidefinite");
  for (Index i = 0; i < ev.size(); ++i) ev(i) = ev(i) > 0 ? std::sqrt(ev(i)) : 0.0;
  return es.eigenvectors() * ev.asDiagonal();
}

/// Precomputed factors for repeated noise sampling from a SystemModel.
struct NoiseFactor {
  Index n, m;
  MatrixXd La;  // n^2 x n^2
  MatrixXd Lb;  // nm x nm
  explicit NoiseFactor(const SystemModel& model)
      : n(model.n), m(model.m), La(psd_factor(model.SigmaA)), Lb(psd_factor(model.SigmaB)) {}

  std::pair<MatrixXd, MatrixXd> sample(Substream& rngA, Substream& rngB) const {
    const VectorXd va = La * rngA.gaussian_vector(n * n);
    const VectorXd vb = Lb * rngB.gaussian_vector(n * m);
    return {unvec(va, n, n), unvec(vb, n, m)};
  }
};

/// One zero-mean draw (Abar, Bbar) with the model's vec-covariances.
inline std::pair<MatrixXd, MatrixXd> sample_noise_pair(const SystemModel& model,
                                                       Substream& rng) {
  NoiseFactor f(model);
  return f.sample(rng, rng);
}

namespace detail {
inline void check_state(const VectorXd& x) {
  if (!x.allFinite() || x.cwiseAbs().maxCoeff() > 1e150)
    throw NumericError("simulate_rollout: state norm exceeded 1e150 (unstable draw)");
}
}  // namespace detail

/// Simulates one rollout of the exact recursion with fresh noise at each
/// step. Noise substreams are keyed by (seed, source, rollout, step), so
/// the trajectory is a pure function of (seed, rollout_index, x0, inputs).
inline Rollout simulate_rollout(const SystemModel& model, const VectorXd& x0,
                                const std::vector<VectorXd>& inputs,
                                std::uint64_t seed, std::uint64_t rollout_index = 0) {
  NoiseFactor f(model);
  Rollout r;
  r.states.reserve(inputs.size() + 1);
  r.inputs = inputs;
  VectorXd x = x0;
  detail::check_state(x);
  r.states.push_back(x);
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Substream rngA(seed, kStreamNoiseA, rollout_index, static_cast<std::uint64_t>(t));
    Substream rngB(seed, kStreamNoiseB, rollout_index, static_cast<std::uint64_t>(t));
    auto [abar, bbar] = f.sample(rngA, rngB);
    x = (model.A + abar) * x + (model.B + bbar) * inputs[t];
    detail::check_state(x);
    r.states.push_back(x);
  }
  return r;
}

/// Same recursion, sampling the noise through known directions:
/// Abar_t = sum_i p_i A_i with p_i ~ N(0, var_i). Distributionally
/// identical to the covariance route for Gaussian noise.
inline Rollout simulate_rollout(const MatrixXd& A, const MatrixXd& B,
                                const EigenNoise& noise, const VectorXd& x0,
                                const std::vector<VectorXd>& inputs,
                                std::uint64_t seed, std::uint64_t rollout_index = 0) {
  std::vector<double> sdA(noise.variancesA.size()), sdB(noise.variancesB.size());
  for (std::size_t i = 0; i < sdA.size(); ++i) sdA[i] = std::sqrt(noise.variancesA[i]);
  for (std::size_t j = 0; j < sdB.size(); ++j) sdB[j] = std::sqrt(noise.variancesB[j]);
  Rollout r;
  r.states.reserve(inputs.size() + 1);
  r.inputs = inputs;
  VectorXd x = x0;
  detail::check_state(x);
  r.states.push_back(x);
  MatrixXd abar(A.rows(), A.cols()), bbar(B.rows(), B.cols());
  for (std::size_t t = 0; t < inputs.size(); ++t) {
    Substream rngA(seed, kStreamNoiseA, rollout_index, static_cast<std::uint64_t>(t));
    Substream rngB(seed, kStreamNoiseB, rollout_index, static_cast<std::uint64_t>(t));
    abar.setZero();
    for (std::size_t i = 0; i < sdA.size(); ++i)
      abar += (sdA[i] * rngA.next_gaussian()) * noise.directionsA[i];
    bbar.setZero();
    for (std::size_t j = 0; j < sdB.size(); ++j)
      bbar += (sdB[j] * rngB.next_gaussian()) * noise.directionsB[j];
    x = (A + abar) * x + (B + bbar) * inputs[t];
    detail::check_state(x);
    r.states.push_back(x);
  }
  return r;
}

/// Lossy network diffusion generator. A connected Erdos-Renyi graph with
/// integer edge weights gives A = I - T(L + F_c), B = T diag(input_gain)
/// (forward Euler), one +/-1 edge-pattern noise direction per edge and one
/// single-entry direction per input.
struct NetworkSpec {
  Index nodes = 8;
  double edge_prob = 0.35;
  int weight_min = 1, weight_max = 5;
  VectorXd loss_diagonal;  // F_c; defaults to 2 per node if empty
  VectorXd input_gain;     // diag of B_u; defaults to 1 per node if empty
  double step = 0.0;       // T; <= 0 selects 1.5 / lambda_max(L + F_c)
  // Noise variances are drawn uniformly from [var_min, var_max]. The range
  // has to stay well below the mean-square stability margin of the lifted
  // second-moment dynamics or trajectories become heavy-tailed and the
  // 7-rollout moment averages useless; scaling with w^2 puts heavy edges
  // past that margin, so all edges share one range.
  double var_min = 0.002, var_max = 0.02;
  std::uint64_t seed = 0;
  int max_retries = 1000;

  void validate() const {
    if (nodes < 2) throw ConfigError("NetworkSpec: need at least 2 nodes");
    if (edge_prob <= 0.0 || edge_prob > 1.0)
      throw ConfigError("NetworkSpec: edge_prob must be in (0,1]");
    if (weight_min < 1 || weight_max < weight_min)
      throw ConfigError("NetworkSpec: invalid weight range");
    if (var_min <= 0.0 || var_max < var_min)
      throw ConfigError("NetworkSpec: invalid variance range");
  }
};

namespace detail {
inline bool connected(const MatrixXd& w) {
  const Index n = w.rows();
  std::vector<char> seen(n, 0);
  std::vector<Index> stack{0};
  seen[0] = 1;
  Index count = 1;
  while (!stack.empty()) {
    const Index u = stack.back();
    stack.pop_back();
    for (Index v = 0; v < n; ++v)
      if (!seen[v] && w(u, v) != 0.0) {
        seen[v] = 1;
        ++count;
        stack.push_back(v);
      }
  }
  return count == n;
}
}  // namespace detail

inline std::pair<SystemModel, EigenNoise> build_network_system(const NetworkSpec& spec) {
  spec.validate();
  const Index n = spec.nodes;
  Substream graph_rng(spec.seed, kStreamGraph);

  MatrixXd w;
  bool ok = false;
  for (int attempt = 0; attempt < spec.max_retries && !ok; ++attempt) {
    w = MatrixXd::Zero(n, n);
    for (Index i = 0; i < n; ++i)
      for (Index j = i + 1; j < n; ++j) {
        const double u = graph_rng.next_uniform();
        if (u < spec.edge_prob) {
          const int span = spec.weight_max - spec.weight_min + 1;
          const int weight =
              spec.weight_min + static_cast<int>(graph_rng.next_uniform() * span);
          w(i, j) = w(j, i) = static_cast<double>(weight);
        }
      }
    ok = detail::connected(w);
  }
  if (!ok) throw NumericError("build_network_system: no connected graph within retry budget");

  const VectorXd loss = spec.loss_diagonal.size() == n
                            ? spec.loss_diagonal
                            : VectorXd::Constant(n, 2.0);
  const VectorXd gain =
      spec.input_gain.size() == n ? spec.input_gain : VectorXd::Ones(n);
  if (loss.minCoeff() < 0) throw ConfigError("NetworkSpec: loss_diagonal must be >= 0");

  const MatrixXd laplacian = MatrixXd(w.rowwise().sum().asDiagonal()) - w;
  const MatrixXd lf = laplacian + MatrixXd(loss.asDiagonal());
  double step = spec.step;
  if (step <= 0.0) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(lf);
    step = 1.5 / es.eigenvalues().maxCoeff();
  }

  SystemModel model;
  model.n = n;
  model.m = n;
  model.A = MatrixXd::Identity(n, n) - step * lf;
  model.B = step * MatrixXd(gain.asDiagonal());

  EigenNoise noise;
  Substream var_rng(spec.seed, kStreamVariances);
  for (Index i = 0; i < n; ++i)
    for (Index j = i + 1; j < n; ++j)
      if (w(i, j) != 0.0) {
        MatrixXd dir = MatrixXd::Zero(n, n);
        dir(i, i) = dir(j, j) = 1.0;
        dir(i, j) = dir(j, i) = -1.0;
        noise.directionsA.push_back(dir);
        const double u = spec.var_min + (spec.var_max - spec.var_min) * var_rng.next_uniform();
        noise.variancesA.push_back(u);
      }
  for (Index k = 0; k < n; ++k) {
    MatrixXd dir = MatrixXd::Zero(n, n);
    dir(k, k) = 1.0;
    noise.directionsB.push_back(dir);
    const double u = spec.var_min + (spec.var_max - spec.var_min) * var_rng.next_uniform();
    noise.variancesB.push_back(u);
  }

  auto [sa, sb] = cov_from_eigen(noise, n, n);
  model.SigmaA = std::move(sa);
  model.SigmaB = std::move(sb);
  return {std::move(model), std::move(noise)};
}

/// The 2-state, 1-input benchmark system with known noise covariances.
inline SystemModel simple_example_system() {
  SystemModel sys;
  sys.n = 2;
  sys.m = 1;
  sys.A.resize(2, 2);
  sys.A << -0.2, 0.3, -0.4, 0.8;
  sys.B.resize(2, 1);
  sys.B << -1.8, -0.8;
  sys.SigmaA.resize(4, 4);
  sys.SigmaA << 8, -2, 0, 0,
               -2, 16, 2, 0,
                0,  2, 2, 0,
                0,  0, 0, 8;
  sys.SigmaA /= 100.0;
  sys.SigmaB.resize(2, 2);
  sys.SigmaB << 5, -2, -2, 20;
  sys.SigmaB /= 100.0;
  return sys;
}

}  // namespace mals
