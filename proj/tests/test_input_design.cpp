#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "mals/input_design.hpp"

using namespace mals;

TEST_CASE("minimum horizons") {
  CHECK(min_horizon_first(2, 1) == 5);
  CHECK(min_horizon_second(2, 1) == 12);
  CHECK(min_horizon_second(8, 8) == 133185);
  // first-stage bound: mn^2/2 + mn/2 + m + 1
  CHECK(min_horizon_first(3, 2) == (2 * 9 + 2 * 3) / 2 + 2 + 1);
  // no overflow for large dimensions
  CHECK(min_horizon_second(32, 32) > 0);
}

TEST_CASE("design_schedule basic properties") {
  const Index m = 2, l = 20;
  InputSchedule s = design_schedule(m, l, MatrixXd::Identity(m, m),
                                    0.1 * MatrixXd::Identity(m, m), m, 99);
  REQUIRE(s.horizon() == l);
  REQUIRE(s.input_dim() == m);
  for (Index t = 0; t < l; ++t) {
    REQUIRE(s.nus()[t].size() == m);
    const MatrixXd& u = s.ubars()[t];
    REQUIRE(u.rows() == m);
    CHECK((u - u.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(u);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
    // factor reproduces the second-moment matrix
    CHECK((s.factor(t) * s.factor(t).transpose() - u).cwiseAbs().maxCoeff() < 1e-12);
  }
  // same seed reproduces, different seed differs
  InputSchedule s2 = design_schedule(m, l, MatrixXd::Identity(m, m),
                                     0.1 * MatrixXd::Identity(m, m), m, 99);
  CHECK((s.nus()[3] - s2.nus()[3]).cwiseAbs().maxCoeff() == 0.0);
  InputSchedule s3 = design_schedule(m, l, MatrixXd::Identity(m, m),
                                     0.1 * MatrixXd::Identity(m, m), m, 100);
  CHECK((s.nus()[3] - s3.nus()[3]).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("design_schedule rejects degenerate Wishart parameters") {
  const Index m = 2;
  CHECK_THROWS_AS(design_schedule(m, 10, MatrixXd::Identity(m, m),
                                  0.1 * MatrixXd::Identity(m, m), 1, 1),
                  ConfigError);
  MatrixXd singular = MatrixXd::Zero(m, m);
  singular(0, 0) = 1.0;
  CHECK_THROWS_AS(design_schedule(m, 10, MatrixXd::Identity(m, m), singular, m, 1),
                  ConfigError);
  CHECK_THROWS_AS(design_schedule(m, 0, MatrixXd::Identity(m, m),
                                  0.1 * MatrixXd::Identity(m, m), m, 1),
                  ConfigError);
}

TEST_CASE("sample_input has the designed first and second moments") {
  const Index m = 2;
  InputSchedule s = design_schedule(m, 3, MatrixXd::Identity(m, m),
                                    0.1 * MatrixXd::Identity(m, m), m, 5);
  const Index t = 1;
  const int n_draws = 200000;
  VectorXd mean = VectorXd::Zero(m);
  MatrixXd second = MatrixXd::Zero(m, m);
  for (int k = 0; k < n_draws; ++k) {
    Substream rng(1, kStreamInput, static_cast<std::uint64_t>(k), t);
    VectorXd u = sample_input(s, t, rng);
    mean += u;
    second += (u - s.nus()[t]) * (u - s.nus()[t]).transpose();
  }
  mean /= n_draws;
  second /= n_draws;
  CHECK((mean - s.nus()[t]).cwiseAbs().maxCoeff() < 0.02);
  CHECK((second - s.ubars()[t]).cwiseAbs().maxCoeff() < 0.02);
}

TEST_CASE("input second moments stack P2 vec(Ubar + nu nu')") {
  const Index m = 2;
  InputSchedule s = design_schedule(m, 4, MatrixXd::Identity(m, m),
                                    0.1 * MatrixXd::Identity(m, m), m, 7);
  const auto u = input_second_moments(s);
  REQUIRE(u.size() == 4);
  const auto s2 = symmetry_maps(m);
  for (Index t = 0; t < 4; ++t) {
    VectorXd expected =
        s2.P * vec(MatrixXd(s.ubars()[t] + s.nus()[t] * s.nus()[t].transpose()));
    CHECK((u[t] - expected).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("rank certificate for the first-stage regressor") {
  MatrixXd A(2, 2), B(2, 1);
  A << -0.2, 0.3, -0.4, 0.8;
  B << -1.8, -0.8;
  InputSchedule s = design_schedule(1, 12, MatrixXd::Identity(1, 1),
                                    0.1 * MatrixXd::Identity(1, 1), 1, 17);
  RankCertificate cert = rank_certificate_Z(A, B, VectorXd::Zero(2), s);
  CHECK(cert.matrix_name == "Z");
  CHECK(cert.required_rank == 3);
  CHECK(cert.computed_rank == 3);
  CHECK(cert.full_rank);
  CHECK(cert.min_singular_value > 0.0);

  // zero input makes Z rank-deficient from x0 = 0
  std::vector<VectorXd> zero_nus(12, VectorXd::Zero(1));
  std::vector<MatrixXd> zero_ubars(12, MatrixXd::Zero(1, 1));
  InputSchedule degenerate(1, zero_nus, zero_ubars, 0);
  RankCertificate bad = rank_certificate_Z(A, B, VectorXd::Zero(2), degenerate);
  CHECK_FALSE(bad.full_rank);
}

TEST_CASE("rank certificate for the second-stage regressor") {
  MatrixXd A(2, 2), B(2, 1);
  A << -0.2, 0.3, -0.4, 0.8;
  B << -1.8, -0.8;
  LiftedOps ops = lift_ops(A, B);
  InputSchedule s = design_schedule(1, 12, MatrixXd::Identity(1, 1),
                                    0.1 * MatrixXd::Identity(1, 1), 1, 17);
  RankCertificate cert = rank_certificate_D(ops, A, B, VectorXd::Zero(2),
                                            VectorXd::Zero(3), s);
  CHECK(cert.matrix_name == "D");
  CHECK(cert.required_rank == 4);  // n(n+1)/2 + m(m+1)/2
  CHECK(cert.full_rank);

  // shorter-than-minimal horizon cannot reach full rank when the regressor
  // is degenerate (all-zero schedule)
  std::vector<VectorXd> zero_nus(12, VectorXd::Zero(1));
  std::vector<MatrixXd> zero_ubars(12, MatrixXd::Zero(1, 1));
  InputSchedule degenerate(1, zero_nus, zero_ubars, 0);
  RankCertificate bad =
      rank_certificate_D(ops, A, B, VectorXd::Zero(2), VectorXd::Zero(3), degenerate);
  CHECK_FALSE(bad.full_rank);
}

TEST_CASE("certificate threshold scales with matrix size") {
  VectorXd sv(3);
  sv << 1.0, 0.5, 1e-18;
  RankCertificate c = certificate_from_singular_values("Z", sv, 3, 100, 3);
  CHECK(c.computed_rank == 2);
  CHECK_FALSE(c.full_rank);
  CHECK(c.min_singular_value == 1e-18);
}
