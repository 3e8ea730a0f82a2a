#include "passynth/passivity.hpp"

#include <random>

#include <gtest/gtest.h>

#include "passynth/linalg.hpp"
#include "test_plants.hpp"

namespace passynth {
namespace {

MatrixXd row(std::initializer_list<double> v) {
  MatrixXd K(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index j = 0;
  for (double x : v) K(0, j++) = x;
  return K;
}

MatrixXd mat2(double a, double b, double c, double d) {
  MatrixXd M(2, 2);
  M << a, b, c, d;
  return M;
}

TEST(KypBlock, PassiveOpenLoop) {
  const auto plant = test::passive_plant();
  const MatrixXd P = MatrixXd::Identity(2, 2);
  const MatrixXd block = kyp_block(plant, MatrixXd::Zero(2, 2), P);
  EXPECT_TRUE(block.isApprox(-2.0 * MatrixXd::Identity(2, 2)));
  EXPECT_EQ(equality_residual(plant, P), 0.0);
}

TEST(KypBlock, WitnessBoundaryIsTight) {
  const auto plant = test::unstable_witness_plant();
  const MatrixXd K = mat2(2, 2, 0.5, 2);
  const MatrixXd P = mat2(1, 0, 0, 4);
  const MatrixXd block = kyp_block(plant, K, P);
  // A_K = I − K; A_KᵀP + P·A_K computed by hand.
  const MatrixXd A_K = MatrixXd::Identity(2, 2) - K;
  EXPECT_TRUE(block.isApprox(A_K.transpose() * P + P * A_K));
  EXPECT_NEAR(max_eigenvalue_sym(block), 0.0, 1e-12);
}

TEST(KypBlock, FeedthroughForm) {
  auto plant = test::two_state_plant();
  plant.D(0, 0) = 0.5;
  const MatrixXd block = kyp_block(plant, row({0.3, -0.2}), MatrixXd::Zero(2, 2));
  MatrixXd expected = MatrixXd::Zero(3, 3);
  expected.block(0, 2, 2, 1) = -plant.C.transpose();
  expected.block(2, 0, 1, 2) = -plant.C;
  expected(2, 2) = -1.0;
  EXPECT_TRUE(block.isApprox(expected));
}

TEST(CertifyGain, TwoStateExample) {
  const auto plant = test::two_state_plant();
  const auto mode = PassivityMode::nonstrict();
  const auto pass = certify_gain(plant, row({-0.5, 0.0}), mode);
  ASSERT_TRUE(pass.feasible());
  const auto& cert = *pass.certificate;
  EXPECT_GE(cert.lambda_min_P, mode.min_storage_eig);
  EXPECT_LE(cert.normalized_margin(), mode.threshold());
  EXPECT_LE(cert.equality_residual, kEqualityTolerance);
  // P must have the form [[p, −2p], [−2p, 1 + 4p]].
  EXPECT_NEAR(cert.P(0, 1), -2.0 * cert.P(0, 0), 1e-7);
  EXPECT_NEAR(cert.P(1, 1), 1.0 + 4.0 * cert.P(0, 0), 1e-7);

  const auto fail = certify_gain(plant, row({0.5, 0.0}), mode);
  EXPECT_FALSE(fail.feasible());
  EXPECT_GT(fail.best_lambda_max, 0.0);
}

TEST(CertifyGain, OptimalGainIsNotPassivating) {
  const auto plant = test::two_state_plant();
  const auto care = solve_care(plant.A, plant.B_u, plant.Q, plant.R);
  EXPECT_FALSE(certify_gain(plant, care.K, PassivityMode::nonstrict()).feasible());
}

TEST(CertifyGain, NonconvexWitness) {
  const auto plant = test::unstable_witness_plant();
  const auto mode = PassivityMode::nonstrict();
  EXPECT_TRUE(certify_gain(plant, mat2(2, 2, 0.5, 2), mode).feasible());
  EXPECT_TRUE(certify_gain(plant, mat2(2, 0.5, 2, 2), mode).feasible());
  EXPECT_FALSE(certify_gain(plant, mat2(2, 1.25, 1.25, 2), mode).feasible());
}

TEST(CertifyGain, StrictModeInterior) {
  const auto plant = test::two_state_plant();
  const auto strict = PassivityMode::strict();
  const auto r = certify_gain(plant, row({-0.5, 0.0}), strict);
  ASSERT_TRUE(r.feasible());
  EXPECT_LE(r.certificate->normalized_margin(), -strict.strict_margin);
  EXPECT_LT(spectral_abscissa(plant.closed_loop(row({-0.5, 0.0}))), 0.0);
}

TEST(CertifyGain, DeterministicForSeed) {
  const auto plant = test::two_state_plant();
  SearchOptions opts;
  opts.seed = 42;
  const auto a = certify_gain(plant, row({-0.7, 0.3}), PassivityMode::nonstrict(), opts);
  const auto b = certify_gain(plant, row({-0.7, 0.3}), PassivityMode::nonstrict(), opts);
  ASSERT_TRUE(a.feasible() && b.feasible());
  EXPECT_EQ(a.certificate->P, b.certificate->P);
}

TEST(CertifyGain, ConvexityInStorage) {
  const auto plant = test::two_state_plant();
  const MatrixXd K = row({-0.6, 0.5});
  const auto mode = PassivityMode::nonstrict();
  SearchOptions o1, o2;
  o1.seed = 1;
  o2.seed = 99;
  const auto a = certify_gain(plant, K, mode, o1);
  const auto b = certify_gain(plant, K, mode, o2);
  ASSERT_TRUE(a.feasible() && b.feasible());
  const MatrixXd mid = 0.5 * (a.certificate->P + b.certificate->P);
  EXPECT_TRUE(validate_certificate(plant, {K}, mid, mode).has_value());
}

TEST(CertifyGain, UnboundedRay) {
  const auto plant = test::two_state_plant();
  const MatrixXd K0 = row({-0.5, 0.0});
  const auto mode = PassivityMode::nonstrict();
  const auto r = certify_gain(plant, K0, mode);
  ASSERT_TRUE(r.feasible());
  const MatrixXd P0 = r.certificate->P;
  for (double t : {1.0, 10.0, 100.0}) {
    const MatrixXd K = K0 + t * plant.B_u.transpose() * P0;
    EXPECT_TRUE(validate_certificate(plant, {K}, P0, mode).has_value()) << "t = " << t;
  }
}

TEST(CertifyGain, EqualityInconsistent) {
  auto plant = test::passive_plant();
  // Both rows of B_dᵀP equal the first row of P, but the rows of C differ.
  plant.B_d = MatrixXd::Zero(2, 2);
  plant.B_d(0, 0) = 1.0;
  plant.B_d(0, 1) = 1.0;
  plant.C = MatrixXd::Zero(2, 2);
  plant.C(0, 0) = 1.0;
  plant.C(1, 0) = 2.0;
  plant.D = MatrixXd::Zero(2, 2);
  try {
    certify_gain(plant, MatrixXd::Zero(2, 2), PassivityMode::nonstrict());
    FAIL();
  } catch (const SynthError& e) {
    EXPECT_EQ(e.code(), ErrorCode::kEqualityInconsistent);
  }
}

TEST(CertifyCommon, CubeVertices) {
  const auto plant = test::two_state_plant();
  const auto mode = PassivityMode::nonstrict();
  auto verts = [](double lo1, double hi1, double lo2, double hi2) {
    return std::vector<MatrixXd>{row({lo1, lo2}), row({lo1, hi2}), row({hi1, lo2}), row({hi1, hi2})};
  };
  const auto ok = certify_common(plant, verts(-1.0, -0.6, 0.2, 0.6), mode, {});
  ASSERT_TRUE(ok.feasible());
  for (const auto& K : verts(-1.0, -0.6, 0.2, 0.6)) {
    EXPECT_LE(max_eigenvalue_sym(kyp_block(plant, K, ok.certificate->P)) / constraint_scale(plant),
              mode.threshold());
  }
  EXPECT_FALSE(certify_common(plant, verts(0.2, 0.6, 0.2, 0.6), mode, {}).feasible());
}

TEST(FindGain, TwoStateExample) {
  const auto plant = test::two_state_plant();
  const auto mode = PassivityMode::nonstrict();
  const auto r = find_passivating_gain(plant, mode);
  ASSERT_TRUE(r.feasible());
  const auto& pair = *r.pair;
  EXPECT_LE(pair.K(0, 0), 0.0);
  EXPECT_TRUE(test::in_two_state_region(pair.K(0, 0), pair.K(0, 1)));
  EXPECT_LT((pair.K * pair.Z - pair.W).norm() / (1.0 + pair.W.norm()), 1e-9);
  EXPECT_GT(min_eigenvalue_sym(pair.Z), 0.0);
  EXPECT_TRUE(certify_gain(plant, pair.K, mode).feasible());
  EXPECT_TRUE(validate_certificate(plant, {pair.K}, pair.certificate.P, mode).has_value());
}

TEST(FindGain, PassiveOpenLoop) {
  const auto plant = test::passive_plant();
  const auto r = find_passivating_gain(plant, PassivityMode::nonstrict());
  ASSERT_TRUE(r.feasible());
  EXPECT_TRUE(certify_gain(plant, r.pair->K, PassivityMode::nonstrict()).feasible());
}

TEST(FindGain, ConvexCombinationOfPairs) {
  const auto plant = test::two_state_plant();
  const auto mode = PassivityMode::nonstrict();
  SearchOptions o1, o2;
  o1.seed = 3;
  o2.seed = 17;
  const auto a = find_passivating_gain(plant, mode, o1);
  const auto b = find_passivating_gain(plant, mode, o2);
  ASSERT_TRUE(a.feasible() && b.feasible());
  for (double s : {0.25, 0.5, 0.75}) {
    const MatrixXd Z = s * a.pair->Z + (1 - s) * b.pair->Z;
    const MatrixXd W = s * a.pair->W + (1 - s) * b.pair->W;
    const MatrixXd N = Z * plant.A.transpose() + plant.A * Z - W.transpose() * plant.B_u.transpose() -
                       plant.B_u * W;
    EXPECT_LE(max_eigenvalue_sym(symmetrize(N)) / constraint_scale(plant), mode.threshold());
    EXPECT_LT((plant.B_d.transpose() - plant.C * Z).norm(), 1e-7);
    EXPECT_GT(min_eigenvalue_sym(Z), 0.0);
  }
}

TEST(Inclusion, CertifiedGainsAreStable) {
  const auto plant = test::two_state_plant();
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U1(-3.0, 1.0), U2(-2.0, 2.0);
  for (int i = 0; i < 40; ++i) {
    const MatrixXd K = row({U1(rng), U2(rng)});
    const auto ns = certify_gain(plant, K, PassivityMode::nonstrict());
    if (ns.feasible()) {
      EXPECT_LE(spectral_abscissa(plant.closed_loop(K)), 1e-6);
    }
    const auto st = certify_gain(plant, K, PassivityMode::strict());
    if (st.feasible()) {
      EXPECT_LT(spectral_abscissa(plant.closed_loop(K)), 0.0);
    }
  }
}

TEST(Mode, Validation) {
  PassivityMode bad;
  bad.min_storage_eig = -1.0;
  EXPECT_THROW(bad.validate(), SynthError);
}

}  // namespace
}  // namespace passynth
