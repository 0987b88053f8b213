#include <gtest/gtest.h>

#include <cmath>

#include "felan/inertia_param.hpp"
#include "unit/generators.hpp"

namespace felan {
namespace {

using testing_gen::Gen;

double softplus_ref(double x) { return std::log(1.0 + std::exp(x)); }

double min_eig(const MatX& a) { return Eigen::SelfAdjointEigenSolver<MatX>(a).eigenvalues().minCoeff(); }

MatX random_joint_factor(Gen& g, const RobotTopology& topo) {
  const SparsityMask mask = sparsity_pattern(topo);
  MatX l = MatX::Zero(topo.n_q(), topo.n_q());
  for (int i = 0; i < topo.n_q(); ++i)
    for (int j = 0; j <= i; ++j)
      if (mask(6 + i, 6 + j)) l(i, j) = i == j ? positive_diagonal(g.uniform(-2, 2)) : g.uniform(-1, 1);
  return l;
}

RawFactorOutputs random_raw(Gen& g, const RobotTopology& topo) {
  RawFactorOutputs raw;
  raw.theta_m = g.uniform(-4.0, 4.0);
  raw.h = g.vec3(2.0);
  raw.L_sigma = Mat3::Zero();
  for (int i = 0; i < 3; ++i) {
    raw.L_sigma(i, i) = positive_diagonal(g.uniform(-3, 3));
    for (int j = 0; j < i; ++j) raw.L_sigma(i, j) = g.uniform(-1, 1);
  }
  raw.K = g.mat(topo.n_q(), 3, 2.0);
  raw.W = g.mat(topo.n_q(), 3, 2.0);
  raw.L_joint = random_joint_factor(g, topo);
  return raw;
}

TEST(InertiaParam, PositiveDiagonal) {
  EXPECT_NEAR(positive_diagonal(0.0), std::log(2.0) + 0.01, 1e-15);
  EXPECT_NEAR(positive_diagonal(-50.0), 0.01, 1e-15);
  EXPECT_NEAR(positive_diagonal(1.5), softplus_ref(1.5) + 0.01, 1e-15);
  EXPECT_GT(positive_diagonal(-800.0), 0.01 - 1e-18);
  double prev = positive_diagonal(-20.0);
  for (double x = -20.0; x <= 20.0; x += 0.01) {
    const double v = positive_diagonal(x);
    EXPECT_GE(v, prev);
    prev = v;
  }
}

TEST(InertiaParam, ShiftRotationalExamples) {
  {
    auto [d_hat, beta] = shift_rotational(SymMat3(2.0 * Mat3::Identity()));
    EXPECT_NEAR(beta, 0.01 + softplus_ref(-2.0), 1e-15);
    EXPECT_LE((d_hat.matrix() - (2.0 + beta) * Mat3::Identity()).norm(), 1e-15);
  }
  {
    auto [d_hat, beta] = shift_rotational(SymMat3::diagonal(-1.0, 3.0, 4.0));
    EXPECT_NEAR(lambda_min(d_hat), -1.0 + 0.01 + softplus_ref(1.0), 1e-14);
    EXPECT_GT(lambda_min(d_hat), 0.0);
  }
  {
    auto [d_hat, beta] = shift_rotational(SymMat3());
    EXPECT_LE((d_hat.matrix() - (0.01 + std::log(2.0)) * Mat3::Identity()).norm(), 1e-15);
  }
}

TEST(InertiaParam, ShiftMassExamples) {
  {
    auto [m_hat, t] = shift_mass(10.0, MatX::Zero(5, 3));
    EXPECT_NEAR(m_hat, softplus_ref(10.0) + 0.1, 1e-13);
    EXPECT_LE((t.matrix() - m_hat * Mat3::Identity()).norm(), 1e-13);
  }
  Gen g(1);
  for (int trial = 0; trial < 20; ++trial) {
    const MatX u = g.mat(6, 3);
    const double lam = Eigen::SelfAdjointEigenSolver<Mat3>(u.transpose() * u).eigenvalues()[2];
    auto [m_hat, t] = shift_mass(lam, u);
    EXPECT_NEAR(m_hat, std::log(2.0) + 0.1 + lam, 1e-12);
    EXPECT_NEAR(lambda_min(t), std::log(2.0) + 0.1, 1e-10);
  }
  for (int trial = 0; trial < 1000; ++trial) {
    const MatX u = g.mat(g.integer(3, 9), 3, 3.0);
    auto [m_hat, t] = shift_mass(g.uniform(-5.0, 50.0), u);
    EXPECT_GE(lambda_min(t), 0.1 - 1e-10);
  }
}

TEST(InertiaParam, ResolveLFR) {
  Gen g(2);
  const Mat3 l_r = (Mat3() << 1.2, 0, 0, 0.3, 0.9, 0, -0.4, 0.2, 1.1).finished();
  EXPECT_EQ(resolve_LFR(Vec3::Zero(), MatX::Zero(4, 3), g.mat(4, 3), l_r), Mat3::Zero());
  EXPECT_EQ(resolve_LFR(Vec3::Zero(), g.mat(4, 3), MatX::Zero(4, 3), l_r), Mat3::Zero());
  for (int t = 0; t < 100; ++t) {
    const Vec3 h = g.vec3(2.0);
    const MatX k = g.mat(5, 3), w = g.mat(5, 3);
    const Mat3 l_fr = resolve_LFR(h, k, w, l_r);
    const Mat3 residual = l_fr.transpose() * l_r + k.transpose() * w - skew(h).transpose();
    EXPECT_LE(residual.cwiseAbs().maxCoeff(), 1e-10);
  }
  EXPECT_LE((lower_inverse(l_r) * l_r - Mat3::Identity()).norm(), 1e-14);
}

TEST(InertiaParam, HandExecutedSingleJoint) {
  const RobotTopology topo = RobotTopology::chains({1});
  RawFactorOutputs raw;
  raw.theta_m = 3.0;
  raw.K = MatX::Zero(1, 3);
  raw.W = MatX::Zero(1, 3);
  raw.L_joint = MatX::Ones(1, 1);
  const AssembledInertia a = assemble_felan(raw, topo);
  const double m_hat = softplus_ref(9.0) + 0.1;
  const double rot = 2.0 + 0.01 + softplus_ref(-2.0);
  MatX expected = MatX::Zero(7, 7);
  expected.diagonal() << m_hat, m_hat, m_hat, rot, rot, rot, 1.0;
  EXPECT_LE((a.H - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(a.m_hat, m_hat, 1e-12);
  EXPECT_NEAR(a.diagnostics.mu_D, 2.0, 1e-14);
  EXPECT_NEAR(a.diagnostics.lambda_U, 0.0, 1e-14);
}

TEST(InertiaParam, AssemblyInvariantSweep) {
  Gen g(3);
  for (int t = 0; t < 1000; ++t) {
    const RobotTopology topo = g.topology(4, 2, 3);
    const RawFactorOutputs raw = random_raw(g, topo);
    const AssembledInertia a = assemble_felan(raw, topo);
    ASSERT_GT(min_eig(a.H), 0.0) << t;
    EXPECT_LE((a.H.topLeftCorner<3, 3>() - a.m_hat * MatX::Identity(3, 3)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((a.H.block<3, 3>(3, 0) - skew(raw.h)).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GE(triangle_margin(SymMat3(a.H.block<3, 3>(3, 3))), -1e-9);
    EXPECT_EQ(a.m_hat, a.H(0, 0));
    EXPECT_EQ(a.L.mask(), sparsity_pattern(topo));
    EXPECT_LE((a.L.gram() - a.H).norm(), 1e-9 * a.H.norm());
  }
}

TEST(InertiaParam, ZeroFirstMomentDecouplesLinearRows) {
  Gen g(4);
  const RobotTopology topo = RobotTopology::chains({2, 3});
  RawFactorOutputs raw = random_raw(g, topo);
  raw.h = Vec3::Zero();
  raw.K.setZero();
  const AssembledInertia a = assemble_felan(raw, topo);
  EXPECT_EQ(a.H.block(6, 0, topo.n_q(), 3).norm(), 0.0);
  EXPECT_EQ((a.H.block<3, 3>(3, 0).norm()), 0.0);
}

TEST(InertiaParam, BranchFunctionalIndependence) {
  Gen g(5);
  const RobotTopology topo = RobotTopology::chains({2, 3});
  RawFactorOutputs raw = random_raw(g, topo);
  const AssembledInertia a = assemble_felan(raw, topo);
  // Perturb branch 1 (joints 2..4) only.
  raw.K.bottomRows(3) = g.mat(3, 3);
  raw.W.bottomRows(3) = g.mat(3, 3);
  raw.L_joint(4, 3) += 0.5;
  const AssembledInertia b = assemble_felan(raw, topo);
  EXPECT_EQ(a.H.block(6, 6, 2, 2), b.H.block(6, 6, 2, 2));
  EXPECT_EQ(a.H.block(6, 0, 2, 6), b.H.block(6, 0, 2, 6));
}

TEST(InertiaParam, ShiftsVanishForWellConditionedInputs) {
  const RobotTopology topo = RobotTopology::chains({1});
  RawFactorOutputs raw;
  raw.theta_m = 10.0;
  raw.L_sigma = 3.0 * Mat3::Identity();
  raw.K = MatX::Zero(1, 3);
  raw.W = MatX::Zero(1, 3);
  raw.L_joint = MatX::Ones(1, 1);
  const AssembledInertia a = assemble_felan(raw, topo);
  ASSERT_GE(a.diagnostics.mu_D, 5.0);
  EXPECT_LE(a.diagnostics.beta, 0.01 + 0.01);
  EXPECT_NEAR(a.m_hat, 100.0 + 0.1, 1e-9);
}

TEST(InertiaParam, BranchSparseVariant) {
  Gen g(6);
  const RobotTopology diag_topo = RobotTopology::chains({2});
  BranchSparseRaw d;
  d.L_F = Vec3(1, 2, 3).asDiagonal();
  d.L_R = Vec3(4, 5, 6).asDiagonal();
  d.K = MatX::Zero(2, 3);
  d.W = MatX::Zero(2, 3);
  d.L_joint = MatX::Identity(2, 2) * 2.0;
  const BranchSparseInertia hd = assemble_felan_bs(d, diag_topo);
  EXPECT_EQ(MatX(hd.H.diagonal().asDiagonal()), hd.H);
  EXPECT_NEAR(hd.m, (1 + 4 + 9) / 3.0, 1e-15);

  for (int t = 0; t < 1000; ++t) {
    const RobotTopology topo = g.topology(3, 2, 3);
    BranchSparseRaw raw;
    for (Mat3* m : {&raw.L_F, &raw.L_R}) {
      *m = Mat3(g.mat(3, 3)).triangularView<Eigen::Lower>();
      for (int i = 0; i < 3; ++i) (*m)(i, i) = positive_diagonal(g.uniform(-2, 2));
    }
    raw.L_FR = g.mat(3, 3);
    raw.K = g.mat(topo.n_q(), 3);
    raw.W = g.mat(topo.n_q(), 3);
    raw.L_joint = random_joint_factor(g, topo);
    const BranchSparseInertia b = assemble_felan_bs(raw, topo);
    ASSERT_GT(min_eig(b.H), 0.0);
    EXPECT_LE((b.L.gram() - b.H).norm(), 1e-10 * b.H.norm());
    const SparsityMask mask = sparsity_pattern(topo);
    for (int i = 0; i < topo.n_q(); ++i)
      for (int j = 0; j < topo.n_q(); ++j)
        if (!topo.is_ancestor_or_self(i, j) && !topo.is_ancestor_or_self(j, i)) EXPECT_EQ(b.H(6 + i, 6 + j), 0.0);
    EXPECT_NEAR(b.m, (b.H.topLeftCorner<3, 3>().trace() / 3.0), 1e-12);
    const Mat3 c = b.H.block<3, 3>(3, 0);
    EXPECT_LE((skew(b.h) - 0.5 * (c - c.transpose())).norm(), 1e-12);
    (void)mask;
  }
}

TEST(InertiaParam, DelanDense) {
  EXPECT_EQ(assemble_delan_dense(MatX::Identity(5, 5)), MatX::Identity(5, 5));
  const VecX d = (VecX(4) << 1, 2, 3, 4).finished();
  EXPECT_EQ(assemble_delan_dense(MatX(d.asDiagonal())), MatX(d.cwiseProduct(d).asDiagonal()));
  Gen g(7);
  for (int t = 0; t < 200; ++t) {
    const int n = g.integer(7, 12);
    MatX c = MatX(g.mat(n, n).triangularView<Eigen::Lower>());
    for (int i = 0; i < n; ++i) c(i, i) = positive_diagonal(g.uniform(-2, 2));
    const MatX h = assemble_delan_dense(c);
    EXPECT_GT(min_eig(h), 0.0);
    EXPECT_LE((h - c * c.transpose()).norm(), 1e-12 * h.norm());
    std::vector<double> packed;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j <= i; ++j) packed.push_back(c(i, j));
    EXPECT_LE((assemble_delan_dense_t(packed, n).value() - h).norm(), 1e-12 * h.norm());
  }
}

TEST(InertiaParam, JetAssemblyMatchesDoubleAndFiniteDifferences) {
  Gen g(8);
  const RobotTopology topo = RobotTopology::chains({1, 2});
  const RawFactorOutputs raw = random_raw(g, topo);
  // Perturb h[1] and K(2, 0) along two tangents.
  auto blocks_at = [&](double dh, double dk) {
    FelanBlocks<ad::Jet> b{ad::Jet(raw.theta_m), V3<ad::Jet>::from(raw.h), M3<ad::Jet>::from(raw.L_sigma),
                           MatS<ad::Jet>(3, 3, 0.0), MatS<ad::Jet>(3, 3, 0.0), MatS<ad::Jet>(3, 3, 0.0)};
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        b.K(i, j) = raw.K(i, j);
        b.W(i, j) = raw.W(i, j);
        b.L_joint(i, j) = raw.L_joint(i, j);
      }
    b.h[1] = ad::Jet::variable(raw.h[1] + dh, 2, 0);
    b.K(2, 0) = ad::Jet::variable(raw.K(2, 0) + dk, 2, 1);
    return b;
  };
  const auto a = assemble_felan_t(blocks_at(0, 0), topo, {}, nullptr);
  const AssembledInertia ref = assemble_felan(raw, topo);
  EXPECT_LE((a.H.value() - ref.H).norm(), 1e-12 * ref.H.norm());
  const double eps = 1e-6;
  for (int dir = 0; dir < 2; ++dir) {
    const auto p = assemble_felan_t(blocks_at(dir == 0 ? eps : 0, dir == 1 ? eps : 0), topo, {}, nullptr);
    const auto m = assemble_felan_t(blocks_at(dir == 0 ? -eps : 0, dir == 1 ? -eps : 0), topo, {}, nullptr);
    const MatX fd = (p.H.value() - m.H.value()) / (2 * eps);
    MatX jet(a.H.rows, a.H.cols);
    for (int i = 0; i < a.H.rows; ++i)
      for (int j = 0; j < a.H.cols; ++j) jet(i, j) = a.H(i, j).tangent(dir);
    EXPECT_LE((fd - jet).norm(), 1e-6 * std::max(1.0, jet.norm()));
    EXPECT_NEAR((p.m_hat.v - m.m_hat.v) / (2 * eps), a.m_hat.tangent(dir), 1e-6);
  }
}

}  // namespace
}  // namespace felan
