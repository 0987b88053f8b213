#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "felan/error.hpp"
#include "felan/lagrangian.hpp"
#include "felan/refdyn.hpp"
#include "unit/generators.hpp"

namespace felan {
namespace {

using testing_gen::Gen;

Mat3 so3_exp(const Vec3& w) { return Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix(); }

TEST(Lagrangian, EulerRateMatrixAtZero) {
  EXPECT_LE((euler_rate_matrix(Vec3::Zero()) - Mat3::Identity()).norm(), 1e-15);
}

TEST(Lagrangian, EulerRateMatrixGimbalLock) {
  try {
    euler_rate_matrix(Vec3(0.0, std::numbers::pi / 2 - 0.01, 0.0));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GimbalLock);
  }
}

TEST(Lagrangian, EulerRateMatrixIntegratesRotation) {
  Gen g(1);
  const double dt = 1e-6;
  for (int t = 0; t < 100; ++t) {
    Vec3 theta = g.vec3(1.0);
    theta[1] = g.uniform(-1.2, 1.2);
    const Vec3 omega = g.vec3(2.0);
    const Vec3 next = theta + dt * euler_rate_matrix(theta) * omega;
    const Mat3 expected = rotation(theta) * so3_exp(omega * dt);
    EXPECT_LE((rotation(next) - expected).norm(), 50.0 * dt * dt);
    EXPECT_LE((euler_rate_matrix(theta) * angular_velocity_map(theta) - Mat3::Identity()).norm(), 1e-12);
  }
}

TEST(Lagrangian, RotationPartialsMatchFiniteDifferences) {
  Gen g(2);
  const Vec3 theta = g.vec3(1.0);
  const auto dr = rotation_partials(theta);
  const auto de = angular_velocity_map_partials(theta);
  const double h = 1e-6;
  for (int a = 0; a < 3; ++a) {
    Vec3 tp = theta, tm = theta;
    tp[a] += h;
    tm[a] -= h;
    EXPECT_LE(((rotation(tp) - rotation(tm)) / (2 * h) - dr[a]).norm(), 1e-8);
    EXPECT_LE(((angular_velocity_map(tp) - angular_velocity_map(tm)) / (2 * h) - de[a]).norm(), 1e-8);
  }
}

TEST(Lagrangian, TransformTorqueProperties) {
  Gen g(3);
  const VecX raw = g.vec(9);
  EXPECT_EQ(transform_torque(raw, Vec3::Zero()), raw);
  for (int t = 0; t < 100; ++t) {
    Vec3 theta = g.vec3(1.0);
    const VecX tau_raw = g.vec(9);
    const VecX tau = transform_torque(tau_raw, theta);
    EXPECT_EQ(tau.tail(3), tau_raw.tail(3));
    // Power: [r_dot; omega; q_dot] vs [r_dot; Theta_dot; q_dot].
    VecX v_nu = g.vec(9);
    VecX v_raw = v_nu;
    v_raw.segment<3>(3) = angular_velocity_map(theta) * v_nu.segment<3>(3);
    EXPECT_NEAR(tau_raw.dot(v_raw), tau.dot(v_nu), 1e-12 * (1.0 + std::abs(tau.dot(v_nu))));
  }
}

TEST(Lagrangian, TransformInertiaProperties) {
  Gen g(4);
  const MatX h = g.spd(8);
  EXPECT_LE((transform_inertia(h, Vec3::Zero()) - h).norm(), 1e-14);
  for (int t = 0; t < 50; ++t) {
    const Vec3 theta(g.uniform(-3, 3), g.uniform(-1.3, 1.3), g.uniform(-3, 3));
    const MatX hw = transform_inertia(h, theta);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<MatX>(hw).eigenvalues().minCoeff(), 0.0);
    const VecX v_nu = g.vec(8);
    VecX v_b = v_nu;
    v_b.segment<3>(0) = rotation(theta).transpose() * v_nu.segment<3>(0);
    v_b.segment<3>(3) = angular_velocity_map(theta) * v_nu.segment<3>(3);
    EXPECT_NEAR(v_nu.dot(hw * v_nu), v_b.dot(h * v_b), 1e-10 * v_b.dot(h * v_b));
  }
}

TEST(Lagrangian, PotentialEnergyBasics) {
  EXPECT_EQ(potential_energy(3.0, Vec3::Zero(), Vec3::Zero(), Vec3(0.1, 0.2, 0.3)), 0.0);
  const VecX pos = (VecX(7) << 1, 2, 3, 0.1, 0.2, 0.3, 0.4).finished();
  const VecX grad = potential_gradient(2.0, Vec3(0.1, 0.2, 0.3), {Vec3(0.0, 0.1, 0.0)}, pos);
  EXPECT_LE((grad.head<3>() - (-2.0 * kGravity)).norm(), 1e-15);
  EXPECT_NEAR(grad[2], 2.0 * 9.81, 1e-15);
}

TEST(Lagrangian, PotentialGradientMatchesFiniteDifferences) {
  Gen g(5);
  const GroundTruthModel model = random_model(RobotTopology::chains({2, 1}), 5);
  const VecX pos = g.state(3).pos;
  const InertiaTerms terms = oracle_inertia_terms(model, pos.tail(3));
  const VecX grad = potential_gradient(terms.mass, terms.h, terms.dh, pos);
  const double h = 1e-6;
  for (int i = 0; i < pos.size(); ++i) {
    VecX p = pos, m = pos;
    p[i] += h;
    m[i] -= h;
    const double fd = (potential_energy_bodies(model, p) - potential_energy_bodies(model, m)) / (2 * h);
    EXPECT_NEAR(grad[i], fd, 1e-6 * std::max(1.0, std::abs(fd)));
  }
}

InertiaFn oracle_fn(const GroundTruthModel& model) {
  return [&model](const VecX& q) { return oracle_inertia_terms(model, q); };
}

TEST(Lagrangian, MatchesOracleInverseDynamics) {
  const GroundTruthModel model = random_model(RobotTopology::chains({2, 2}), 42);
  Gen g(6);
  for (int t = 0; t < 200; ++t) {
    const GeneralizedState s = g.state(4);
    const VecX tau = euler_lagrange_torque(oracle_fn(model), s).total;
    const VecX ref = inverse_dynamics(model, s);
    EXPECT_LE((tau - ref).norm() / ref.norm(), 1e-6);
  }
}

TEST(Lagrangian, StaticTorqueIsPureGravity) {
  const GroundTruthModel model = random_model(RobotTopology::chains({2, 2}), 43);
  Gen g(7);
  GeneralizedState s = g.state(4);
  s.vel.setZero();
  s.acc.setZero();
  const TorqueDecomposition d = euler_lagrange_torque(oracle_fn(model), s);
  EXPECT_LE(d.inertial.norm() + d.coriolis.norm(), 1e-12);
  EXPECT_LE((d.total.head<3>() + model.total_mass() * kGravity).norm(), 1e-10);
}

TEST(Lagrangian, CoriolisQuadraticScaling) {
  const GroundTruthModel model = random_model(RobotTopology::chains({2, 2}), 44);
  Gen g(8);
  for (int t = 0; t < 20; ++t) {
    GeneralizedState s = g.state(4);
    s.acc.setZero();
    GeneralizedState s0 = s, s2 = s;
    s0.vel.setZero();
    s2.vel *= 2.0;
    const auto fn = oracle_fn(model);
    const VecX t0 = euler_lagrange_torque(fn, s0).total;
    const VecX d1 = euler_lagrange_torque(fn, s).total - t0;
    const VecX d2 = euler_lagrange_torque(fn, s2).total - t0;
    EXPECT_LE((d2 - 4.0 * d1).norm() / (4.0 * d1.norm()), 1e-9);
  }
}

TEST(Lagrangian, DecompositionSumsAndZeroVelocity) {
  const GroundTruthModel model = random_model(RobotTopology::chains({1, 2}), 45);
  Gen g(9);
  for (int t = 0; t < 20; ++t) {
    GeneralizedState s = g.state(3);
    const TorqueDecomposition d = decompose_torque(oracle_fn(model), s);
    EXPECT_EQ(d.total, (d.inertial + d.coriolis) + d.gravity);
    s.vel.setZero();
    EXPECT_EQ(decompose_torque(oracle_fn(model), s).coriolis.norm(), 0.0);
  }
}

TEST(Lagrangian, BaseTranslationInvariance) {
  const GroundTruthModel model = random_model(RobotTopology::chains({2, 2}), 46);
  Gen g(10);
  for (int t = 0; t < 20; ++t) {
    const GeneralizedState s = g.state(4);
    GeneralizedState moved = s;
    moved.pos.head<3>() += g.vec3(5.0);
    EXPECT_EQ(euler_lagrange_torque(oracle_fn(model), s).total, euler_lagrange_torque(oracle_fn(model), moved).total);
  }
}

TEST(Lagrangian, YawEquivariance) {
  const GroundTruthModel model = random_model(RobotTopology::chains({2, 2}), 47);
  Gen g(11);
  for (int t = 0; t < 20; ++t) {
    const GeneralizedState s = g.state(4);
    const double alpha = g.uniform(-3.0, 3.0);
    const Mat3 rz = Eigen::AngleAxisd(alpha, Vec3::UnitZ()).toRotationMatrix();
    GeneralizedState r = s;
    r.pos[5] += alpha;
    r.pos.head<3>() = rz * s.pos.head<3>();
    r.vel.head<3>() = rz * s.vel.head<3>();
    r.acc.head<3>() = rz * s.acc.head<3>();
    const VecX a = euler_lagrange_torque(oracle_fn(model), s).total;
    const VecX b = euler_lagrange_torque(oracle_fn(model), r).total;
    EXPECT_LE((b.tail(7) - a.tail(7)).norm(), 1e-9 * a.norm());
    EXPECT_LE((b.head<3>() - rz * a.head<3>()).norm(), 1e-9 * a.norm());
  }
}

TEST(Lagrangian, EnergyBalanceAlongTrajectory) {
  const GroundTruthModel model = random_model(RobotTopology::chains({2, 1}), 48);
  ExcitationSpec spec;
  spec.duration = 2.0;
  spec.rate = 1000.0;
  spec.seed = 3;
  const TrajectoryDataset data = generate_excitation(model, spec);
  const double dt = 1.0 / spec.rate;
  auto energy = [&](int i) {
    const GeneralizedState s = data.state(i);
    return kinetic_energy_bodies(model, s) + potential_energy_bodies(model, s.pos);
  };
  double worst = 0.0, scale = 0.0;
  for (int i = 1; i + 1 < data.size(); i += 37) {
    const GeneralizedState s = data.state(i);
    const VecX tau = euler_lagrange_torque(oracle_fn(model), s).total;
    const double power = s.vel.dot(tau);
    const double de = (energy(i + 1) - energy(i - 1)) / (2 * dt);
    worst = std::max(worst, std::abs(power - de));
    scale = std::max(scale, std::abs(power));
  }
  EXPECT_LE(worst, 1e-3 * std::max(1.0, scale));
}

TEST(Lagrangian, AdjointMatchesDirectionalDerivative) {
  Gen g(12);
  const GeneralizedState s = g.state(3);
  const MatX h = g.spd(9);
  std::vector<MatX> dh;
  for (int j = 0; j < 3; ++j) {
    const MatX a = g.mat(9, 9);
    dh.push_back(a + a.transpose());
  }
  const VecX tau_bar = g.vec(9);
  const KineticAdjoint adj = euler_lagrange_adjoint(s, tau_bar);
  // tau is linear in (H, dH); the pairing must match exactly.
  const VecX zero = VecX::Zero(9);
  const VecX tau = euler_lagrange_torque(h, dh, zero, s).total;
  double pairing = (adj.H_bar.array() * h.array()).sum();
  for (int j = 0; j < 3; ++j) pairing += (adj.dH_bar[j].array() * dh[j].array()).sum();
  EXPECT_NEAR(tau_bar.dot(tau), pairing, 1e-10 * std::max(1.0, std::abs(pairing)));

  const double m = 2.5;
  const Vec3 hv = g.vec3();
  std::vector<double> dm{0.1, -0.2, 0.3};
  std::vector<Vec3> dhv{g.vec3(), g.vec3(), g.vec3()};
  const VecX grad = potential_gradient(m, dm, hv, dhv, s.pos);
  const PotentialAdjoint pa = potential_gradient_adjoint(s.pos, tau_bar);
  // Linear in (m, dm, dh) and in h on the rotational rows.
  double pot = pa.m_bar * m + pa.h_bar.dot(hv);
  for (int j = 0; j < 3; ++j) pot += pa.dm_bar[j] * dm[j] + pa.dh_bar[j].dot(dhv[j]);
  EXPECT_NEAR(tau_bar.dot(grad), pot, 1e-10 * std::max(1.0, std::abs(pot)));
}

}  // namespace
}  // namespace felan
