#include <gtest/gtest.h>

#include <cmath>

#include "felan/error.hpp"
#include "felan/refdyn.hpp"
#include "unit/generators.hpp"

namespace felan {
namespace {

using testing_gen::Gen;

RobotTopology two_branch() { return RobotTopology::chains({2, 2}); }

double rel_err(const VecX& a, const VecX& b) { return (a - b).norm() / std::max(1.0, b.norm()); }

TEST(Refdyn, CompositeMassBlockIsTotalMass) {
  const GroundTruthModel model = random_model(two_branch(), 3);
  Gen g(11);
  for (int t = 0; t < 50; ++t) {
    const CompositeInertia c = composite_inertia(model, g.vec(4, 2.0));
    EXPECT_NEAR(c.composite.mass, model.total_mass(), 1e-12);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) EXPECT_NEAR(c.H(i, j), i == j ? model.total_mass() : 0.0, 1e-12);
    const Mat3 coupling = c.H.block<3, 3>(3, 0);
    EXPECT_LE((coupling + coupling.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE((c.H - c.H.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<MatX>(c.H).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(Refdyn, CompositeSparsityMatchesTopology) {
  const RobotTopology topo({{Segment{2, std::nullopt}, Segment{1, 0}, Segment{2, 0}}, {Segment{3, std::nullopt}}});
  const GroundTruthModel model = random_model(topo, 5);
  Gen g(2);
  const CompositeInertia c = composite_inertia(model, g.vec(topo.n_q()));
  for (int i = 0; i < topo.n_q(); ++i)
    for (int j = 0; j < topo.n_q(); ++j) {
      const bool related = topo.is_ancestor_or_self(i, j) || topo.is_ancestor_or_self(j, i);
      if (!related) EXPECT_EQ(c.H(6 + i, 6 + j), 0.0) << i << "," << j;
    }
}

TEST(Refdyn, LemmaOneTriangleInequality) {
  Gen g(21);
  for (int m = 0; m < 20; ++m) {
    const RobotTopology topo = g.topology(3, 2, 3);
    const GroundTruthModel model = random_model(topo, 100 + m);
    for (int t = 0; t < 10; ++t) {
      const CompositeInertia c = composite_inertia(model, g.vec(topo.n_q(), 3.0));
      EXPECT_GE(triangle_margin(c.composite.rot_inertia), -1e-9);
    }
  }
}

TEST(Refdyn, MasslessLinksLeaveBaseInertia) {
  const RobotTopology topo = RobotTopology::chains({2});
  GroundTruthModel rnd = random_model(topo, 1);
  std::vector<BodyParams> bodies = rnd.bodies();
  bodies[1].mass = 0.0;
  bodies[2].mass = 0.0;
  const GroundTruthModel model(topo, rnd.joints(), bodies);
  EXPECT_EQ(model.clamped_bodies(), 2);
  Gen g(4);
  const MatX base = bodies[0].spatial().matrix();
  for (int t = 0; t < 5; ++t) {
    const CompositeInertia c = composite_inertia(model, g.vec(2, 3.0));
    EXPECT_LE((c.H.topLeftCorner<6, 6>() - base).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_GT(Eigen::SelfAdjointEigenSolver<MatX>(c.H).eigenvalues().minCoeff(), 0.0);
  }
}

TEST(Refdyn, KineticEnergyMatchesMassMatrix) {
  Gen g(8);
  for (int t = 0; t < 100; ++t) {
    const RobotTopology topo = g.topology(3, 2, 2);
    const GroundTruthModel model = random_model(topo, t);
    const GeneralizedState s = g.state(topo.n_q());
    const MatX hw = transform_inertia(composite_inertia(model, s.q()).H, s.theta());
    const double k2 = s.vel.dot(hw * s.vel);
    EXPECT_NEAR(k2, 2.0 * kinetic_energy_bodies(model, s), 1e-9 * std::abs(k2));
  }
}

TEST(Refdyn, StaticsGiveTotalWeight) {
  const GroundTruthModel model = random_model(two_branch(), 9);
  GeneralizedState s(4);
  Gen g(1);
  s.pos.tail(4) = g.vec(4);
  const VecX tau = inverse_dynamics(model, s);
  EXPECT_NEAR(tau[2], 9.81 * model.total_mass(), 1e-9);
  EXPECT_NEAR(tau[0], 0.0, 1e-9);
  EXPECT_NEAR(tau[1], 0.0, 1e-9);
  const InertiaTerms terms = oracle_inertia_terms(model, s.q());
  const VecX grav = potential_gradient(terms.mass, terms.h, terms.dh, s.pos);
  EXPECT_LE((tau - grav).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(Refdyn, CoriolisIsQuadraticInVelocity) {
  const GroundTruthModel model = random_model(two_branch(), 12);
  Gen g(3);
  for (int t = 0; t < 20; ++t) {
    GeneralizedState s = g.state(4);
    s.acc.setZero();
    GeneralizedState rest = s;
    rest.vel.setZero();
    const VecX base = inverse_dynamics(model, rest);
    const VecX c1 = inverse_dynamics(model, s) - base;
    for (double alpha : {0.5, 2.0}) {
      GeneralizedState scaled = s;
      scaled.vel *= alpha;
      const VecX ca = inverse_dynamics(model, scaled) - base;
      EXPECT_LE(rel_err(ca, alpha * alpha * c1), 1e-10);
    }
  }
}

TEST(Refdyn, LinearInAcceleration) {
  const GroundTruthModel model = random_model(two_branch(), 13);
  Gen g(5);
  GeneralizedState s = g.state(4);
  GeneralizedState a1 = s, a2 = s, a12 = s, a0 = s;
  a2.acc = g.vec(10);
  a12.acc = a1.acc + a2.acc;
  a0.acc.setZero();
  const VecX lhs = inverse_dynamics(model, a12) + inverse_dynamics(model, a0);
  const VecX rhs = inverse_dynamics(model, a1) + inverse_dynamics(model, a2);
  EXPECT_LE(rel_err(lhs, rhs), 1e-12);
}

TEST(Refdyn, RneaMatchesLagrangianWithOracleTerms) {
  Gen g(17);
  for (int t = 0; t < 40; ++t) {
    const RobotTopology topo = g.topology(3, 2, 2);
    const GroundTruthModel model = random_model(topo, 1000 + t);
    const GeneralizedState s = g.state(topo.n_q());
    const VecX rnea = inverse_dynamics(model, s);
    const VecX lag = euler_lagrange_torque(oracle_inertia_terms(model, s.q()), s).total;
    EXPECT_LE(rel_err(lag, rnea), 1e-9) << "case " << t;
  }
}

TEST(Refdyn, PotentialEnergyBodiesMatchesComposite) {
  Gen g(6);
  for (int t = 0; t < 50; ++t) {
    const GroundTruthModel model = random_model(two_branch(), 200 + t);
    const GeneralizedState s = g.state(4);
    const CompositeInertia c = composite_inertia(model, s.q());
    const double p_bodies = potential_energy_bodies(model, s.pos);
    const double p_comp = potential_energy(c.composite.mass, c.composite.first_moment, s.r(), s.theta());
    EXPECT_NEAR(p_bodies, p_comp, 1e-10 * std::max(1.0, std::abs(p_bodies)));
  }
}

TEST(Refdyn, PotentialTwoBodyHandSum) {
  const RobotTopology topo = RobotTopology::chains({1});
  JointPlacement jp;
  jp.translation = Vec3(0.0, 0.0, 0.5);
  BodyParams base{2.0, Vec3(0.0, 0.0, 0.1), SymMat3::identity()};
  BodyParams link{3.0, Vec3(0.0, 0.0, 0.2), SymMat3::identity()};
  const GroundTruthModel model(topo, {jp}, {base, link});
  const VecX pos = VecX::Zero(7);
  EXPECT_NEAR(potential_energy_bodies(model, pos), 9.81 * (2.0 * 0.1 + 3.0 * 0.7), 1e-12);
  VecX up = pos;
  up[2] = 1.5;
  EXPECT_NEAR(potential_energy_bodies(model, up) - potential_energy_bodies(model, pos), 5.0 * 9.81 * 1.5, 1e-12);
}

TEST(Refdyn, PotentialIgnoresMasslessLinkMotion) {
  const RobotTopology topo = RobotTopology::chains({1});
  GroundTruthModel rnd = random_model(topo, 2);
  std::vector<BodyParams> bodies = rnd.bodies();
  bodies[1].mass = 0.0;
  const GroundTruthModel model(topo, rnd.joints(), bodies);
  VecX pos = VecX::Zero(7);
  const double p0 = potential_energy_bodies(model, pos);
  pos[6] = 1.3;
  EXPECT_NEAR(potential_energy_bodies(model, pos), p0, 1e-4);
}

VecX rk4_step(const GroundTruthModel& model, const VecX& x, double dt) {
  const int n = static_cast<int>(x.size()) / 2;
  auto f = [&](const VecX& y) {
    VecX d(2 * n);
    d.head(n) = y.tail(n);
    d.tail(n) = forward_dynamics(model, y.head(n), y.tail(n), VecX::Zero(n));
    return d;
  };
  const VecX k1 = f(x);
  const VecX k2 = f(x + 0.5 * dt * k1);
  const VecX k3 = f(x + 0.5 * dt * k2);
  const VecX k4 = f(x + dt * k3);
  return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

double total_energy(const GroundTruthModel& model, const VecX& x) {
  const int n = static_cast<int>(x.size()) / 2;
  GeneralizedState s(n - 6);
  s.pos = x.head(n);
  s.vel = x.tail(n);
  return kinetic_energy_bodies(model, s) + potential_energy_bodies(model, s.pos);
}

TEST(Refdyn, UnforcedSimulationConservesEnergy) {
  const GroundTruthModel model = random_model(RobotTopology::chains({1, 1}), 31);
  Gen g(2);
  VecX x(16);
  x.head(8) = g.vec(8, 0.3);
  x.tail(8) = g.vec(8, 0.5);
  const double e0 = total_energy(model, x);
  const double dt = 1e-4;
  for (int i = 0; i < 10000; ++i) x = rk4_step(model, x, dt);
  const double e1 = total_energy(model, x);
  EXPECT_LE(std::abs(e1 - e0), 1e-6 * std::abs(e0));
}

TEST(Refdyn, ExcitationCountDeterminismAndDerivatives) {
  const GroundTruthModel model = random_model(two_branch(), 4);
  ExcitationSpec spec;
  spec.seed = 7;
  const TrajectoryDataset a = generate_excitation(model, spec);
  const TrajectoryDataset b = generate_excitation(model, spec);
  ASSERT_EQ(a.size(), 1000);
  EXPECT_EQ(dataset_to_csv(a), dataset_to_csv(b));
  const double dt = 1.0 / spec.rate;
  double worst = 0.0;
  for (int i = 1; i + 1 < a.size(); ++i) {
    const VecX fd = (a.pos.row(i + 1) - a.pos.row(i - 1)).transpose() / (2.0 * dt);
    const VecX v = a.vel.row(i).transpose();
    worst = std::max(worst, (fd - v).norm() / std::max(1.0, v.norm()));
  }
  EXPECT_LE(worst, 1e-3);
  EXPECT_LE(a.pos.col(4).cwiseAbs().maxCoeff(), 0.4);
}

TEST(Refdyn, ExcitationRejectsBadSpecs) {
  const GroundTruthModel model = random_model(two_branch(), 4);
  for (auto mutate : std::vector<std::function<void(ExcitationSpec&)>>{
           [](ExcitationSpec& s) { s.rate = 0.0; }, [](ExcitationSpec& s) { s.duration = -1.0; },
           [](ExcitationSpec& s) { s.pitch_amp = 0.5; }, [](ExcitationSpec& s) { s.sines = 0; }}) {
    ExcitationSpec spec;
    mutate(spec);
    try {
      generate_excitation(model, spec);
      FAIL() << "expected InvalidSpec";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidSpec);
    }
  }
}

TEST(Refdyn, BodyParamsSchemes) {
  const std::array<double, 10> pd{1, 0, 0, 0, 1, 0, 1, 0, 0, 1};
  EXPECT_LE((body_params_from(pd, InertialParamScheme::PD).rot_inertia.matrix() - Mat3::Identity()).norm(), 0.0);
  const std::array<double, 10> cov{1, 0, 0, 0, 1, 0, 2, 0, 0, 3};
  const Mat3 i = body_params_from(cov, InertialParamScheme::Cov).rot_inertia.matrix();
  EXPECT_EQ(i, Vec3(13, 10, 5).asDiagonal().toDenseMatrix());

  Gen g(9);
  int ns_violations = 0;
  for (int t = 0; t < 500; ++t) {
    std::array<double, 10> raw;
    for (double& v : raw) v = g.uniform(-1.0, 1.0);
    EXPECT_TRUE(triangle_inequality_satisfied(body_params_from(raw, InertialParamScheme::Cov).rot_inertia, 1e-9));
    if (!triangle_inequality_satisfied(body_params_from(raw, InertialParamScheme::NS).rot_inertia, 1e-9)) {
      ++ns_violations;
    }
  }
  EXPECT_GT(ns_violations, 0);
}

TEST(Refdyn, RawFromBodyRoundTrips) {
  const GroundTruthModel model = random_model(two_branch(), 3);
  for (const BodyParams& b : model.bodies()) {
    for (auto scheme : {InertialParamScheme::NS, InertialParamScheme::PD, InertialParamScheme::Cov}) {
      const auto raw = raw_from_body(b.spatial(), scheme);
      const SpatialInertia back = body_params_from(raw, scheme);
      EXPECT_NEAR(back.mass, b.mass, 1e-14);
      EXPECT_LE((back.first_moment - b.mass * b.com).norm(), 1e-14);
      EXPECT_LE((back.rot_inertia.matrix() - b.rot_inertia.matrix()).norm(), 1e-12);
    }
  }
}

TEST(Refdyn, RegressorReproducesInverseDynamics) {
  Gen g(23);
  const RobotTopology topo({{Segment{1, std::nullopt}, Segment{2, 0}}, {Segment{2, std::nullopt}}});
  const GroundTruthModel model = random_model(topo, 8);
  VecX pi(10 * model.n_bodies());
  for (int b = 0; b < model.n_bodies(); ++b) {
    const auto raw = raw_from_body(model.bodies()[b].spatial(), InertialParamScheme::NS);
    for (int k = 0; k < 10; ++k) pi[10 * b + k] = raw[k];
  }
  for (int t = 0; t < 10; ++t) {
    const GeneralizedState s = g.state(topo.n_q());
    EXPECT_LE(rel_err(inverse_dynamics_regressor(model, s) * pi, inverse_dynamics(model, s)), 1e-12);
  }
}

TEST(Refdyn, ModelJsonRoundTrip) {
  const GroundTruthModel model = random_model(two_branch(), 77);
  const GroundTruthModel back = GroundTruthModel::from_json(nlohmann::json::parse(model.to_json().dump()));
  EXPECT_EQ(back.hash(), model.hash());
  Gen g(1);
  const GeneralizedState s = g.state(4);
  EXPECT_EQ(inverse_dynamics(back, s), inverse_dynamics(model, s));
}

TEST(Refdyn, RejectsNonRigidPlacement) {
  const RobotTopology topo = RobotTopology::chains({1});
  JointPlacement jp;
  jp.rotation(0, 0) = 1.1;
  try {
    GroundTruthModel(topo, {jp}, {BodyParams{}, BodyParams{}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidSpec);
  }
}

TEST(Refdyn, InverseDynamicsChecksDimensionsAndGimbal) {
  const GroundTruthModel model = random_model(two_branch(), 4);
  GeneralizedState s(3);
  EXPECT_THROW(inverse_dynamics(model, s), Error);
  GeneralizedState lock(4);
  lock.pos[4] = std::numbers::pi / 2 - 0.01;
  try {
    inverse_dynamics(model, lock);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GimbalLock);
  }
}

}  // namespace
}  // namespace felan
