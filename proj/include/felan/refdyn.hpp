#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include <json.hpp>

#include "felan/dataset.hpp"
#include "felan/lagrangian.hpp"
#include "felan/spatial.hpp"
#include "felan/topology.hpp"

namespace felan {

/// Inertial parameters of one body in its own frame; rot_inertia is taken
/// about the body frame origin.
struct BodyParams {
  double mass = 1.0;
  Vec3 com = Vec3::Zero();
  SymMat3 rot_inertia = SymMat3::identity();

  SpatialInertia spatial() const { return {mass, mass * com, rot_inertia}; }
};

/// Fixed placement of a joint frame in its parent body frame, and the
/// revolute axis (unit, joint frame). The child body frame coincides with the
/// joint frame rotated by q about the axis.
struct JointPlacement {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  Vec3 axis = Vec3::UnitZ();
};

/// Bodies smaller than this are clamped on construction.
inline constexpr double kMinBodyMass = 1e-6;

class GroundTruthModel {
 public:
  GroundTruthModel() = default;
  /// bodies[0] is the base, bodies[1 + j] the body after joint j.
  /// Validates rigidity and unit axes; clamps near-massless bodies.
  GroundTruthModel(RobotTopology topology, std::vector<JointPlacement> joints, std::vector<BodyParams> bodies,
                   Vec3 gravity = kGravity);

  static GroundTruthModel from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
  std::uint64_t hash() const;

  const RobotTopology& topology() const { return topology_; }
  const std::vector<JointPlacement>& joints() const { return joints_; }
  const std::vector<BodyParams>& bodies() const { return bodies_; }
  const Vec3& gravity() const { return gravity_; }
  int n_q() const { return topology_.n_q(); }
  int n_bodies() const { return static_cast<int>(bodies_.size()); }
  double total_mass() const;
  /// Number of bodies whose mass was raised to kMinBodyMass.
  int clamped_bodies() const { return clamped_; }

  /// Body index of a joint's parent (0 = base).
  int parent_body(int joint) const { return topology_.parent_joint(joint) + 1; }

 private:
  RobotTopology topology_;
  std::vector<JointPlacement> joints_;
  std::vector<BodyParams> bodies_;
  Vec3 gravity_ = kGravity;
  int clamped_ = 0;
};

struct CompositeInertia {
  MatX H;                  // base frame, [linear; rotational; joints]
  SpatialInertia composite;  // top-left 6x6 block as (m, h(q), I_B(q))
};

/// Composite-rigid-body algorithm in the base frame. Depends only on q.
CompositeInertia composite_inertia(const GroundTruthModel& model, const VecX& q);

/// Per-body spatial inertias of the model, base first.
std::vector<SpatialInertia> model_spatial_inertias(const GroundTruthModel& model);

/// H, dH/dq, total mass, h(q), dh/dq: the inertia side of the Lagrangian.
InertiaTerms oracle_inertia_terms(const GroundTruthModel& model, const VecX& q);
/// Same kinematics with replacement body inertias (need not be consistent).
InertiaTerms oracle_inertia_terms(const GroundTruthModel& model, const std::vector<SpatialInertia>& bodies,
                                  const VecX& q);

/// Recursive Newton-Euler in body coordinates, mapped to tau_nu.
/// Throws GimbalLock, DimensionMismatch.
VecX inverse_dynamics(const GroundTruthModel& model, const GeneralizedState& state);

/// Same with explicit gravity and per-body spatial inertias (about each body
/// origin, body frame); the bodies may be physically inconsistent.
VecX inverse_dynamics(const GroundTruthModel& model, const std::vector<SpatialInertia>& bodies,
                      const GeneralizedState& state, const Vec3& gravity);

/// Sum over bodies of -m_i g^T r_i^W.
double potential_energy_bodies(const GroundTruthModel& model, const VecX& pos);

/// Sum over bodies of their kinetic energies, computed body by body.
double kinetic_energy_bodies(const GroundTruthModel& model, const GeneralizedState& state);

/// nu_ddot for given nu, nu_dot and tau_nu (mass matrix and bias from RNEA).
VecX forward_dynamics(const GroundTruthModel& model, const VecX& pos, const VecX& vel, const VecX& tau);

struct ExcitationSpec {
  double duration = 10.0;    // s
  double rate = 100.0;       // Hz
  int sines = 3;             // per coordinate
  double joint_amp_min = 0.1;
  double joint_amp_max = 0.6;  // rad, per sine
  double freq_min = 0.1;     // Hz
  double freq_max = 1.0;
  double base_amp = 0.1;     // m, per sine
  double roll_amp = 0.3;     // rad, total bound
  double pitch_amp = 0.3;    // rad, total bound; must be <= 0.4
  double yaw_amp = 0.8;      // rad, total bound
  std::uint64_t seed = 0;
};

/// Sum-of-sines excitation with analytic derivatives; tau from inverse_dynamics.
/// Throws InvalidSpec.
TrajectoryDataset generate_excitation(const GroundTruthModel& model, const ExcitationSpec& spec);

/// Random model: masses log-uniform in [0.1, 10] kg, COM in [-0.2, 0.2]^3 m,
/// inertia from a random mass covariance (always fully consistent).
GroundTruthModel random_model(const RobotTopology& topology, std::uint64_t seed);

enum class InertialParamScheme { NS, PD, Cov };

/// 10 raw values [m, h(3), c(6)] -> body inertial parameters.
///   NS:  c = (Ixx, Iyy, Izz, Ixy, Ixz, Iyz)
///   PD:  c = lower-triangular C row-major, I = C C^T
///   Cov: c = lower-triangular C, Sigma = C C^T, I = Tr(Sigma) 1 - Sigma
SpatialInertia body_params_from(std::span<const double> theta, InertialParamScheme scheme);

/// Raw vector reproducing `body` under `scheme` (exact for NS; PD/Cov use a
/// Cholesky factor and require the corresponding consistency).
std::array<double, 10> raw_from_body(const SpatialInertia& body, InertialParamScheme scheme);

/// tau_nu = Y pi with pi = [m, h, Ixx, Iyy, Izz, Ixy, Ixz, Iyz] per body.
MatX inverse_dynamics_regressor(const GroundTruthModel& model, const GeneralizedState& state);

}  // namespace felan
