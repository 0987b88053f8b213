#pragma once

#include <array>
#include <functional>
#include <vector>

#include "felan/spatial.hpp"

namespace felan {

/// Default gravity in the world frame (m/s^2).
inline const Vec3 kGravity(0.0, 0.0, -9.81);

/// Generalized coordinates nu = [r (world, 3); Theta (roll, pitch, yaw); q],
/// their first and second time derivatives.
struct GeneralizedState {
  VecX pos;
  VecX vel;
  VecX acc;

  GeneralizedState() = default;
  explicit GeneralizedState(int n_q) : pos(VecX::Zero(6 + n_q)), vel(VecX::Zero(6 + n_q)), acc(VecX::Zero(6 + n_q)) {}

  int n_q() const { return static_cast<int>(pos.size()) - 6; }
  int dim() const { return static_cast<int>(pos.size()); }
  Vec3 r() const { return pos.segment<3>(0); }
  Vec3 theta() const { return pos.segment<3>(3); }
  VecX q() const { return pos.tail(pos.size() - 6); }
};

// Euler angles use the ZYX (yaw-pitch-roll) convention:
// R = Rz(yaw) Ry(pitch) Rx(roll), base to world.

Mat3 rotation(const Vec3& theta);
/// dR/dTheta_a for a = roll, pitch, yaw.
std::array<Mat3, 3> rotation_partials(const Vec3& theta);

/// E(Theta) with omega_body = E Theta_dot, i.e. W_eta^-1. Defined everywhere.
Mat3 angular_velocity_map(const Vec3& theta);
std::array<Mat3, 3> angular_velocity_map_partials(const Vec3& theta);

/// Throws GimbalLock when |cos(pitch)| < 0.05.
void check_gimbal(const Vec3& theta);

/// W_eta with Theta_dot = W_eta omega_body. Throws GimbalLock.
Mat3 euler_rate_matrix(const Vec3& theta);

/// T_H = blockdiag(R^T, W_eta^-1, 1).
MatX transform_matrix(const Vec3& theta, int n_q);

/// [world force; base-frame moment; joint torques] -> tau_nu.
/// The moment maps through W_eta^-T so that power is preserved.
VecX transform_torque(const VecX& tau_raw, const Vec3& theta);

/// T_H^T H T_H.
MatX transform_inertia(const MatX& h_base, const Vec3& theta);

/// P = -g^T (m r + R h); with g pointing down this is the usual m |g| z.
double potential_energy(double m, const Vec3& h, const Vec3& r, const Vec3& theta, const Vec3& gravity = kGravity);

/// dP/dnu for P built from a constant mass m and a first moment h(q).
/// dh[j] = dh/dq_j.
VecX potential_gradient(double m, const Vec3& h, const std::vector<Vec3>& dh, const VecX& pos,
                        const Vec3& gravity = kGravity);

/// Same, for a configuration-dependent mass m(q) with dm[j] = dm/dq_j.
VecX potential_gradient(double m, const std::vector<double>& dm, const Vec3& h, const std::vector<Vec3>& dh,
                        const VecX& pos, const Vec3& gravity = kGravity);

/// Inertia-side inputs of the Euler-Lagrange torque, all in the base frame.
struct InertiaTerms {
  MatX H;                  // (6+n_q)^2
  std::vector<MatX> dH;    // dH/dq_j
  double mass = 0.0;       // mass entering P
  std::vector<double> dmass;  // dm/dq_j; empty when m is constant
  Vec3 h = Vec3::Zero();
  std::vector<Vec3> dh;    // dh/dq_j
};

using InertiaFn = std::function<InertiaTerms(const VecX& q)>;

struct TorqueDecomposition {
  VecX inertial;
  VecX coriolis;
  VecX gravity;
  VecX total;  // (inertial + coriolis) + gravity
};

/// Euler-Lagrange torque of L = 1/2 nu_dot^T T^T H(q) T nu_dot - P(nu)
/// for a given dP/dnu.
TorqueDecomposition euler_lagrange_torque(const MatX& h, const std::vector<MatX>& dh, const VecX& gravity_term,
                                          const GeneralizedState& state);

TorqueDecomposition euler_lagrange_torque(const InertiaTerms& terms, const GeneralizedState& state,
                                          const Vec3& gravity = kGravity);

TorqueDecomposition euler_lagrange_torque(const InertiaFn& inertia, const GeneralizedState& state,
                                          const Vec3& gravity = kGravity);

/// Same as euler_lagrange_torque; named for the decomposition use.
inline TorqueDecomposition decompose_torque(const InertiaFn& inertia, const GeneralizedState& state,
                                            const Vec3& gravity = kGravity) {
  return euler_lagrange_torque(inertia, state, gravity);
}

/// Reverse-mode of the inertial+Coriolis part: given the adjoint of tau,
/// H_bar and dH_bar[j] (not symmetrized) such that
/// <tau_bar, tau> = <H_bar, H> + sum_j <dH_bar[j], dH[j]>.
struct KineticAdjoint {
  MatX H_bar;
  std::vector<MatX> dH_bar;
};
KineticAdjoint euler_lagrange_adjoint(const GeneralizedState& state, const VecX& tau_bar);

/// Reverse-mode of potential_gradient: adjoints of m, dm, h and dh.
struct PotentialAdjoint {
  double m_bar = 0.0;
  std::vector<double> dm_bar;
  Vec3 h_bar = Vec3::Zero();
  std::vector<Vec3> dh_bar;
};
PotentialAdjoint potential_gradient_adjoint(const VecX& pos, const VecX& tau_bar, const Vec3& gravity = kGravity);

}  // namespace felan
