#include "felan/lagrangian.hpp"

#include <cmath>

namespace felan {

namespace {

Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << 1, 0, 0, 0, c, -s, 0, s, c;
  return m;
}
Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, 0, s, 0, 1, 0, -s, 0, c;
  return m;
}
Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 m;
  m << c, -s, 0, s, c, 0, 0, 0, 1;
  return m;
}

// Structured products with T = blockdiag(R^T, E, 1) and its partials.
struct Transforms {
  Mat3 R;
  Mat3 E;
  std::array<Mat3, 3> dR;
  std::array<Mat3, 3> dE;

  explicit Transforms(const Vec3& theta)
      : R(rotation(theta)),
        E(angular_velocity_map(theta)),
        dR(rotation_partials(theta)),
        dE(angular_velocity_map_partials(theta)) {}

  VecX apply(const VecX& x) const {  // T x
    VecX y = x;
    y.segment<3>(0) = R.transpose() * x.segment<3>(0);
    y.segment<3>(3) = E * x.segment<3>(3);
    return y;
  }
  VecX apply_t(const VecX& x) const {  // T^T x
    VecX y = x;
    y.segment<3>(0) = R * x.segment<3>(0);
    y.segment<3>(3) = E.transpose() * x.segment<3>(3);
    return y;
  }
  VecX apply_partial(int a, const VecX& x) const {  // T_a x
    VecX y = VecX::Zero(x.size());
    y.segment<3>(0) = dR[a].transpose() * x.segment<3>(0);
    y.segment<3>(3) = dE[a] * x.segment<3>(3);
    return y;
  }
  VecX apply_partial_t(int a, const VecX& x) const {  // T_a^T x
    VecX y = VecX::Zero(x.size());
    y.segment<3>(0) = dR[a] * x.segment<3>(0);
    y.segment<3>(3) = dE[a].transpose() * x.segment<3>(3);
    return y;
  }
  VecX apply_rate(const Vec3& theta_dot, const VecX& x) const {  // T_dot x
    VecX y = VecX::Zero(x.size());
    for (int a = 0; a < 3; ++a) y += theta_dot[a] * apply_partial(a, x);
    return y;
  }
  VecX apply_rate_t(const Vec3& theta_dot, const VecX& x) const {  // T_dot^T x
    VecX y = VecX::Zero(x.size());
    for (int a = 0; a < 3; ++a) y += theta_dot[a] * apply_partial_t(a, x);
    return y;
  }
};

void check_state(const GeneralizedState& s) {
  require(s.pos.size() >= 6 && s.vel.size() == s.pos.size() && s.acc.size() == s.pos.size(),
          ErrorCode::DimensionMismatch, "state vectors must share length 6 + n_q");
}

}  // namespace

Mat3 rotation(const Vec3& theta) { return rot_z(theta[2]) * rot_y(theta[1]) * rot_x(theta[0]); }

std::array<Mat3, 3> rotation_partials(const Vec3& theta) {
  const Mat3 rx = rot_x(theta[0]), ry = rot_y(theta[1]), rz = rot_z(theta[2]);
  const Mat3 r = rz * ry * rx;
  return {r * skew(Vec3::UnitX()), rz * ry * skew(Vec3::UnitY()) * rx, skew(Vec3::UnitZ()) * r};
}

Mat3 angular_velocity_map(const Vec3& theta) {
  const double sr = std::sin(theta[0]), cr = std::cos(theta[0]);
  const double sp = std::sin(theta[1]), cp = std::cos(theta[1]);
  Mat3 e;
  e << 1.0, 0.0, -sp,
       0.0, cr, sr * cp,
       0.0, -sr, cr * cp;
  return e;
}

std::array<Mat3, 3> angular_velocity_map_partials(const Vec3& theta) {
  const double sr = std::sin(theta[0]), cr = std::cos(theta[0]);
  const double sp = std::sin(theta[1]), cp = std::cos(theta[1]);
  Mat3 d_roll, d_pitch;
  d_roll << 0.0, 0.0, 0.0,
            0.0, -sr, cr * cp,
            0.0, -cr, -sr * cp;
  d_pitch << 0.0, 0.0, -cp,
             0.0, 0.0, -sr * sp,
             0.0, 0.0, -cr * sp;
  return {d_roll, d_pitch, Mat3::Zero()};
}

void check_gimbal(const Vec3& theta) {
  if (std::abs(std::cos(theta[1])) < 0.05) {
    throw Error(ErrorCode::GimbalLock, "pitch " + std::to_string(theta[1]) + " is too close to +-pi/2");
  }
}

Mat3 euler_rate_matrix(const Vec3& theta) {
  check_gimbal(theta);
  const double sr = std::sin(theta[0]), cr = std::cos(theta[0]);
  const double cp = std::cos(theta[1]), tp = std::tan(theta[1]);
  Mat3 w;
  w << 1.0, sr * tp, cr * tp,
       0.0, cr, -sr,
       0.0, sr / cp, cr / cp;
  return w;
}

MatX transform_matrix(const Vec3& theta, int n_q) {
  check_gimbal(theta);
  MatX t = MatX::Identity(6 + n_q, 6 + n_q);
  t.block<3, 3>(0, 0) = rotation(theta).transpose();
  t.block<3, 3>(3, 3) = angular_velocity_map(theta);
  return t;
}

VecX transform_torque(const VecX& tau_raw, const Vec3& theta) {
  require(tau_raw.size() >= 6, ErrorCode::DimensionMismatch, "torque needs at least 6 entries");
  check_gimbal(theta);
  VecX out = tau_raw;
  out.segment<3>(3) = angular_velocity_map(theta).transpose() * tau_raw.segment<3>(3);
  return out;
}

MatX transform_inertia(const MatX& h_base, const Vec3& theta) {
  require(h_base.rows() == h_base.cols() && h_base.rows() >= 6, ErrorCode::DimensionMismatch,
          "inertia must be square with at least 6 rows");
  const MatX t = transform_matrix(theta, static_cast<int>(h_base.rows()) - 6);
  return t.transpose() * h_base * t;
}

double potential_energy(double m, const Vec3& h, const Vec3& r, const Vec3& theta, const Vec3& gravity) {
  return -gravity.dot(m * r + rotation(theta) * h);
}

VecX potential_gradient(double m, const std::vector<double>& dm, const Vec3& h, const std::vector<Vec3>& dh,
                        const VecX& pos, const Vec3& gravity) {
  const int nq = static_cast<int>(pos.size()) - 6;
  require(static_cast<int>(dh.size()) == nq && (dm.empty() || static_cast<int>(dm.size()) == nq),
          ErrorCode::DimensionMismatch, "potential derivatives do not match n_q");
  const Vec3 theta = pos.segment<3>(3);
  const Vec3 r = pos.segment<3>(0);
  const Mat3 rot = rotation(theta);
  const auto d_rot = rotation_partials(theta);
  VecX g(6 + nq);
  g.segment<3>(0) = -m * gravity;
  for (int a = 0; a < 3; ++a) g[3 + a] = -gravity.dot(d_rot[a] * h);
  for (int j = 0; j < nq; ++j) {
    double v = -gravity.dot(rot * dh[j]);
    if (!dm.empty()) v -= dm[j] * gravity.dot(r);
    g[6 + j] = v;
  }
  return g;
}

VecX potential_gradient(double m, const Vec3& h, const std::vector<Vec3>& dh, const VecX& pos,
                        const Vec3& gravity) {
  return potential_gradient(m, {}, h, dh, pos, gravity);
}

TorqueDecomposition euler_lagrange_torque(const MatX& h, const std::vector<MatX>& dh, const VecX& gravity_term,
                                          const GeneralizedState& state) {
  check_state(state);
  const int n = state.dim();
  const int nq = state.n_q();
  require(h.rows() == n && h.cols() == n && static_cast<int>(dh.size()) == nq && gravity_term.size() == n,
          ErrorCode::DimensionMismatch, "inertia terms do not match the state");
  const Vec3 theta = state.theta();
  check_gimbal(theta);
  const Transforms tf(theta);
  const Vec3 theta_dot = state.vel.segment<3>(3);

  const VecX u = tf.apply(state.vel);
  const VecX a = tf.apply(state.acc);
  const VecX w = tf.apply_rate(theta_dot, state.vel);
  const VecX hu = h * u;

  MatX h_dot = MatX::Zero(n, n);
  for (int j = 0; j < nq; ++j) h_dot += state.vel[6 + j] * dh[j];

  TorqueDecomposition out;
  out.inertial = tf.apply_t(h * a);

  VecX cor = tf.apply_rate_t(theta_dot, hu) + tf.apply_t(h * w + h_dot * u);
  for (int k = 0; k < 3; ++k) cor[3 + k] -= tf.apply_partial(k, state.vel).dot(hu);
  for (int j = 0; j < nq; ++j) cor[6 + j] -= 0.5 * u.dot(dh[j] * u);
  out.coriolis = cor;
  out.gravity = gravity_term;
  out.total = (out.inertial + out.coriolis) + out.gravity;
  return out;
}

TorqueDecomposition euler_lagrange_torque(const InertiaTerms& terms, const GeneralizedState& state,
                                          const Vec3& gravity) {
  check_state(state);
  const VecX g = potential_gradient(terms.mass, terms.dmass, terms.h, terms.dh, state.pos, gravity);
  return euler_lagrange_torque(terms.H, terms.dH, g, state);
}

TorqueDecomposition euler_lagrange_torque(const InertiaFn& inertia, const GeneralizedState& state,
                                          const Vec3& gravity) {
  check_state(state);
  return euler_lagrange_torque(inertia(state.q()), state, gravity);
}

KineticAdjoint euler_lagrange_adjoint(const GeneralizedState& state, const VecX& tau_bar) {
  const int nq = state.n_q();
  const Vec3 theta = state.theta();
  const Transforms tf(theta);
  const Vec3 theta_dot = state.vel.segment<3>(3);

  const VecX u = tf.apply(state.vel);
  const VecX a = tf.apply(state.acc);
  const VecX w = tf.apply_rate(theta_dot, state.vel);
  const VecX p = tf.apply(tau_bar);
  VecX z = tf.apply_rate(theta_dot, tau_bar);
  for (int k = 0; k < 3; ++k) z -= tau_bar[3 + k] * tf.apply_partial(k, state.vel);

  KineticAdjoint out;
  out.H_bar = p * (a + w).transpose() + z * u.transpose();
  out.dH_bar.resize(nq);
  for (int j = 0; j < nq; ++j) {
    out.dH_bar[j] = (state.vel[6 + j] * p - 0.5 * tau_bar[6 + j] * u) * u.transpose();
  }
  return out;
}

PotentialAdjoint potential_gradient_adjoint(const VecX& pos, const VecX& tau_bar, const Vec3& gravity) {
  const int nq = static_cast<int>(pos.size()) - 6;
  const Vec3 theta = pos.segment<3>(3);
  const Vec3 r = pos.segment<3>(0);
  const Mat3 rot = rotation(theta);
  const auto d_rot = rotation_partials(theta);
  PotentialAdjoint out;
  out.m_bar = -gravity.dot(tau_bar.segment<3>(0));
  for (int a = 0; a < 3; ++a) out.h_bar -= tau_bar[3 + a] * (d_rot[a].transpose() * gravity);
  const Vec3 rtg = rot.transpose() * gravity;
  const double gr = gravity.dot(r);
  out.dm_bar.resize(nq);
  out.dh_bar.resize(nq);
  for (int j = 0; j < nq; ++j) {
    out.dh_bar[j] = -tau_bar[6 + j] * rtg;
    out.dm_bar[j] = -tau_bar[6 + j] * gr;
  }
  return out;
}

}  // namespace felan
