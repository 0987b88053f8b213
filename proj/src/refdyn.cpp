#include "felan/refdyn.hpp"

#include <cmath>
#include <numbers>
#include <random>

#include "felan/io.hpp"
#include "felan/smallmat.hpp"

namespace felan {

namespace {

using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

Mat6 crm(const Vec6& v) {
  Mat6 m = Mat6::Zero();
  const Mat3 sw = skew(v.tail<3>());
  m.block<3, 3>(0, 0) = sw;
  m.block<3, 3>(0, 3) = skew(v.head<3>());
  m.block<3, 3>(3, 3) = sw;
  return m;
}

Mat6 crf(const Vec6& v) { return -crm(v).transpose(); }

Mat3 axis_rotation(const Vec3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

// Motion transform from parent to child coordinates for joint j at angle q.
Mat6 joint_transform(const JointPlacement& jp, double q) {
  const Mat3 e = jp.rotation * axis_rotation(jp.axis, q);
  Mat6 x = Mat6::Zero();
  x.block<3, 3>(0, 0) = e.transpose();
  x.block<3, 3>(0, 3) = -e.transpose() * skew(jp.translation);
  x.block<3, 3>(3, 3) = e.transpose();
  return x;
}

Vec6 joint_motion(const JointPlacement& jp) {
  Vec6 s = Vec6::Zero();
  s.tail<3>() = jp.axis;
  return s;
}

struct BodyKinematics {
  std::vector<Mat6> x;  // per joint
  std::vector<Vec6> v;  // per body
  std::vector<Vec6> a;  // per body
};

BodyKinematics body_kinematics(const GroundTruthModel& model, const GeneralizedState& s, const Vec3& gravity) {
  const int nq = model.n_q();
  const Vec3 theta = s.theta();
  const Mat3 rot = rotation(theta);
  const Mat3 e = angular_velocity_map(theta);
  const auto de = angular_velocity_map_partials(theta);
  const Vec3 theta_dot = s.vel.segment<3>(3);
  Mat3 e_dot = Mat3::Zero();
  for (int k = 0; k < 3; ++k) e_dot += theta_dot[k] * de[k];

  const Vec3 omega = e * theta_dot;
  const Vec3 omega_dot = e * s.acc.segment<3>(3) + e_dot * theta_dot;
  const Vec3 v_lin = rot.transpose() * s.vel.segment<3>(0);

  BodyKinematics k;
  k.x.resize(nq);
  k.v.resize(nq + 1);
  k.a.resize(nq + 1);
  k.v[0] << v_lin, omega;
  k.a[0] << rot.transpose() * (s.acc.segment<3>(0) - gravity) - omega.cross(v_lin), omega_dot;
  for (int j = 0; j < nq; ++j) {
    const JointPlacement& jp = model.joints()[j];
    const int parent = model.parent_body(j);
    const Vec6 sm = joint_motion(jp);
    const double qd = s.vel[6 + j];
    k.x[j] = joint_transform(jp, s.pos[6 + j]);
    k.v[j + 1] = k.x[j] * k.v[parent] + sm * qd;
    k.a[j + 1] = k.x[j] * k.a[parent] + sm * s.acc[6 + j] + crm(k.v[j + 1]) * sm * qd;
  }
  return k;
}

Mat6 spatial_matrix(const SpatialInertia& b) { return b.matrix(); }

// Raw base wrench [f; n] (body frame) and joint torques -> tau_nu.
VecX to_generalized(const Vec6& f_base, const VecX& tau_q, const Vec3& theta) {
  VecX raw(6 + tau_q.size());
  raw.segment<3>(0) = rotation(theta) * f_base.head<3>();
  raw.segment<3>(3) = f_base.tail<3>();
  raw.tail(tau_q.size()) = tau_q;
  return transform_torque(raw, theta);
}

void check_dims(const GroundTruthModel& model, const GeneralizedState& s) {
  const int n = 6 + model.n_q();
  require(s.pos.size() == n && s.vel.size() == n && s.acc.size() == n, ErrorCode::DimensionMismatch,
          "state does not match the model's joint count");
}

// ---------------------------------------------------------------------------
// Scalar-generic CRBA.

template <class S>
struct PoseT {
  M3<S> R;
  V3<S> p;
};

template <class S>
struct InertiaT {  // about the base origin, base frame
  S m;
  V3<S> h;
  M3<S> I;
};

template <class S>
M3<S> axis_rotation_t(const Vec3& a, const S& q) {
  const S c = ad::cos(q);
  const S s = ad::sin(q);
  const S one_minus_c = 1.0 - c;
  M3<S> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = one_minus_c * (a[i] * a[j]);
  r(0, 0) = r(0, 0) + c;
  r(1, 1) = r(1, 1) + c;
  r(2, 2) = r(2, 2) + c;
  r(0, 1) = r(0, 1) - s * a[2];
  r(1, 0) = r(1, 0) + s * a[2];
  r(0, 2) = r(0, 2) + s * a[1];
  r(2, 0) = r(2, 0) - s * a[1];
  r(1, 2) = r(1, 2) - s * a[0];
  r(2, 1) = r(2, 1) + s * a[0];
  return r;
}

template <class S>
std::vector<PoseT<S>> body_poses(const GroundTruthModel& model, const std::vector<S>& q) {
  std::vector<PoseT<S>> poses(model.n_bodies());
  poses[0] = {M3<S>::identity(), V3<S>::zero()};
  for (int j = 0; j < model.n_q(); ++j) {
    const JointPlacement& jp = model.joints()[j];
    const PoseT<S>& par = poses[model.parent_body(j)];
    poses[j + 1].R = par.R * (M3<S>::from(jp.rotation) * axis_rotation_t(jp.axis, q[j]));
    poses[j + 1].p = par.p + par.R * V3<S>::from(jp.translation);
  }
  return poses;
}

template <class S>
InertiaT<S> body_inertia_in_base(const SpatialInertia& b, const PoseT<S>& pose) {
  const V3<S> hr = pose.R * V3<S>::from(b.first_moment);  // R h_b
  const M3<S> ir = pose.R * M3<S>::from(b.rot_inertia.matrix()) * transpose(pose.R);
  const M3<S> sp = skew(pose.p);
  const M3<S> sh = skew(hr);
  InertiaT<S> out;
  out.m = S(b.mass);
  out.h = hr + b.mass * pose.p;
  out.I = ir + scaled(transpose(sp) * sp, b.mass) + transpose(sp) * sh + transpose(sh) * sp;
  return out;
}

template <class S>
void add_to(InertiaT<S>& acc, const InertiaT<S>& x) {
  acc.m = acc.m + x.m;
  acc.h = acc.h + x.h;
  acc.I = acc.I + x.I;
}

// [m l - h x a; h x l + I a] for motion [l; a].
template <class S>
std::array<S, 6> apply_inertia(const InertiaT<S>& c, const V3<S>& l, const V3<S>& a) {
  const V3<S> top = c.m * l - cross(c.h, a);
  const V3<S> bottom = cross(c.h, l) + c.I * a;
  return {top[0], top[1], top[2], bottom[0], bottom[1], bottom[2]};
}

template <class S>
struct CrbaResult {
  MatS<S> H;
  InertiaT<S> total;
};

template <class S>
CrbaResult<S> crba_t(const GroundTruthModel& model, const std::vector<SpatialInertia>& bodies,
                     const std::vector<S>& q) {
  const int nq = model.n_q();
  const int n = 6 + nq;
  const auto poses = body_poses(model, q);

  std::vector<InertiaT<S>> comp(nq);
  for (int j = 0; j < nq; ++j) comp[j] = body_inertia_in_base(bodies[j + 1], poses[j + 1]);
  InertiaT<S> total = body_inertia_in_base(bodies[0], poses[0]);
  for (int j = nq - 1; j >= 0; --j) {
    const int parent = model.topology().parent_joint(j);
    if (parent >= 0) {
      add_to(comp[parent], comp[j]);
    } else {
      add_to(total, comp[j]);
    }
  }

  // Motion columns at the base origin: [o x a; a].
  std::vector<V3<S>> sl(nq), sa(nq);
  for (int j = 0; j < nq; ++j) {
    const PoseT<S>& pose = poses[j + 1];
    sa[j] = pose.R * V3<S>::from(model.joints()[j].axis);
    sl[j] = cross(pose.p, sa[j]);
  }

  CrbaResult<S> out{MatS<S>(n, n, S(0.0)), total};
  MatS<S>& H = out.H;
  const M3<S> sh = skew(total.h);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      H(a, b) = a == b ? total.m : S(0.0);
      H(a, 3 + b) = sh(b, a);
      H(3 + a, b) = sh(a, b);
      H(3 + a, 3 + b) = total.I(a, b);
    }
  for (int j = 0; j < nq; ++j) {
    const auto f = apply_inertia(comp[j], sl[j], sa[j]);
    for (int r = 0; r < 6; ++r) {
      H(r, 6 + j) = f[r];
      H(6 + j, r) = f[r];
    }
    auto project = [&](int i) {
      return sl[i][0] * f[0] + sl[i][1] * f[1] + sl[i][2] * f[2] + sa[i][0] * f[3] + sa[i][1] * f[4] +
             sa[i][2] * f[5];
    };
    H(6 + j, 6 + j) = project(j);
    for (int a : model.topology().ancestors(j)) {
      const S v = project(a);
      H(6 + a, 6 + j) = v;
      H(6 + j, 6 + a) = v;
    }
  }
  return out;
}

void orthonormalize(Mat3& r) {
  Eigen::JacobiSVD<Mat3> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
  r = svd.matrixU() * svd.matrixV().transpose();
}

Vec3 json_vec3(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ParseError, std::string(what) + " must be a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

Mat3 json_mat3(const nlohmann::json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ParseError, std::string(what) + " must be 3x3");
  Mat3 m;
  for (int i = 0; i < 3; ++i) m.row(i) = json_vec3(j[i], what).transpose();
  return m;
}

nlohmann::json to_json_vec(const Vec3& v) { return {v[0], v[1], v[2]}; }
nlohmann::json to_json_mat(const Mat3& m) {
  return {to_json_vec(m.row(0)), to_json_vec(m.row(1)), to_json_vec(m.row(2))};
}

}  // namespace

GroundTruthModel::GroundTruthModel(RobotTopology topology, std::vector<JointPlacement> joints,
                                   std::vector<BodyParams> bodies, Vec3 gravity)
    : topology_(std::move(topology)), joints_(std::move(joints)), bodies_(std::move(bodies)), gravity_(gravity) {
  require(static_cast<int>(joints_.size()) == topology_.n_q(), ErrorCode::DimensionMismatch,
          "one placement per joint required");
  require(static_cast<int>(bodies_.size()) == topology_.n_q() + 1, ErrorCode::DimensionMismatch,
          "bodies must be the base plus one per joint");
  for (JointPlacement& jp : joints_) {
    require((jp.rotation.transpose() * jp.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() <= 1e-9 &&
                jp.rotation.determinant() > 0.0,
            ErrorCode::InvalidSpec, "joint rotation is not a proper rotation");
    if ((jp.rotation.transpose() * jp.rotation - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-12) {
      orthonormalize(jp.rotation);
    }
    require(std::abs(jp.axis.norm() - 1.0) <= 1e-9, ErrorCode::InvalidSpec, "joint axis must be unit length");
    if (std::abs(jp.axis.norm() - 1.0) > 1e-14) jp.axis.normalize();
  }
  for (BodyParams& b : bodies_) {
    if (b.mass < kMinBodyMass) {
      ++clamped_;
      if (b.mass > 0.0) {
        b.rot_inertia = SymMat3(b.rot_inertia.matrix() * (kMinBodyMass / b.mass));
      } else {
        // Point mass at the COM plus a small sphere keeps the body consistent.
        b.rot_inertia = SymMat3(kMinBodyMass * ((b.com.squaredNorm() + 1e-2) * Mat3::Identity() - b.com * b.com.transpose()));
      }
      b.mass = kMinBodyMass;
    }
  }
}

double GroundTruthModel::total_mass() const {
  double m = 0.0;
  for (const BodyParams& b : bodies_) m += b.mass;
  return m;
}

GroundTruthModel GroundTruthModel::from_json(const nlohmann::json& j) {
  try {
    RobotTopology topology = RobotTopology::from_json(j);
    Vec3 gravity = j.contains("gravity") ? json_vec3(j["gravity"], "gravity") : kGravity;
    if (!j.contains("joints") || !j["joints"].is_array() || !j.contains("bodies") || !j["bodies"].is_array()) {
      throw Error(ErrorCode::ParseError, "model needs 'joints' and 'bodies' arrays");
    }
    std::vector<JointPlacement> joints;
    for (const auto& jj : j["joints"]) {
      JointPlacement jp;
      jp.rotation = json_mat3(jj.at("rotation"), "joint rotation");
      jp.translation = json_vec3(jj.at("translation"), "joint translation");
      jp.axis = json_vec3(jj.at("axis"), "joint axis");
      joints.push_back(jp);
    }
    std::vector<BodyParams> bodies;
    for (const auto& jb : j["bodies"]) {
      BodyParams b;
      b.mass = jb.at("mass").get<double>();
      b.com = json_vec3(jb.at("com"), "body com");
      b.rot_inertia = SymMat3(json_mat3(jb.at("inertia"), "body inertia"));
      bodies.push_back(b);
    }
    return GroundTruthModel(std::move(topology), std::move(joints), std::move(bodies), gravity);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("model: ") + e.what());
  }
}

nlohmann::json GroundTruthModel::to_json() const {
  nlohmann::json j = topology_.to_json();
  j["gravity"] = to_json_vec(gravity_);
  j["joints"] = nlohmann::json::array();
  for (const JointPlacement& jp : joints_) {
    j["joints"].push_back(
        {{"rotation", to_json_mat(jp.rotation)}, {"translation", to_json_vec(jp.translation)}, {"axis", to_json_vec(jp.axis)}});
  }
  j["bodies"] = nlohmann::json::array();
  for (const BodyParams& b : bodies_) {
    j["bodies"].push_back(
        {{"mass", b.mass}, {"com", to_json_vec(b.com)}, {"inertia", to_json_mat(b.rot_inertia.matrix())}});
  }
  return j;
}

std::uint64_t GroundTruthModel::hash() const { return io::fnv1a64(to_json().dump()); }

std::vector<SpatialInertia> model_spatial_inertias(const GroundTruthModel& model) {
  std::vector<SpatialInertia> bodies;
  for (const BodyParams& b : model.bodies()) bodies.push_back(b.spatial());
  return bodies;
}

CompositeInertia composite_inertia(const GroundTruthModel& model, const VecX& q) {
  require(q.size() == model.n_q(), ErrorCode::DimensionMismatch, "q does not match the model");
  const std::vector<double> qv(q.data(), q.data() + q.size());
  const CrbaResult<double> r = crba_t(model, model_spatial_inertias(model), qv);
  return {r.H.value(), SpatialInertia{r.total.m, r.total.h.value(), SymMat3(r.total.I.value())}};
}

InertiaTerms oracle_inertia_terms(const GroundTruthModel& model, const VecX& q) {
  return oracle_inertia_terms(model, model_spatial_inertias(model), q);
}

InertiaTerms oracle_inertia_terms(const GroundTruthModel& model, const std::vector<SpatialInertia>& bodies,
                                  const VecX& q) {
  const int nq = model.n_q();
  require(q.size() == nq, ErrorCode::DimensionMismatch, "q does not match the model");
  require(static_cast<int>(bodies.size()) == model.n_bodies(), ErrorCode::DimensionMismatch,
          "one spatial inertia per body required");
  require(nq <= ad::kMaxTangents, ErrorCode::DimensionMismatch, "too many joints for forward derivatives");
  std::vector<ad::Jet> qj(nq);
  for (int j = 0; j < nq; ++j) qj[j] = ad::Jet::variable(q[j], nq, j);
  const CrbaResult<ad::Jet> r = crba_t(model, bodies, qj);

  const int n = 6 + nq;
  InertiaTerms t;
  t.H = r.H.value();
  t.dH.assign(nq, MatX::Zero(n, n));
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int j = 0; j < nq; ++j) t.dH[j](a, b) = r.H(a, b).tangent(j);
  t.mass = r.total.m.v;
  t.h = r.total.h.value();
  t.dh.resize(nq);
  for (int j = 0; j < nq; ++j) t.dh[j] = Vec3(r.total.h[0].tangent(j), r.total.h[1].tangent(j), r.total.h[2].tangent(j));
  return t;
}

VecX inverse_dynamics(const GroundTruthModel& model, const std::vector<SpatialInertia>& bodies,
                      const GeneralizedState& state, const Vec3& gravity) {
  check_dims(model, state);
  require(static_cast<int>(bodies.size()) == model.n_bodies(), ErrorCode::DimensionMismatch,
          "one spatial inertia per body required");
  check_gimbal(state.theta());
  const int nq = model.n_q();
  const BodyKinematics k = body_kinematics(model, state, gravity);
  std::vector<Vec6> f(nq + 1);
  for (int b = 0; b <= nq; ++b) {
    const Mat6 m = spatial_matrix(bodies[b]);
    f[b] = m * k.a[b] + crf(k.v[b]) * (m * k.v[b]);
  }
  VecX tau_q(nq);
  for (int j = nq - 1; j >= 0; --j) {
    tau_q[j] = joint_motion(model.joints()[j]).dot(f[j + 1]);
    f[model.parent_body(j)] += k.x[j].transpose() * f[j + 1];
  }
  return to_generalized(f[0], tau_q, state.theta());
}

VecX inverse_dynamics(const GroundTruthModel& model, const GeneralizedState& state) {
  return inverse_dynamics(model, model_spatial_inertias(model), state, model.gravity());
}

MatX inverse_dynamics_regressor(const GroundTruthModel& model, const GeneralizedState& state) {
  check_dims(model, state);
  check_gimbal(state.theta());
  const int nq = model.n_q();
  const int nb = model.n_bodies();
  const BodyKinematics k = body_kinematics(model, state, model.gravity());
  MatX y = MatX::Zero(6 + nq, 10 * nb);
  for (int b = 0; b < nb; ++b) {
    for (int p = 0; p < 10; ++p) {
      std::array<double, 10> unit{};
      unit[p] = 1.0;
      const SpatialInertia si = body_params_from(unit, InertialParamScheme::NS);
      const Mat6 m = spatial_matrix(si);
      Vec6 f = m * k.a[b] + crf(k.v[b]) * (m * k.v[b]);
      VecX tau_q = VecX::Zero(nq);
      // Walk from body b to the base.
      for (int body = b; body > 0;) {
        const int j = body - 1;
        tau_q[j] = joint_motion(model.joints()[j]).dot(f);
        f = k.x[j].transpose() * f;
        body = model.parent_body(j);
      }
      y.col(10 * b + p) = to_generalized(f, tau_q, state.theta());
    }
  }
  return y;
}

double potential_energy_bodies(const GroundTruthModel& model, const VecX& pos) {
  require(pos.size() == 6 + model.n_q(), ErrorCode::DimensionMismatch, "position does not match the model");
  const std::vector<double> q(pos.data() + 6, pos.data() + pos.size());
  const auto poses = body_poses(model, q);
  const Vec3 r = pos.segment<3>(0);
  const Mat3 rot = rotation(pos.segment<3>(3));
  double p = 0.0;
  for (int b = 0; b < model.n_bodies(); ++b) {
    const BodyParams& body = model.bodies()[b];
    const Vec3 com_base = poses[b].p.value() + poses[b].R.value() * body.com;
    p += -body.mass * model.gravity().dot(r + rot * com_base);
  }
  return p;
}

double kinetic_energy_bodies(const GroundTruthModel& model, const GeneralizedState& state) {
  check_dims(model, state);
  GeneralizedState s = state;
  s.acc.setZero();
  const BodyKinematics k = body_kinematics(model, s, Vec3::Zero());
  double e = 0.0;
  for (int b = 0; b < model.n_bodies(); ++b) e += 0.5 * k.v[b].dot(spatial_matrix(model.bodies()[b].spatial()) * k.v[b]);
  return e;
}

VecX forward_dynamics(const GroundTruthModel& model, const VecX& pos, const VecX& vel, const VecX& tau) {
  const int n = 6 + model.n_q();
  std::vector<SpatialInertia> bodies;
  for (const BodyParams& b : model.bodies()) bodies.push_back(b.spatial());
  GeneralizedState s;
  s.pos = pos;
  s.vel = vel;
  s.acc = VecX::Zero(n);
  const VecX bias = inverse_dynamics(model, bodies, s, model.gravity());
  s.vel.setZero();
  MatX h(n, n);
  for (int c = 0; c < n; ++c) {
    s.acc.setZero();
    s.acc[c] = 1.0;
    h.col(c) = inverse_dynamics(model, bodies, s, Vec3::Zero());
  }
  return (0.5 * (h + h.transpose())).ldlt().solve(tau - bias);
}

TrajectoryDataset generate_excitation(const GroundTruthModel& model, const ExcitationSpec& spec) {
  require(spec.duration > 0.0 && spec.rate > 0.0 && std::isfinite(spec.duration) && std::isfinite(spec.rate),
          ErrorCode::InvalidSpec, "duration and rate must be positive");
  require(spec.sines >= 1, ErrorCode::InvalidSpec, "need at least one sine per coordinate");
  require(spec.freq_min > 0.0 && spec.freq_max >= spec.freq_min, ErrorCode::InvalidSpec, "bad frequency range");
  require(spec.joint_amp_min >= 0.0 && spec.joint_amp_max >= spec.joint_amp_min && spec.base_amp >= 0.0 &&
              spec.roll_amp >= 0.0 && spec.yaw_amp >= 0.0 && spec.pitch_amp >= 0.0,
          ErrorCode::InvalidSpec, "amplitudes must be nonnegative and ordered");
  require(spec.pitch_amp <= 0.4, ErrorCode::InvalidSpec, "pitch amplitude must stay <= 0.4 rad");
  const double count = std::round(spec.duration * spec.rate);
  require(count >= 1.0 && count <= 1e8, ErrorCode::InvalidSpec, "sample count out of range");

  const int nq = model.n_q();
  const int n = 6 + nq;
  const int samples = static_cast<int>(count);

  struct Sine {
    double amp, omega, phase;
  };
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  std::vector<std::vector<Sine>> sines(n);
  std::vector<double> offset(n, 0.0);
  for (int c = 0; c < n; ++c) {
    for (int s = 0; s < spec.sines; ++s) {
      double amp;
      if (c < 3) {
        amp = uniform(0.0, spec.base_amp);
      } else if (c < 6) {
        const double bound = c == 3 ? spec.roll_amp : c == 4 ? spec.pitch_amp : spec.yaw_amp;
        amp = uniform(0.0, bound / spec.sines);
      } else {
        amp = uniform(spec.joint_amp_min, spec.joint_amp_max);
      }
      const double freq = uniform(spec.freq_min, spec.freq_max);
      sines[c].push_back({amp, 2.0 * std::numbers::pi * freq, uniform(0.0, 2.0 * std::numbers::pi)});
    }
    if (c >= 6) offset[c] = uniform(-0.5, 0.5);
  }
  if (n > 2) offset[2] = 0.5;  // base height

  TrajectoryDataset data(nq, samples);
  data.rate = spec.rate;
  std::vector<std::string> errors;
#pragma omp parallel for schedule(static)
  for (int i = 0; i < samples; ++i) {
    const double t = i / spec.rate;
    GeneralizedState s(nq);
    for (int c = 0; c < n; ++c) {
      double x = offset[c], v = 0.0, a = 0.0;
      for (const Sine& sn : sines[c]) {
        const double arg = sn.omega * t + sn.phase;
        x += sn.amp * std::sin(arg);
        v += sn.amp * sn.omega * std::cos(arg);
        a -= sn.amp * sn.omega * sn.omega * std::sin(arg);
      }
      s.pos[c] = x;
      s.vel[c] = v;
      s.acc[c] = a;
    }
    data.set_state(i, s);
    data.tau.row(i) = inverse_dynamics(model, s).transpose();
  }

  data.meta = {{"seed", spec.seed},
               {"rate", spec.rate},
               {"duration", spec.duration},
               {"model_hash", io::hex64(model.hash())},
               {"topology_hash", io::hex64(model.topology().hash())},
               {"topology", model.topology().to_json()},
               {"euler_convention", "ZYX"},
               {"gravity", {model.gravity()[0], model.gravity()[1], model.gravity()[2]}}};
  return data;
}

GroundTruthModel random_model(const RobotTopology& topology, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  std::vector<JointPlacement> joints(topology.n_q());
  for (JointPlacement& jp : joints) {
    const Vec3 angles(uniform(-std::numbers::pi, std::numbers::pi), uniform(-1.2, 1.2),
                      uniform(-std::numbers::pi, std::numbers::pi));
    jp.rotation = rotation(angles);
    jp.translation = Vec3(uniform(-0.3, 0.3), uniform(-0.3, 0.3), uniform(-0.3, 0.3));
    Vec3 axis(normal(rng), normal(rng), normal(rng));
    if (axis.norm() < 1e-6) axis = Vec3::UnitZ();
    jp.axis = axis.normalized();
  }
  std::vector<BodyParams> bodies(topology.n_q() + 1);
  for (BodyParams& b : bodies) {
    b.mass = std::exp(uniform(std::log(0.1), std::log(10.0)));
    b.com = Vec3(uniform(-0.2, 0.2), uniform(-0.2, 0.2), uniform(-0.2, 0.2));
    Mat3 c = Mat3::Zero();
    for (int i = 0; i < 3; ++i) {
      c(i, i) = uniform(0.02, 0.15);
      for (int j = 0; j < i; ++j) c(i, j) = uniform(-0.05, 0.05);
    }
    const Mat3 sigma_c = b.mass * c * c.transpose();
    const Mat3 sigma_o = sigma_c + b.mass * b.com * b.com.transpose();
    b.rot_inertia = SymMat3(sigma_o.trace() * Mat3::Identity() - sigma_o);
  }
  return GroundTruthModel(topology, std::move(joints), std::move(bodies));
}

SpatialInertia body_params_from(std::span<const double> theta, InertialParamScheme scheme) {
  require(theta.size() == 10, ErrorCode::DimensionMismatch, "body parameter vectors have 10 entries");
  SpatialInertia out;
  out.mass = theta[0];
  out.first_moment = Vec3(theta[1], theta[2], theta[3]);
  if (scheme == InertialParamScheme::NS) {
    Mat3 i;
    i << theta[4], theta[7], theta[8],
         theta[7], theta[5], theta[9],
         theta[8], theta[9], theta[6];
    out.rot_inertia = SymMat3(i);
    return out;
  }
  Mat3 c = Mat3::Zero();
  c(0, 0) = theta[4];
  c(1, 0) = theta[5];
  c(1, 1) = theta[6];
  c(2, 0) = theta[7];
  c(2, 1) = theta[8];
  c(2, 2) = theta[9];
  const Mat3 ccT = c * c.transpose();
  out.rot_inertia = scheme == InertialParamScheme::PD ? SymMat3(ccT) : SymMat3(ccT.trace() * Mat3::Identity() - ccT);
  return out;
}

std::array<double, 10> raw_from_body(const SpatialInertia& body, InertialParamScheme scheme) {
  std::array<double, 10> raw{};
  raw[0] = body.mass;
  for (int i = 0; i < 3; ++i) raw[1 + i] = body.first_moment[i];
  const Mat3& inertia = body.rot_inertia.matrix();
  if (scheme == InertialParamScheme::NS) {
    raw[4] = inertia(0, 0);
    raw[5] = inertia(1, 1);
    raw[6] = inertia(2, 2);
    raw[7] = inertia(0, 1);
    raw[8] = inertia(0, 2);
    raw[9] = inertia(1, 2);
    return raw;
  }
  // Sigma = Tr(I)/2 1 - I inverts I = Tr(Sigma) 1 - Sigma.
  const Mat3 target = scheme == InertialParamScheme::PD ? inertia : 0.5 * inertia.trace() * Mat3::Identity() - inertia;
  Eigen::LLT<Mat3> llt(target);
  require(llt.info() == Eigen::Success, ErrorCode::NotSPD, "body inertia is not representable in this scheme");
  const Mat3 c = llt.matrixL();
  raw[4] = c(0, 0);
  raw[5] = c(1, 0);
  raw[6] = c(1, 1);
  raw[7] = c(2, 0);
  raw[8] = c(2, 1);
  raw[9] = c(2, 2);
  return raw;
}

}  // namespace felan
