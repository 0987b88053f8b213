#include "felan/methods.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "felan/error.hpp"
#include "felan/smallmat.hpp"

namespace felan {

namespace {

constexpr std::uint64_t kSeedStride = 0x9E3779B97F4A7C15ull;

int packed_size(int n) { return n * (n + 1) / 2; }

bool is_delan(Method m) { return m == Method::DeLaN || m == Method::DeLaN_PP; }

InertialParamScheme white_scheme(Method m) {
  switch (m) {
    case Method::WhiteBoxNS: return InertialParamScheme::NS;
    case Method::WhiteBoxPD: return InertialParamScheme::PD;
    default: return InertialParamScheme::Cov;
  }
}

template <class S>
S positive(const S& x, double eps) {
  return ad::softplus(x) + eps;
}

// Lower-triangular 3x3 from 6 packed values (row-major), positive diagonal.
template <class S>
M3<S> packed_lower3(const std::vector<S>& y, int at, double eps) {
  M3<S> l = M3<S>::zero();
  int p = at;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j <= i; ++j, ++p) l(i, j) = i == j ? positive(y[p], eps) : y[p];
  return l;
}

template <class S>
struct Assembly {
  MatS<S> H;
  S mass;
  V3<S> h;
  bool mass_varies = false;
  bool shifts = false;
  S m_hat, mu_D, lambda_U, beta;
};

// Joint blocks K, W, L_joint from the branch network outputs.
template <class S>
void branch_blocks(const MethodModel& model, const std::vector<std::vector<S>>& out, double eps, MatS<S>& k,
                   MatS<S>& w, MatS<S>& lq) {
  const int nq = model.topology().n_q();
  const S zero(0.0);
  k = MatS<S>(nq, 3, zero);
  w = MatS<S>(nq, 3, zero);
  lq = MatS<S>(nq, nq, zero);
  const auto& layouts = model.branch_layouts();
  for (std::size_t b = 0; b < layouts.size(); ++b) {
    const auto& lay = layouts[b];
    const std::vector<S>& y = out[1 + b];
    int p = 0;
    for (int i = 0; i < lay.size; ++i)
      for (int c = 0; c < 3; ++c) k(lay.offset + i, c) = y[p++];
    for (int i = 0; i < lay.size; ++i)
      for (int c = 0; c < 3; ++c) w(lay.offset + i, c) = y[p++];
    for (const auto& [i, j] : lay.l_entries) {
      lq(lay.offset + i, lay.offset + j) = i == j ? positive(y[p], eps) : y[p];
      ++p;
    }
  }
}

template <class S>
Assembly<S> assemble(const MethodModel& model, const std::vector<std::vector<S>>& out, const S& theta_m,
                     EigenDiagnostics* diag) {
  const Method method = model.method();
  const RobotTopology& topo = model.topology();
  const InertiaShifts& sh = model.options().shifts;
  Assembly<S> a;
  if (method == Method::FeLaN) {
    FelanBlocks<S> raw;
    raw.theta_m = theta_m;
    raw.h = {{out[0][0], out[0][1], out[0][2]}};
    raw.L_sigma = packed_lower3(out[0], 3, sh.eps_L);
    branch_blocks(model, out, sh.eps_L, raw.K, raw.W, raw.L_joint);
    FelanAssembly<S> f = assemble_felan_t(raw, topo, sh, diag);
    a.H = std::move(f.H);
    a.mass = f.m;
    a.h = raw.h;
    a.shifts = true;
    a.m_hat = f.m_hat;
    a.mu_D = f.mu_D;
    a.lambda_U = f.lambda_U;
    a.beta = f.beta;
    return a;
  }
  if (method == Method::FeLaN_BS) {
    BranchSparseBlocks<S> raw;
    raw.L_F = packed_lower3(out[0], 0, sh.eps_L);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) raw.L_FR(i, j) = out[0][6 + 3 * i + j];
    raw.L_R = packed_lower3(out[0], 15, sh.eps_L);
    branch_blocks(model, out, sh.eps_L, raw.K, raw.W, raw.L_joint);
    a.H = assemble_felan_bs_t(raw, topo);
  } else {
    const int n = topo.dim();
    std::vector<S> c = out[0];
    for (int i = 0; i < n; ++i) {
      const int d = packed_size(i) + i;
      c[d] = positive(out[0][d], sh.eps_L);
    }
    a.H = assemble_delan_dense_t(c, n);
  }
  auto [m, h] = bridge_mass_moment_t(a.H);
  a.mass = m;
  a.h = h;
  a.mass_varies = true;
  a.m_hat = m;
  return a;
}

template <class S>
InertiaTerms to_terms(const Assembly<S>& a, int nq) {
  const int n = 6 + nq;
  InertiaTerms t;
  t.H = a.H.value();
  t.dH.assign(nq, MatX::Zero(n, n));
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      const S& x = a.H(r, c);
      for (int j = 0; j < nq; ++j) t.dH[j](r, c) = x.tangent(j);
    }
  t.mass = ad::value(a.mass);
  if (a.mass_varies) {
    t.dmass.resize(nq);
    for (int j = 0; j < nq; ++j) t.dmass[j] = a.mass.tangent(j);
  }
  t.h = a.h.value();
  t.dh.resize(nq);
  for (int j = 0; j < nq; ++j) t.dh[j] = Vec3(a.h[0].tangent(j), a.h[1].tangent(j), a.h[2].tangent(j));
  return t;
}

VecX gravity_term(const InertiaTerms& t, const VecX& pos, const Vec3& gravity) {
  return t.dmass.empty() ? potential_gradient(t.mass, t.h, t.dh, pos, gravity)
                         : potential_gradient(t.mass, t.dmass, t.h, t.dh, pos, gravity);
}

// Network input and its tangent with respect to q (columns = all joints).
void joint_net_input(const MethodModel& model, int net, const VecX& q, VecX& x, MatX& dx) {
  const int nq = static_cast<int>(q.size());
  if (net == 0) {
    x = joint_features(q);
    dx = joint_features_jacobian(q);
    return;
  }
  const auto& lay = model.branch_layouts()[net - 1];
  x.resize(2 * lay.size);
  dx = MatX::Zero(2 * lay.size, nq);
  for (int i = 0; i < lay.size; ++i) {
    const double v = q[lay.offset + i];
    x[i] = std::cos(v);
    x[lay.size + i] = std::sin(v);
    dx(i, lay.offset + i) = -std::sin(v);
    dx(lay.size + i, lay.offset + i) = std::cos(v);
  }
}

// DeLaN potential input [r, cos Theta, sin Theta, cos q, sin q] and its
// tangent with respect to all positions.
void potential_input(const VecX& pos, VecX& x, MatX& dx) {
  const int n = static_cast<int>(pos.size());
  const int na = n - 3;
  x.resize(3 + 2 * na);
  dx = MatX::Zero(3 + 2 * na, n);
  for (int i = 0; i < 3; ++i) {
    x[i] = pos[i];
    dx(i, i) = 1.0;
  }
  for (int i = 0; i < na; ++i) {
    const double v = pos[3 + i];
    x[3 + i] = std::cos(v);
    x[3 + na + i] = std::sin(v);
    dx(3 + i, 3 + i) = -std::sin(v);
    dx(3 + na + i, 3 + i) = std::cos(v);
  }
}

VecX ffnn_input(const GeneralizedState& s) {
  const int nq = s.n_q();
  const int n = s.dim();
  VecX x(3 + nq + 2 * n);
  x << s.pos.tail(3 + nq), s.vel, s.acc;
  return x;
}

// pi = [m, h, Ixx, Iyy, Izz, Ixy, Ixz, Iyz] of one body.
std::array<double, 10> physical_params(const SpatialInertia& b) {
  const Mat3& i = b.rot_inertia.matrix();
  return {b.mass, b.first_moment[0], b.first_moment[1], b.first_moment[2],
          i(0, 0), i(1, 1),          i(2, 2),           i(0, 1),
          i(0, 2), i(1, 2)};
}

std::vector<int> hidden_or_default(const ModelOptions& o, Method m) {
  if (!o.hidden.empty()) return o.hidden;
  return m == Method::FFNN ? std::vector<int>{32, 32} : std::vector<int>{16, 16};
}

nlohmann::json options_to_json(const ModelOptions& o) {
  nlohmann::json j;
  j["hidden"] = o.hidden;
  j["eps_L"] = o.shifts.eps_L;
  j["eps_m"] = o.shifts.eps_m;
  j["eps_D"] = o.shifts.eps_D;
  j["w_U"] = o.w_U;
  j["w_D"] = o.w_D;
  j["prior_mass"] = o.prior_mass ? nlohmann::json(*o.prior_mass) : nlohmann::json(nullptr);
  j["seed"] = o.seed;
  j["gravity"] = {o.gravity[0], o.gravity[1], o.gravity[2]};
  return j;
}

ModelOptions options_from_json(const nlohmann::json& j) {
  ModelOptions o;
  o.hidden = j.at("hidden").get<std::vector<int>>();
  o.shifts.eps_L = j.at("eps_L").get<double>();
  o.shifts.eps_m = j.at("eps_m").get<double>();
  o.shifts.eps_D = j.at("eps_D").get<double>();
  o.w_U = j.at("w_U").get<double>();
  o.w_D = j.at("w_D").get<double>();
  if (!j.at("prior_mass").is_null()) o.prior_mass = j.at("prior_mass").get<double>();
  o.seed = j.at("seed").get<std::uint64_t>();
  const auto g = j.at("gravity").get<std::vector<double>>();
  require(g.size() == 3, ErrorCode::ParseError, "gravity needs 3 entries");
  o.gravity = Vec3(g[0], g[1], g[2]);
  return o;
}

std::vector<double> to_vector(const VecX& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VecX from_vector(const std::vector<double>& v) {
  return Eigen::Map<const VecX>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::string method_name(Method m) {
  switch (m) {
    case Method::FFNN: return "ffnn";
    case Method::DeLaN: return "delan";
    case Method::DeLaN_PP: return "delan_pp";
    case Method::FeLaN_BS: return "felan_bs";
    case Method::FeLaN: return "felan";
    case Method::WhiteBoxNS: return "wb_ns";
    case Method::WhiteBoxPD: return "wb_pd";
    case Method::WhiteBoxCov: return "wb_cov";
  }
  return "unknown";
}

Method parse_method(std::string_view name) {
  std::string key(name);
  for (char& c : key) c = c == '-' ? '_' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (Method m : all_methods())
    if (method_name(m) == key) return m;
  if (key == "whitebox_ns") return Method::WhiteBoxNS;
  if (key == "whitebox_pd") return Method::WhiteBoxPD;
  if (key == "whitebox_cov") return Method::WhiteBoxCov;
  throw Error(ErrorCode::InvalidSpec, "unknown method '" + std::string(name) + "'");
}

std::vector<Method> all_methods() {
  return {Method::FFNN,     Method::DeLaN,      Method::DeLaN_PP,   Method::FeLaN_BS,
          Method::FeLaN,    Method::WhiteBoxNS, Method::WhiteBoxPD, Method::WhiteBoxCov};
}

bool is_white_box(Method m) {
  return m == Method::WhiteBoxNS || m == Method::WhiteBoxPD || m == Method::WhiteBoxCov;
}

bool is_branch_sparse(Method m) { return m == Method::FeLaN || m == Method::FeLaN_BS; }

MethodModel MethodModel::create(Method method, const RobotTopology& topology, const ModelOptions& options,
                                const TrajectoryDataset* train, const GroundTruthModel* kinematics) {
  MethodModel m;
  m.method_ = method;
  m.topology_ = topology;
  m.options_ = options;
  m.options_.hidden = hidden_or_default(options, method);
  for (int w : m.options_.hidden) require(w >= 1, ErrorCode::InvalidSpec, "hidden widths must be positive");
  const int nq = topology.n_q();
  const int n = topology.dim();
  require(nq <= ad::kMaxTangents, ErrorCode::InvalidSpec, "too many joints for forward derivatives");

  auto widths = [&](int in, int out) {
    std::vector<int> w{in};
    w.insert(w.end(), m.options_.hidden.begin(), m.options_.hidden.end());
    w.push_back(out);
    return w;
  };
  auto add_net = [&](int in, int out) {
    const std::uint64_t seed = options.seed + kSeedStride * (m.nets_.size() + 1);
    m.nets_.push_back(MLP::init(widths(in, out), seed));
  };

  if (method == Method::FFNN) {
    const int in = 3 + nq + 2 * n;
    add_net(in, n);
    m.in_mean_ = VecX::Zero(in);
    m.in_std_ = VecX::Ones(in);
    m.out_mean_ = VecX::Zero(n);
    m.out_std_ = VecX::Ones(n);
    if (train != nullptr && train->size() > 0) {
      require(train->n_q == nq, ErrorCode::TopologyMismatch, "dataset joint count differs from topology");
      MatX xs(train->size(), in);
      for (int i = 0; i < train->size(); ++i) xs.row(i) = ffnn_input(train->state(i)).transpose();
      auto standardize = [](const MatX& data, VecX& mean, VecX& sd) {
        mean = data.colwise().mean().transpose();
        sd = ((data.rowwise() - mean.transpose()).array().square().colwise().mean()).sqrt().transpose();
        for (int c = 0; c < sd.size(); ++c)
          if (!(sd[c] > 1e-12)) sd[c] = 1.0;
      };
      standardize(xs, m.in_mean_, m.in_std_);
      standardize(train->tau, m.out_mean_, m.out_std_);
    }
    return m;
  }

  if (is_white_box(method)) {
    require(kinematics != nullptr, ErrorCode::InvalidSpec, "white-box methods need the kinematic model");
    require(kinematics->topology() == topology, ErrorCode::TopologyMismatch, "kinematic model topology differs");
    m.kinematics_ = *kinematics;
    // Unit-density-like start: 1 kg at the body origin, isotropic 0.1 kg m^2.
    std::vector<SpatialInertia> start(kinematics->n_bodies(),
                                      SpatialInertia{1.0, Vec3::Zero(), SymMat3::diagonal(0.1, 0.1, 0.1)});
    m.white_.assign(10 * start.size(), 0.0);
    m.set_white_box_bodies(start);
    return m;
  }

  if (is_delan(method)) {
    add_net(2 * nq, packed_size(n));
    if (method == Method::DeLaN) add_net(3 + 2 * (3 + nq), 1);
    return m;
  }

  // FeLaN / FeLaN-BS
  add_net(2 * nq, method == Method::FeLaN ? 9 : 21);
  const SparsityMask mask = sparsity_pattern(topology);
  for (int k = 0; k < topology.n_k(); ++k) {
    BranchLayout lay;
    lay.offset = topology.branch_offset(k);
    lay.size = topology.branch_size(k);
    for (int i = 0; i < lay.size; ++i)
      for (int j = 0; j <= i; ++j)
        if (mask(6 + lay.offset + i, 6 + lay.offset + j)) lay.l_entries.emplace_back(i, j);
    m.branches_.push_back(lay);
    add_net(2 * lay.size, 6 * lay.size + static_cast<int>(lay.l_entries.size()));
  }
  if (method == Method::FeLaN && options.prior_mass) {
    require(*options.prior_mass > 0.0, ErrorCode::InvalidSpec, "prior mass must be positive");
    m.theta_m_ = std::sqrt(*options.prior_mass);
  }
  return m;
}

int MethodModel::param_count() const {
  int n = 0;
  for (const MLP& net : nets_) n += net.param_count();
  if (method_ == Method::FeLaN) ++n;
  return n + static_cast<int>(white_.size());
}

VecX MethodModel::params() const {
  VecX p(param_count());
  int at = 0;
  for (const MLP& net : nets_) {
    net.pack(std::span<double>(p.data() + at, net.param_count()));
    at += net.param_count();
  }
  if (method_ == Method::FeLaN) p[at++] = theta_m_;
  for (double w : white_) p[at++] = w;
  return p;
}

void MethodModel::set_params(const VecX& p) {
  require(p.size() == param_count(), ErrorCode::DimensionMismatch, "parameter vector size");
  int at = 0;
  for (MLP& net : nets_) {
    net.unpack(std::span<const double>(p.data() + at, net.param_count()));
    at += net.param_count();
  }
  if (method_ == Method::FeLaN) theta_m_ = p[at++];
  for (double& w : white_) w = p[at++];
}

std::vector<SpatialInertia> MethodModel::white_box_bodies() const {
  std::vector<SpatialInertia> out;
  for (std::size_t b = 0; b * 10 < white_.size(); ++b)
    out.push_back(body_params_from(std::span<const double>(white_.data() + 10 * b, 10), white_scheme(method_)));
  return out;
}

void MethodModel::set_white_box_bodies(const std::vector<SpatialInertia>& bodies) {
  require(is_white_box(method_), ErrorCode::InvalidSpec, "not a white-box method");
  require(bodies.size() * 10 == white_.size(), ErrorCode::DimensionMismatch, "one inertia per body required");
  for (std::size_t b = 0; b < bodies.size(); ++b) {
    const auto raw = raw_from_body(bodies[b], white_scheme(method_));
    std::copy(raw.begin(), raw.end(), white_.begin() + 10 * b);
  }
}

MethodModel::Prediction MethodModel::predict(const GeneralizedState& state) const {
  const int nq = topology_.n_q();
  require(state.n_q() == nq && state.vel.size() == state.pos.size() && state.acc.size() == state.pos.size(),
          ErrorCode::DimensionMismatch, "state does not match the topology");
  Prediction out;
  if (method_ == Method::FFNN) {
    check_gimbal(state.theta());
    const VecX x = ((ffnn_input(state) - in_mean_).array() / in_std_.array()).matrix();
    out.torque.total = out_mean_ + out_std_.cwiseProduct(forward(nets_[0], x));
    return out;
  }
  if (is_white_box(method_)) {
    const InertiaTerms t = oracle_inertia_terms(kinematics_, white_box_bodies(), state.q());
    out.torque = euler_lagrange_torque(t, state, kinematics_.gravity());
    out.has_inertia = true;
    out.H = t.H;
    out.mass = out.m_hat = t.mass;
    out.h = t.h;
    return out;
  }

  const VecX q = state.q();
  const int n_inertia_nets = method_ == Method::DeLaN ? 1 : static_cast<int>(nets_.size());
  std::vector<std::vector<ad::Jet>> outs(n_inertia_nets);
  MlpCache cache;
  VecX x;
  MatX dx;
  for (int i = 0; i < n_inertia_nets; ++i) {
    joint_net_input(*this, i, q, x, dx);
    forward_tangent(nets_[i], x, dx, cache);
    const VecX& y = cache.a.back();
    const MatX& dy = cache.da.back();
    outs[i].resize(y.size());
    for (int o = 0; o < y.size(); ++o) {
      ad::Jet& j = outs[i][o];
      j.v = y[o];
      j.n = nq;
      for (int t = 0; t < nq; ++t) j.d[t] = dy(o, t);
    }
  }
  const Assembly<ad::Jet> a = assemble(*this, outs, ad::Jet(theta_m_), nullptr);
  const InertiaTerms t = to_terms(a, nq);
  VecX g;
  if (method_ == Method::DeLaN) {
    potential_input(state.pos, x, dx);
    forward_tangent(nets_[1], x, dx, cache);
    g = cache.da.back().row(0).transpose();
  } else {
    g = gravity_term(t, state.pos, options_.gravity);
  }
  out.torque = euler_lagrange_torque(t.H, t.dH, g, state);
  out.has_inertia = true;
  out.H = t.H;
  out.mass = t.mass;
  out.m_hat = a.m_hat.v;
  out.h = t.h;
  out.has_shifts = a.shifts;
  if (a.shifts) out.diagnostics = {a.mu_D.v, a.lambda_U.v, a.beta.v};
  return out;
}

io::Checkpoint MethodModel::to_checkpoint() const {
  io::Checkpoint ck;
  ck.manifest["format"] = "felan-model/1";
  ck.manifest["method"] = method_name(method_);
  ck.manifest["topology"] = topology_.to_json();
  ck.manifest["topology_hash"] = io::hex64(topology_.hash());
  ck.manifest["options"] = options_to_json(options_);
  ck.manifest["param_count"] = param_count();
  nlohmann::json widths = nlohmann::json::array();
  for (std::size_t i = 0; i < nets_.size(); ++i) {
    widths.push_back(nets_[i].widths());
    std::vector<double> p(nets_[i].param_count());
    nets_[i].pack(p);
    ck.arrays["net." + std::to_string(i)] = std::move(p);
  }
  ck.manifest["nets"] = widths;
  if (method_ == Method::FeLaN) ck.arrays["theta_m"] = {theta_m_};
  if (is_white_box(method_)) {
    ck.arrays["white"] = white_;
    ck.manifest["kinematics"] = kinematics_.to_json();
  }
  if (method_ == Method::FFNN) {
    ck.arrays["ffnn.in_mean"] = to_vector(in_mean_);
    ck.arrays["ffnn.in_std"] = to_vector(in_std_);
    ck.arrays["ffnn.out_mean"] = to_vector(out_mean_);
    ck.arrays["ffnn.out_std"] = to_vector(out_std_);
  }
  return ck;
}

MethodModel MethodModel::from_checkpoint(const io::Checkpoint& ck) {
  try {
    const nlohmann::json& j = ck.manifest;
    require(j.value("format", "") == "felan-model/1", ErrorCode::ParseError, "not a model checkpoint");
    const Method method = parse_method(j.at("method").get<std::string>());
    const RobotTopology topo = RobotTopology::from_json(j.at("topology"));
    require(io::hex64(topo.hash()) == j.at("topology_hash").get<std::string>(), ErrorCode::ParseError,
            "topology hash does not match the embedded topology");
    const ModelOptions opts = options_from_json(j.at("options"));
    std::optional<GroundTruthModel> kin;
    if (is_white_box(method)) kin = GroundTruthModel::from_json(j.at("kinematics"));
    MethodModel m = create(method, topo, opts, nullptr, kin ? &*kin : nullptr);
    auto array = [&](const std::string& name, std::size_t size) -> const std::vector<double>& {
      const auto it = ck.arrays.find(name);
      require(it != ck.arrays.end(), ErrorCode::ParseError, "checkpoint lacks array '" + name + "'");
      require(it->second.size() == size, ErrorCode::ParseError, "array '" + name + "' has the wrong length");
      return it->second;
    };
    const auto widths = j.at("nets").get<std::vector<std::vector<int>>>();
    require(widths.size() == m.nets_.size(), ErrorCode::ParseError, "network count differs");
    for (std::size_t i = 0; i < m.nets_.size(); ++i) {
      require(widths[i] == m.nets_[i].widths(), ErrorCode::ParseError, "network widths differ");
      m.nets_[i].unpack(array("net." + std::to_string(i), m.nets_[i].param_count()));
    }
    if (method == Method::FeLaN) m.theta_m_ = array("theta_m", 1)[0];
    if (is_white_box(method)) m.white_ = array("white", m.white_.size());
    if (method == Method::FFNN) {
      m.in_mean_ = from_vector(array("ffnn.in_mean", m.in_mean_.size()));
      m.in_std_ = from_vector(array("ffnn.in_std", m.in_std_.size()));
      m.out_mean_ = from_vector(array("ffnn.out_mean", m.out_mean_.size()));
      m.out_std_ = from_vector(array("ffnn.out_std", m.out_std_.size()));
    }
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("malformed model manifest: ") + e.what());
  }
}

// ---------------------------------------------------------------------------

GradientWorkspace::GradientWorkspace(const MethodModel& model) {
  for (const MLP& net : model.nets()) net_grads_.emplace_back(net.widths());
  caches_.resize(model.nets().size());
  white_grad_.assign(model.white_.size(), 0.0);
}

void GradientWorkspace::flush(VecX& grad) {
  int at = 0;
  std::vector<double> buf;
  for (MLP& g : net_grads_) {
    buf.resize(g.param_count());
    g.pack(buf);
    for (double v : buf) grad[at++] += v;
    g.set_zero();
  }
  if (at < grad.size() && white_grad_.empty()) {
    grad[at++] += theta_m_grad_;
    theta_m_grad_ = 0.0;
  }
  for (double& v : white_grad_) {
    grad[at++] += v;
    v = 0.0;
  }
}

SampleTerms GradientWorkspace::accumulate(const MethodModel& model, const GeneralizedState& state, const VecX& tau,
                                          const VecX& weights, double scale) {
  const Method method = model.method();
  const int nq = model.topology().n_q();
  const int n = model.topology().dim();
  require(state.n_q() == nq && tau.size() == n && weights.size() == n, ErrorCode::DimensionMismatch,
          "sample does not match the topology");
  SampleTerms terms;

  auto residual_adjoint = [&](const VecX& tau_hat) {
    const VecX r = tau_hat - tau;
    terms.residual = (weights.array() * r.array().square()).sum();
    return VecX(2.0 * scale * weights.cwiseProduct(r));
  };

  if (method == Method::FFNN) {
    check_gimbal(state.theta());
    const VecX x = ((ffnn_input(state) - model.in_mean_).array() / model.in_std_.array()).matrix();
    forward_tangent(model.nets_[0], x, MatX(x.size(), 0), caches_[0]);
    const VecX tau_bar = residual_adjoint(model.out_mean_ + model.out_std_.cwiseProduct(caches_[0].a.back()));
    backward_tangent(model.nets_[0], caches_[0], model.out_std_.cwiseProduct(tau_bar), MatX(n, 0), net_grads_[0]);
    return terms;
  }

  if (is_white_box(method)) {
    const MatX y = inverse_dynamics_regressor(model.kinematics_, state);
    const auto bodies = model.white_box_bodies();
    VecX pi(10 * bodies.size());
    for (std::size_t b = 0; b < bodies.size(); ++b) {
      const auto p = physical_params(bodies[b]);
      for (int k = 0; k < 10; ++k) pi[10 * b + k] = p[k];
    }
    const VecX pi_bar = y.transpose() * residual_adjoint(y * pi);
    for (std::size_t b = 0; b < bodies.size(); ++b) terms.m_hat += bodies[b].mass;
    const InertialParamScheme scheme = white_scheme(method);
    for (std::size_t b = 0; b < bodies.size(); ++b) {
      double* g = white_grad_.data() + 10 * b;
      const double* pb = pi_bar.data() + 10 * b;
      for (int k = 0; k < 4; ++k) g[k] += pb[k];
      if (scheme == InertialParamScheme::NS) {
        for (int k = 4; k < 10; ++k) g[k] += pb[k];
        continue;
      }
      // G: adjoint of the independent entries of I (upper triangle once).
      Mat3 gi = Mat3::Zero();
      gi(0, 0) = pb[4];
      gi(1, 1) = pb[5];
      gi(2, 2) = pb[6];
      gi(0, 1) = pb[7];
      gi(0, 2) = pb[8];
      gi(1, 2) = pb[9];
      const double* raw = model.white_.data() + 10 * b;
      Mat3 c = Mat3::Zero();
      c(0, 0) = raw[4];
      c(1, 0) = raw[5];
      c(1, 1) = raw[6];
      c(2, 0) = raw[7];
      c(2, 1) = raw[8];
      c(2, 2) = raw[9];
      // I = C C^T (PD) or Tr(C C^T) 1 - C C^T (Cov).
      const Mat3 sigma_bar = scheme == InertialParamScheme::PD ? gi : Mat3(gi.trace() * Mat3::Identity() - gi);
      const Mat3 c_bar = (sigma_bar + sigma_bar.transpose()) * c;
      g[4] += c_bar(0, 0);
      g[5] += c_bar(1, 0);
      g[6] += c_bar(1, 1);
      g[7] += c_bar(2, 0);
      g[8] += c_bar(2, 1);
      g[9] += c_bar(2, 2);
    }
    return terms;
  }

  // Lagrangian network methods: nets run with q-tangents, their outputs
  // become leaves of a jet tape, and the tape differentiates the assembly.
  const VecX q = state.q();
  const int n_inertia_nets = method == Method::DeLaN ? 1 : static_cast<int>(model.nets_.size());
  ad::TapeScope scope(tape_, nq);
  std::vector<std::vector<ad::TJet>> outs(n_inertia_nets);
  std::array<double, ad::kMaxTangents> row{};
  VecX x;
  MatX dx;
  for (int i = 0; i < n_inertia_nets; ++i) {
    joint_net_input(model, i, q, x, dx);
    forward_tangent(model.nets_[i], x, dx, caches_[i]);
    const VecX& y = caches_[i].a.back();
    const MatX& dy = caches_[i].da.back();
    outs[i].resize(y.size());
    for (int o = 0; o < y.size(); ++o) {
      for (int t = 0; t < nq; ++t) row[t] = dy(o, t);
      outs[i][o] = ad::TJet::leaf(tape_, y[o], std::span<const double>(row.data(), nq));
    }
  }
  const ad::TJet theta = ad::TJet::leaf(tape_, model.theta_m_, {});
  const Assembly<ad::TJet> a = assemble(model, outs, theta, &eig_);
  const InertiaTerms t = to_terms(a, nq);

  VecX g;
  if (method == Method::DeLaN) {
    potential_input(state.pos, x, dx);
    forward_tangent(model.nets_[1], x, dx, caches_[1]);
    g = caches_[1].da.back().row(0).transpose();
  } else {
    g = gravity_term(t, state.pos, model.options_.gravity);
  }
  const TorqueDecomposition torque = euler_lagrange_torque(t.H, t.dH, g, state);
  const VecX tau_bar = residual_adjoint(torque.total);

  tape_.prepare_adjoints();
  const KineticAdjoint ka = euler_lagrange_adjoint(state, tau_bar);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) {
      double* adj = a.H(r, c).adjoint();
      adj[0] += ka.H_bar(r, c);
      for (int j = 0; j < nq; ++j) adj[1 + j] += ka.dH_bar[j](r, c);
    }
  if (method != Method::DeLaN) {
    const PotentialAdjoint pa = potential_gradient_adjoint(state.pos, tau_bar, model.options_.gravity);
    double* madj = a.mass.adjoint();
    madj[0] += pa.m_bar;
    if (a.mass_varies)
      for (int j = 0; j < nq; ++j) madj[1 + j] += pa.dm_bar[j];
    for (int c = 0; c < 3; ++c) {
      double* hadj = a.h[c].adjoint();
      hadj[0] += pa.h_bar[c];
      for (int j = 0; j < nq; ++j) hadj[1 + j] += pa.dh_bar[j][c];
    }
  }
  terms.m_hat = a.m_hat.val();
  if (a.shifts) {
    const ModelOptions& o = model.options_;
    const double gap = a.m_hat.val() - a.mass.val();
    const double sp = ad::softplus(-a.mu_D.val());
    terms.aux = o.w_U * gap * gap + o.w_D * sp * sp;
    a.m_hat.adjoint()[0] += scale * 2.0 * o.w_U * gap;
    a.mass.adjoint()[0] -= scale * 2.0 * o.w_U * gap;
    a.mu_D.adjoint()[0] -= scale * 2.0 * o.w_D * sp * ad::sigmoid(-a.mu_D.val());
    terms.beta = a.beta.val();
  }
  tape_.backward();

  for (int i = 0; i < n_inertia_nets; ++i) {
    const int m = static_cast<int>(outs[i].size());
    VecX y_bar(m);
    MatX dy_bar(m, nq);
    for (int o = 0; o < m; ++o) {
      const double* adj = outs[i][o].adjoint();
      y_bar[o] = adj[0];
      for (int j = 0; j < nq; ++j) dy_bar(o, j) = adj[1 + j];
    }
    backward_tangent(model.nets_[i], caches_[i], y_bar, dy_bar, net_grads_[i]);
  }
  if (method == Method::DeLaN)
    backward_tangent(model.nets_[1], caches_[1], VecX::Zero(1), MatX(tau_bar.transpose()), net_grads_[1]);
  if (method == Method::FeLaN) theta_m_grad_ += theta.adjoint()[0];
  return terms;
}

}  // namespace felan
