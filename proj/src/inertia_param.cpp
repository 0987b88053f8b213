#include "felan/inertia_param.hpp"

#include <cmath>

namespace felan {

namespace {

// Rows r whose joint is a descendant of (or equal to) each joint.
std::vector<std::vector<int>> descendants_or_self(const RobotTopology& topology) {
  std::vector<std::vector<int>> out(topology.n_q());
  for (int r = 0; r < topology.n_q(); ++r) {
    out[r].push_back(r);
    for (int a : topology.ancestors(r)) out[a].push_back(r);
  }
  return out;
}

// Joint rows/columns of L^T L given the stacked joint rows [K W L_joint] of L.
template <class S>
void fill_joint_blocks(const MatS<S>& k, const MatS<S>& w, const MatS<S>& lq, const RobotTopology& topology,
                       MatS<S>& h) {
  const int nq = topology.n_q();
  const auto desc = descendants_or_self(topology);
  for (int i = 0; i < nq; ++i) {
    const auto& rows = desc[i];
    for (int c = 0; c < 3; ++c) {
      S sk = lq(rows[0], i) * k(rows[0], c);
      S sw = lq(rows[0], i) * w(rows[0], c);
      for (std::size_t t = 1; t < rows.size(); ++t) {
        sk = sk + lq(rows[t], i) * k(rows[t], c);
        sw = sw + lq(rows[t], i) * w(rows[t], c);
      }
      h(6 + i, c) = sk;
      h(c, 6 + i) = sk;
      h(6 + i, 3 + c) = sw;
      h(3 + c, 6 + i) = sw;
    }
    auto joint_entry = [&](int j) {
      S s = lq(rows[0], i) * lq(rows[0], j);
      for (std::size_t t = 1; t < rows.size(); ++t) s = s + lq(rows[t], i) * lq(rows[t], j);
      h(6 + i, 6 + j) = s;
      h(6 + j, 6 + i) = s;
    };
    joint_entry(i);
    for (int a : topology.ancestors(i)) joint_entry(a);
  }
}

template <class S>
M3<S> gram_columns(const MatS<S>& x) {  // X^T X, X has 3 columns
  M3<S> g;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b <= a; ++b) {
      S s(0.0);
      if (x.rows > 0) {
        s = x(0, a) * x(0, b);
        for (int r = 1; r < x.rows; ++r) s = s + x(r, a) * x(r, b);
      }
      g(a, b) = s;
      g(b, a) = s;
    }
  return g;
}

template <class S>
M3<S> cross_columns(const MatS<S>& x, const MatS<S>& y) {  // X^T Y
  M3<S> g;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      S s(0.0);
      if (x.rows > 0) {
        s = x(0, a) * y(0, b);
        for (int r = 1; r < x.rows; ++r) s = s + x(r, a) * y(r, b);
      }
      g(a, b) = s;
    }
  return g;
}

template <class S>
M3<S> lower_inverse3(const M3<S>& l) {
  M3<S> x = M3<S>::zero();
  for (int i = 0; i < 3; ++i) {
    const S inv = 1.0 / l(i, i);
    x(i, i) = inv;
    for (int j = 0; j < i; ++j) {
      S s = l(i, j) * x(j, j);
      for (int k = j + 1; k < i; ++k) s = s + l(i, k) * x(k, j);
      x(i, j) = -(s * inv);
    }
  }
  return x;
}

MatX to_eigen(const MatS<double>& m) { return m.value(); }

MatS<double> from_eigen(const MatX& m) {
  MatS<double> out(static_cast<int>(m.rows()), static_cast<int>(m.cols()), 0.0);
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out(i, j) = m(i, j);
  return out;
}

StructuredFactor make_factor(const Mat3& l_f, const Mat3& l_fr, const Mat3& l_r, const MatX& k, const MatX& w,
                             const MatX& lq, const RobotTopology& topology) {
  const int n = topology.dim();
  SparsityMask mask = sparsity_pattern(topology);
  MatX l = MatX::Zero(n, n);
  l.block<3, 3>(0, 0) = l_f.triangularView<Eigen::Lower>();
  l.block<3, 3>(3, 0) = l_fr;
  l.block<3, 3>(3, 3) = l_r.triangularView<Eigen::Lower>();
  l.block(6, 0, topology.n_q(), 3) = k;
  l.block(6, 3, topology.n_q(), 3) = w;
  for (int i = 0; i < topology.n_q(); ++i)
    for (int j = 0; j <= i; ++j)
      if (mask(6 + i, 6 + j)) l(6 + i, 6 + j) = lq(i, j);
  return StructuredFactor(std::move(l), std::move(mask));
}

void check_joint_shapes(const MatX& k, const MatX& w, const MatX& lq, const RobotTopology& topology) {
  const int nq = topology.n_q();
  require(k.rows() == nq && k.cols() == 3 && w.rows() == nq && w.cols() == 3 && lq.rows() == nq && lq.cols() == nq,
          ErrorCode::DimensionMismatch, "raw joint blocks do not match the topology");
}

}  // namespace

double positive_diagonal(double x, double eps_L) { return ad::softplus(x) + eps_L; }

std::pair<SymMat3, double> shift_rotational(const SymMat3& d, double eps_D) {
  const double beta = eps_D + ad::softplus(-lambda_min(d));
  return {SymMat3(d.matrix() + beta * Mat3::Identity()), beta};
}

std::pair<double, SymMat3> shift_mass(double m, const MatX& u, double eps_m) {
  require(u.cols() == 3, ErrorCode::DimensionMismatch, "U must have 3 columns");
  const SymMat3 utu(u.transpose() * u);
  const double lambda_u = lambda_max(utu);
  const double m_hat = ad::softplus(m - lambda_u) + eps_m + lambda_u;
  return {m_hat, SymMat3(m_hat * Mat3::Identity() - utu.matrix())};
}

Mat3 lower_inverse(const Mat3& l) { return lower_inverse3(M3<double>::from(l)).value(); }

Mat3 resolve_LFR(const Vec3& h, const MatX& k, const MatX& w, const Mat3& l_r) {
  const Mat3 rhs = skew(h).transpose() - k.transpose() * w;
  return (rhs * lower_inverse(l_r)).transpose();
}

template <class S>
M3<S> reverse_cholesky3(const M3<S>& a) {
  M3<S> work = a;
  M3<S> l = M3<S>::zero();
  for (int k = 2; k >= 0; --k) {
    if (!(ad::value(work(k, k)) > 0.0)) throw Error(ErrorCode::NotSPD, "nonpositive pivot in 3x3 factor");
    const S d = ad::sqrt(work(k, k));
    l(k, k) = d;
    const S inv = 1.0 / d;
    for (int j = 0; j < k; ++j) l(k, j) = work(k, j) * inv;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j <= i; ++j) {
        work(i, j) = work(i, j) - l(k, i) * l(k, j);
        work(j, i) = work(i, j);
      }
  }
  return l;
}

template <class S>
FelanAssembly<S> assemble_felan_t(const FelanBlocks<S>& raw, const RobotTopology& topology,
                                  const InertiaShifts& shifts, EigenDiagnostics* diag) {
  using ad::softplus;
  const int n = topology.dim();
  FelanAssembly<S> out;
  out.m = raw.theta_m * raw.theta_m;

  // Sigma_R = L_sigma^T L_sigma; I = Tr(Sigma) 1 - Sigma
  M3<S> sigma;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b <= a; ++b) {
      // L_sigma lower triangular: rows r >= max(a, b) contribute.
      S s = raw.L_sigma(a, a) * raw.L_sigma(a, b);
      for (int r = a + 1; r < 3; ++r) s = s + raw.L_sigma(r, a) * raw.L_sigma(r, b);
      sigma(a, b) = s;
      sigma(b, a) = s;
    }
  const S tr = trace(sigma);
  const M3<S> wtw = gram_columns(raw.W);
  M3<S> d;
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) d(a, b) = (a == b ? tr - sigma(a, b) : -sigma(a, b)) - wtw(a, b);

  out.mu_D = extremal_eigenvalue(d, /*largest=*/false, diag);
  out.beta = softplus(-out.mu_D) + shifts.eps_D;
  M3<S> d_hat = d;
  for (int a = 0; a < 3; ++a) d_hat(a, a) = d(a, a) + out.beta;
  out.L_R = reverse_cholesky3(d_hat);

  const M3<S> coupling = transpose(skew(raw.h)) - cross_columns(raw.K, raw.W);
  out.L_FR = transpose(coupling * lower_inverse3(out.L_R));

  const M3<S> utu = transpose(out.L_FR) * out.L_FR + gram_columns(raw.K);
  out.lambda_U = extremal_eigenvalue(utu, /*largest=*/true, diag);
  out.m_hat = softplus(out.m - out.lambda_U) + shifts.eps_m + out.lambda_U;

  out.H = MatS<S>(n, n, S(0.0));
  MatS<S>& H = out.H;
  for (int a = 0; a < 3; ++a) H(a, a) = out.m_hat;
  const M3<S> sh = skew(raw.h);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      H(3 + a, b) = sh(a, b);
      H(b, 3 + a) = sh(a, b);
      H(3 + a, 3 + b) = a == b ? (tr - sigma(a, b)) + out.beta : -sigma(a, b);
    }
  fill_joint_blocks(raw.K, raw.W, raw.L_joint, topology, H);
  return out;
}

template <class S>
MatS<S> assemble_felan_bs_t(const BranchSparseBlocks<S>& raw, const RobotTopology& topology) {
  const int n = topology.dim();
  MatS<S> H(n, n, S(0.0));
  const M3<S> ff = transpose(raw.L_F) * raw.L_F + transpose(raw.L_FR) * raw.L_FR + gram_columns(raw.K);
  const M3<S> rf = transpose(raw.L_R) * raw.L_FR + cross_columns(raw.W, raw.K);
  const M3<S> rr = transpose(raw.L_R) * raw.L_R + gram_columns(raw.W);
  for (int a = 0; a < 3; ++a)
    for (int b = 0; b < 3; ++b) {
      H(a, b) = ff(a, b);
      H(3 + a, b) = rf(a, b);
      H(b, 3 + a) = rf(a, b);
      H(3 + a, 3 + b) = rr(a, b);
    }
  fill_joint_blocks(raw.K, raw.W, raw.L_joint, topology, H);
  return H;
}

template <class S>
MatS<S> assemble_delan_dense_t(const std::vector<S>& c, int n) {
  auto at = [&](int i, int j) -> const S& { return c[static_cast<std::size_t>(i) * (i + 1) / 2 + j]; };
  MatS<S> H(n, n, S(0.0));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j) {
      S s = at(i, 0) * at(j, 0);
      for (int k = 1; k <= j; ++k) s = s + at(i, k) * at(j, k);
      H(i, j) = s;
      H(j, i) = s;
    }
  return H;
}

template <class S>
std::pair<S, V3<S>> bridge_mass_moment_t(const MatS<S>& h) {
  const S m = (h(0, 0) + h(1, 1) + h(2, 2)) * (1.0 / 3.0);
  V3<S> v;
  v[0] = (h(5, 1) - h(4, 2)) * 0.5;
  v[1] = (h(3, 2) - h(5, 0)) * 0.5;
  v[2] = (h(4, 0) - h(3, 1)) * 0.5;
  return {m, v};
}

#define FELAN_INSTANTIATE(S)                                                                                   \
  template M3<S> reverse_cholesky3<S>(const M3<S>&);                                                           \
  template FelanAssembly<S> assemble_felan_t<S>(const FelanBlocks<S>&, const RobotTopology&, const InertiaShifts&, \
                                                EigenDiagnostics*);                                            \
  template MatS<S> assemble_felan_bs_t<S>(const BranchSparseBlocks<S>&, const RobotTopology&);                 \
  template MatS<S> assemble_delan_dense_t<S>(const std::vector<S>&, int);                                      \
  template std::pair<S, V3<S>> bridge_mass_moment_t<S>(const MatS<S>&);

FELAN_INSTANTIATE(double)
FELAN_INSTANTIATE(ad::Jet)
FELAN_INSTANTIATE(ad::TJet)
#undef FELAN_INSTANTIATE

AssembledInertia assemble_felan(const RawFactorOutputs& raw, const RobotTopology& topology,
                                const InertiaShifts& shifts) {
  check_joint_shapes(raw.K, raw.W, raw.L_joint, topology);
  FelanBlocks<double> blocks{raw.theta_m, V3<double>::from(raw.h), M3<double>::from(raw.L_sigma),
                             from_eigen(raw.K), from_eigen(raw.W), from_eigen(raw.L_joint)};
  const FelanAssembly<double> a = assemble_felan_t(blocks, topology, shifts, nullptr);

  const Mat3 l_fr = a.L_FR.value();
  MatX u(3 + topology.n_q(), 3);
  u << l_fr, raw.K;
  const Mat3 t = a.m_hat * Mat3::Identity() - u.transpose() * u;
  const Mat3 l_f = reverse_cholesky(t).dense();

  return AssembledInertia{a.m,
                          a.m_hat,
                          raw.h,
                          to_eigen(a.H),
                          make_factor(l_f, l_fr, a.L_R.value(), raw.K, raw.W, raw.L_joint, topology),
                          {a.mu_D, a.lambda_U, a.beta}};
}

BranchSparseInertia assemble_felan_bs(const BranchSparseRaw& raw, const RobotTopology& topology) {
  check_joint_shapes(raw.K, raw.W, raw.L_joint, topology);
  BranchSparseBlocks<double> blocks{M3<double>::from(raw.L_F),  M3<double>::from(raw.L_FR),
                                    M3<double>::from(raw.L_R),  from_eigen(raw.K),
                                    from_eigen(raw.W),          from_eigen(raw.L_joint)};
  // Only the lower triangles of the diagonal blocks are part of L.
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) {
      blocks.L_F(i, j) = 0.0;
      blocks.L_R(i, j) = 0.0;
    }
  MatX h = to_eigen(assemble_felan_bs_t(blocks, topology));
  auto [m, first_moment] = bridge_mass_moment(h);
  return {std::move(h), make_factor(raw.L_F, raw.L_FR, raw.L_R, raw.K, raw.W, raw.L_joint, topology), m,
          first_moment};
}

MatX assemble_delan_dense(const MatX& c) {
  require(c.rows() == c.cols(), ErrorCode::DimensionMismatch, "C must be square");
  const MatX l = c.triangularView<Eigen::Lower>();
  return l * l.transpose();
}

std::pair<double, Vec3> bridge_mass_moment(const MatX& h) {
  require(h.rows() >= 6 && h.cols() >= 6, ErrorCode::DimensionMismatch, "H must be at least 6x6");
  return {h.block<3, 3>(0, 0).trace() / 3.0, vee(h.block<3, 3>(3, 0))};
}

}  // namespace felan
