#pragma once

#include <utility>

#include "felan/smallmat.hpp"
#include "felan/spatial.hpp"
#include "felan/topology.hpp"

namespace felan {

struct InertiaShifts {
  double eps_L = 0.01;
  double eps_m = 0.1;
  double eps_D = 0.01;
};

/// softplus(x) + eps_L
double positive_diagonal(double x, double eps_L = 0.01);

/// Raw blocks feeding the structured assembly. Joint rows are stacked over
/// all branches in canonical joint order.
struct RawFactorOutputs {
  double theta_m = 1.0;
  Vec3 h = Vec3::Zero();
  Mat3 L_sigma = Mat3::Identity();  // lower triangular, positive diagonal
  MatX K;                           // n_q x 3
  MatX W;                           // n_q x 3
  MatX L_joint;                     // n_q x n_q, branch-sparse lower triangular
};

struct AssemblyDiagnostics {
  double mu_D = 0.0;
  double lambda_U = 0.0;
  double beta = 0.0;
};

struct AssembledInertia {
  double m = 0.0;      // theta_m^2
  double m_hat = 0.0;  // shifted mass on the diagonal of H
  Vec3 h = Vec3::Zero();
  MatX H;
  StructuredFactor L;
  AssemblyDiagnostics diagnostics;
};

/// D_hat = D + beta 1 with beta = eps_D + softplus(-lambda_min(D)).
std::pair<SymMat3, double> shift_rotational(const SymMat3& d, double eps_D = 0.01);

/// m_hat = softplus(m - lambda_U) + eps_m + lambda_U, T = m_hat 1 - U^T U,
/// lambda_U = lambda_max(U^T U).  U has 3 columns.
std::pair<double, SymMat3> shift_mass(double m, const MatX& u, double eps_m = 0.1);

/// L_FR = ((skew(h)^T - K^T W) L_R^-1)^T
Mat3 resolve_LFR(const Vec3& h, const MatX& k, const MatX& w, const Mat3& l_r);

/// Inverse of a lower-triangular 3x3 by forward substitution.
Mat3 lower_inverse(const Mat3& l);

AssembledInertia assemble_felan(const RawFactorOutputs& raw, const RobotTopology& topology,
                                const InertiaShifts& shifts = {});

/// Blocks of L supplied directly (branch sparsity and positive definiteness only).
struct BranchSparseRaw {
  Mat3 L_F = Mat3::Identity();
  Mat3 L_FR = Mat3::Zero();
  Mat3 L_R = Mat3::Identity();
  MatX K;
  MatX W;
  MatX L_joint;
};

struct BranchSparseInertia {
  MatX H;
  StructuredFactor L;
  double m = 0.0;  // Tr(H_linear)/3
  Vec3 h = Vec3::Zero();  // vee of H[3:6, 0:3]
};

BranchSparseInertia assemble_felan_bs(const BranchSparseRaw& raw, const RobotTopology& topology);

/// H = C C^T for a dense lower-triangular C.
MatX assemble_delan_dense(const MatX& c);

/// Mass and first moment read off an unconstrained H: Tr(H_linear)/3 and the
/// vee of the antisymmetric part of H[3:6, 0:3].
std::pair<double, Vec3> bridge_mass_moment(const MatX& h);

// ---------------------------------------------------------------------------
// Scalar-generic assembly used by the learning pipeline.

template <class S>
struct FelanBlocks {
  S theta_m;
  V3<S> h;
  M3<S> L_sigma;
  MatS<S> K;
  MatS<S> W;
  MatS<S> L_joint;
};

template <class S>
struct FelanAssembly {
  S m;
  S m_hat;
  MatS<S> H;
  S mu_D;
  S lambda_U;
  S beta;
  M3<S> L_R;
  M3<S> L_FR;
};

template <class S>
FelanAssembly<S> assemble_felan_t(const FelanBlocks<S>& raw, const RobotTopology& topology,
                                  const InertiaShifts& shifts, EigenDiagnostics* diag);

template <class S>
struct BranchSparseBlocks {
  M3<S> L_F;
  M3<S> L_FR;
  M3<S> L_R;
  MatS<S> K;
  MatS<S> W;
  MatS<S> L_joint;
};

template <class S>
MatS<S> assemble_felan_bs_t(const BranchSparseBlocks<S>& raw, const RobotTopology& topology);

/// H = C C^T, C dense lower triangular given row-major packed (N(N+1)/2).
template <class S>
MatS<S> assemble_delan_dense_t(const std::vector<S>& c_packed, int n);

template <class S>
std::pair<S, V3<S>> bridge_mass_moment_t(const MatS<S>& h);

template <class S>
M3<S> reverse_cholesky3(const M3<S>& a);

}  // namespace felan
