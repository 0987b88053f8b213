#include "felan/spatial.hpp"

#include <algorithm>
#include <cmath>

#include "felan/topology.hpp"

namespace felan {

SymEigen3 sym_eigen3(const Mat3& a) {
  const Mat3 s = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Mat3> solver;
  solver.computeDirect(s);
  const double scale = std::max(s.cwiseAbs().maxCoeff(), 1e-300);
  const Mat3 residual = s * solver.eigenvectors() - solver.eigenvectors() * solver.eigenvalues().asDiagonal();
  if (!solver.eigenvalues().allFinite() || residual.cwiseAbs().maxCoeff() > 1e-12 * scale) {
    solver.compute(s);
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

double lambda_min(const SymMat3& a) { return sym_eigen3(a.matrix()).values(0); }
double lambda_max(const SymMat3& a) { return sym_eigen3(a.matrix()).values(2); }

Mat3 skew(const Vec3& v) {
  Mat3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

Vec3 vee(const Mat3& s) {
  return 0.5 * Vec3(s(2, 1) - s(1, 2), s(0, 2) - s(2, 0), s(1, 0) - s(0, 1));
}

double triangle_margin(const SymMat3& inertia) { return 0.5 * inertia.trace() - lambda_max(inertia); }

bool triangle_inequality_satisfied(const SymMat3& inertia, double tol) { return triangle_margin(inertia) >= -tol; }

SymMat3 inertia_from_covariance(const SymMat3& sigma) {
  require(lambda_min(sigma) >= -1e-10, ErrorCode::NotPSD, "covariance has a negative eigenvalue");
  return SymMat3(sigma.trace() * Mat3::Identity() - sigma.matrix());
}

Eigen::Matrix<double, 6, 6> SpatialInertia::matrix() const {
  Eigen::Matrix<double, 6, 6> m;
  const Mat3 s = skew(first_moment);
  m.block<3, 3>(0, 0) = mass * Mat3::Identity();
  m.block<3, 3>(0, 3) = s.transpose();
  m.block<3, 3>(3, 0) = s;
  m.block<3, 3>(3, 3) = rot_inertia.matrix();
  return m;
}

bool SpatialInertia::is_positive_definite() const {
  Eigen::LLT<Eigen::Matrix<double, 6, 6>> llt(matrix());
  return mass > 0.0 && llt.info() == Eigen::Success;
}

LowerTriangular LowerTriangular::from_dense(const MatX& l) {
  LowerTriangular out(static_cast<int>(l.rows()));
  for (int i = 0; i < out.n(); ++i)
    for (int j = 0; j <= i; ++j) out(i, j) = l(i, j);
  return out;
}

MatX LowerTriangular::dense() const {
  MatX out = MatX::Zero(n_, n_);
  for (int i = 0; i < n_; ++i)
    for (int j = 0; j <= i; ++j) out(i, j) = (*this)(i, j);
  return out;
}

MatX LowerTriangular::gram() const {
  const MatX l = dense();
  return l.transpose() * l;
}

LowerTriangular reverse_cholesky(const MatX& a) {
  require(a.rows() == a.cols(), ErrorCode::DimensionMismatch, "reverse_cholesky needs a square matrix");
  const int n = static_cast<int>(a.rows());
  MatX work = 0.5 * (a + a.transpose());
  LowerTriangular l(n);
  for (int k = n - 1; k >= 0; --k) {
    const double pivot = work(k, k);
    if (!(pivot > 0.0)) throw Error(ErrorCode::NotSPD, "nonpositive pivot at index " + std::to_string(k));
    const double d = std::sqrt(pivot);
    l(k, k) = d;
    for (int j = 0; j < k; ++j) l(k, j) = work(k, j) / d;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j <= i; ++j) {
        work(i, j) -= l(k, i) * l(k, j);
        work(j, i) = work(i, j);
      }
  }
  return l;
}

StructuredFactor branch_sparse_factor(const MatX& h, const RobotTopology& topology) {
  const int n = topology.dim();
  require(h.rows() == n && h.cols() == n, ErrorCode::DimensionMismatch, "H does not match the topology");
  SparsityMask mask = sparsity_pattern(topology);

  const double tol = 1e-9 * std::max(h.cwiseAbs().maxCoeff(), 1e-300);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < i; ++j)
      if (!mask(i, j) && (std::abs(h(i, j)) > tol || std::abs(h(j, i)) > tol)) {
        throw Error(ErrorCode::SparsityViolation,
                    "H(" + std::to_string(i) + "," + std::to_string(j) + ") is outside the branch pattern");
      }

  // Nonzero columns of each row, ascending.
  std::vector<std::vector<int>> cols(n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j <= i; ++j)
      if (mask(i, j)) cols[i].push_back(j);

  MatX work = 0.5 * (h + h.transpose());
  MatX l = MatX::Zero(n, n);
  for (int k = n - 1; k >= 0; --k) {
    const double pivot = work(k, k);
    if (!(pivot > 0.0)) throw Error(ErrorCode::NotSPD, "nonpositive pivot at index " + std::to_string(k));
    const double d = std::sqrt(pivot);
    l(k, k) = d;
    const auto& nz = cols[k];
    for (int j : nz)
      if (j < k) l(k, j) = work(k, j) / d;
    // Every pair of entries in nz lies inside the pattern, so no fill-in.
    for (int a : nz) {
      if (a >= k) continue;
      for (int b : nz) {
        if (b > a) break;
        work(a, b) -= l(k, a) * l(k, b);
        work(b, a) = work(a, b);
      }
    }
  }
  return StructuredFactor(std::move(l), std::move(mask));
}

}  // namespace felan
