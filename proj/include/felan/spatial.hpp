#pragma once

#include <Eigen/Dense>
#include <vector>

#include "felan/error.hpp"

namespace felan {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

class RobotTopology;

/// Symmetric 3x3 matrix. Construction symmetrizes its input.
class SymMat3 {
 public:
  SymMat3() : m_(Mat3::Zero()) {}
  explicit SymMat3(const Mat3& a) : m_(0.5 * (a + a.transpose())) {}
  static SymMat3 diagonal(double a, double b, double c) { return SymMat3(Vec3(a, b, c).asDiagonal().toDenseMatrix()); }
  static SymMat3 identity() { return SymMat3(Mat3::Identity()); }

  const Mat3& matrix() const { return m_; }
  double operator()(int i, int j) const { return m_(i, j); }
  double trace() const { return m_.trace(); }

 private:
  Mat3 m_;
};

/// Eigen-decomposition of a symmetric 3x3 matrix, eigenvalues ascending.
struct SymEigen3 {
  Vec3 values;
  Mat3 vectors;  // columns
};

/// Closed-form solve with an iterative fallback when the residual is poor.
SymEigen3 sym_eigen3(const Mat3& a);
double lambda_min(const SymMat3& a);
double lambda_max(const SymMat3& a);

Mat3 skew(const Vec3& v);
/// Inverse of skew on the antisymmetric part.
Vec3 vee(const Mat3& s);

/// Tr(I)/2 - lambda_max(I); nonnegative iff the principal moments satisfy
/// the triangle inequality.
double triangle_margin(const SymMat3& inertia);
bool triangle_inequality_satisfied(const SymMat3& inertia, double tol);

/// Tr(S) 1 - S. Throws NotPSD when S has an eigenvalue below -1e-10.
SymMat3 inertia_from_covariance(const SymMat3& sigma);

/// 6x6 spatial inertia about a frame origin, ordered [linear; angular].
struct SpatialInertia {
  double mass = 0.0;
  Vec3 first_moment = Vec3::Zero();
  SymMat3 rot_inertia;

  /// [[m 1, skew(h)^T], [skew(h), I]]
  Eigen::Matrix<double, 6, 6> matrix() const;
  bool is_positive_definite() const;
};

/// Packed lower-triangular matrix, row-major.
class LowerTriangular {
 public:
  LowerTriangular() = default;
  explicit LowerTriangular(int n) : n_(n), entries_(static_cast<std::size_t>(n) * (n + 1) / 2, 0.0) {}
  static LowerTriangular from_dense(const MatX& l);

  int n() const { return n_; }
  double& operator()(int i, int j) { return entries_[index(i, j)]; }
  double operator()(int i, int j) const { return i < j ? 0.0 : entries_[index(i, j)]; }
  const std::vector<double>& entries() const { return entries_; }

  MatX dense() const;
  /// L^T L
  MatX gram() const;

 private:
  std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * (i + 1) / 2 + j; }

  int n_ = 0;
  std::vector<double> entries_;
};

/// L with L^T L = A, eliminating from the last index backward.
LowerTriangular reverse_cholesky(const MatX& a);

/// Factor of a full inertia matrix with the branch sparsity of its topology.
/// Index order: [linear 0..2, rotational 3..5, joints].
class StructuredFactor {
 public:
  StructuredFactor(MatX l, Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask)
      : l_(std::move(l)), mask_(std::move(mask)) {}

  const MatX& dense() const { return l_; }
  const Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>& mask() const { return mask_; }
  int dim() const { return static_cast<int>(l_.rows()); }

  Mat3 linear() const { return l_.block<3, 3>(0, 0); }
  Mat3 linear_coupling() const { return l_.block<3, 3>(3, 0); }
  Mat3 rotational() const { return l_.block<3, 3>(3, 3); }
  /// Rows of one branch: K_k, W_k and the within-branch block L_k.
  MatX branch_linear(int first_joint, int count) const { return l_.block(6 + first_joint, 0, count, 3); }
  MatX branch_rotational(int first_joint, int count) const { return l_.block(6 + first_joint, 3, count, 3); }
  MatX branch_block(int first_joint, int count) const {
    return l_.block(6 + first_joint, 6 + first_joint, count, count);
  }

  /// Number of structurally nonzero entries.
  int nnz() const { return static_cast<int>(mask_.count()); }
  MatX gram() const { return l_.transpose() * l_; }

 private:
  MatX l_;
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask_;
};

/// Reverse Cholesky restricted to the topology's pattern (no fill-in).
/// Throws SparsityViolation if H has entries outside the pattern larger than
/// 1e-9 max|H|, NotSPD on a nonpositive pivot.
StructuredFactor branch_sparse_factor(const MatX& h, const RobotTopology& topology);

}  // namespace felan
