#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "felan/spatial.hpp"

namespace felan {

/// Fully connected tanh network; the last layer is affine.
class MLP {
 public:
  MLP() = default;
  /// widths = {inputs, hidden..., outputs}; parameters start at zero.
  explicit MLP(std::vector<int> widths);

  /// Hidden weights ~ N(0, 1/fan_in); output layer additionally scaled by
  /// `output_scale`; biases zero.
  static MLP init(std::vector<int> widths, std::uint64_t seed, double output_scale = 0.1);

  const std::vector<int>& widths() const { return widths_; }
  int inputs() const { return widths_.front(); }
  int outputs() const { return widths_.back(); }
  int layers() const { return static_cast<int>(weights_.size()); }

  MatX& weight(int l) { return weights_[l]; }
  const MatX& weight(int l) const { return weights_[l]; }
  VecX& bias(int l) { return biases_[l]; }
  const VecX& bias(int l) const { return biases_[l]; }

  int param_count() const;
  /// Parameters in layer order, each weight row-major then its bias.
  void pack(std::span<double> out) const;
  void unpack(std::span<const double> in);
  void set_zero();

 private:
  std::vector<int> widths_;
  std::vector<MatX> weights_;
  std::vector<VecX> biases_;
};

/// Per-evaluation workspace of forward_tangent.
struct MlpCache {
  std::vector<VecX> a;   // activations, a[0] = input
  std::vector<MatX> da;  // d a / d(seed directions), da[0] = input tangents
  std::vector<MatX> dz;  // pre-activation tangents per layer
};

/// Throws DimensionMismatch.
VecX forward(const MLP& net, const VecX& x);

/// Forward pass carrying tangents dx (inputs x T). Output: cache.a.back(),
/// cache.da.back().
void forward_tangent(const MLP& net, const VecX& x, const MatX& dx, MlpCache& cache);

/// Reverse pass of forward_tangent: accumulates parameter gradients into
/// `grad` (same shape as net) for output value adjoint y_bar and tangent
/// adjoint dy_bar (outputs x T). Input adjoints are written when requested.
void backward_tangent(const MLP& net, const MlpCache& cache, const VecX& y_bar, const MatX& dy_bar, MLP& grad,
                      VecX* x_bar = nullptr, MatX* dx_bar = nullptr);

/// dy/dx, exact.
MatX jacobian_wrt_inputs(const MLP& net, const VecX& x);

/// q -> [cos q; sin q].
VecX joint_features(const VecX& q);
/// d features / dq, (2n x n).
MatX joint_features_jacobian(const VecX& q);

}  // namespace felan
