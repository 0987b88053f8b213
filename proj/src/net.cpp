#include "felan/net.hpp"

#include <cmath>

#include "felan/error.hpp"

namespace felan {

MLP::MLP(std::vector<int> widths) : widths_(std::move(widths)) {
  require(widths_.size() >= 2, ErrorCode::InvalidSpec, "network needs at least input and output widths");
  for (int w : widths_) require(w >= 1, ErrorCode::InvalidSpec, "layer widths must be positive");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    weights_.push_back(MatX::Zero(widths_[l + 1], widths_[l]));
    biases_.push_back(VecX::Zero(widths_[l + 1]));
  }
}

MLP MLP::init(std::vector<int> widths, std::uint64_t seed, double output_scale) {
  MLP net(std::move(widths));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int l = 0; l < net.layers(); ++l) {
    MatX& w = net.weights_[l];
    const double scale = (l + 1 == net.layers() ? output_scale : 1.0) / std::sqrt(static_cast<double>(w.cols()));
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) w(i, j) = scale * normal(rng);
  }
  return net;
}

int MLP::param_count() const {
  int n = 0;
  for (int l = 0; l < layers(); ++l) n += static_cast<int>(weights_[l].size() + biases_[l].size());
  return n;
}

void MLP::pack(std::span<double> out) const {
  require(static_cast<int>(out.size()) == param_count(), ErrorCode::DimensionMismatch, "parameter buffer size");
  std::size_t p = 0;
  for (int l = 0; l < layers(); ++l) {
    const MatX& w = weights_[l];
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) out[p++] = w(i, j);
    for (int i = 0; i < biases_[l].size(); ++i) out[p++] = biases_[l][i];
  }
}

void MLP::unpack(std::span<const double> in) {
  require(static_cast<int>(in.size()) == param_count(), ErrorCode::DimensionMismatch, "parameter buffer size");
  std::size_t p = 0;
  for (int l = 0; l < layers(); ++l) {
    MatX& w = weights_[l];
    for (int i = 0; i < w.rows(); ++i)
      for (int j = 0; j < w.cols(); ++j) w(i, j) = in[p++];
    for (int i = 0; i < biases_[l].size(); ++i) biases_[l][i] = in[p++];
  }
}

void MLP::set_zero() {
  for (auto& w : weights_) w.setZero();
  for (auto& b : biases_) b.setZero();
}

VecX forward(const MLP& net, const VecX& x) {
  require(x.size() == net.inputs(), ErrorCode::DimensionMismatch, "network input width");
  VecX a = x;
  for (int l = 0; l < net.layers(); ++l) {
    VecX z = net.weight(l) * a + net.bias(l);
    a = l + 1 < net.layers() ? VecX(z.array().tanh()) : z;
  }
  return a;
}

void forward_tangent(const MLP& net, const VecX& x, const MatX& dx, MlpCache& cache) {
  require(x.size() == net.inputs() && dx.rows() == net.inputs(), ErrorCode::DimensionMismatch,
          "network input width");
  const int n = net.layers();
  cache.a.resize(n + 1);
  cache.da.resize(n + 1);
  cache.dz.resize(n);
  cache.a[0] = x;
  cache.da[0] = dx;
  for (int l = 0; l < n; ++l) {
    const MatX& w = net.weight(l);
    VecX z = w * cache.a[l] + net.bias(l);
    cache.dz[l].noalias() = w * cache.da[l];
    if (l + 1 < n) {
      cache.a[l + 1] = z.array().tanh();
      const VecX s = 1.0 - cache.a[l + 1].array().square();
      cache.da[l + 1] = s.asDiagonal() * cache.dz[l];
    } else {
      cache.a[l + 1] = std::move(z);
      cache.da[l + 1] = cache.dz[l];
    }
  }
}

void backward_tangent(const MLP& net, const MlpCache& cache, const VecX& y_bar, const MatX& dy_bar, MLP& grad,
                      VecX* x_bar, MatX* dx_bar) {
  const int n = net.layers();
  VecX a_bar = y_bar;
  MatX da_bar = dy_bar;
  for (int l = n - 1; l >= 0; --l) {
    VecX z_bar;
    MatX dz_bar;
    if (l + 1 < n) {
      const VecX& a = cache.a[l + 1];
      const VecX s = 1.0 - a.array().square();
      // A' = s . Z', s = 1 - a^2, ds/dz = -2 a s.
      const VecX s_bar = (da_bar.array() * cache.dz[l].array()).rowwise().sum();
      dz_bar = s.asDiagonal() * da_bar;
      z_bar = (a_bar.array() - 2.0 * a.array() * s_bar.array()) * s.array();
    } else {
      z_bar = std::move(a_bar);
      dz_bar = std::move(da_bar);
    }
    grad.weight(l).noalias() += z_bar * cache.a[l].transpose();
    if (dz_bar.cols() > 0) grad.weight(l).noalias() += dz_bar * cache.da[l].transpose();
    grad.bias(l) += z_bar;
    if (l > 0 || x_bar || dx_bar) {
      a_bar = net.weight(l).transpose() * z_bar;
      da_bar = net.weight(l).transpose() * dz_bar;
    }
  }
  if (x_bar) *x_bar = a_bar;
  if (dx_bar) *dx_bar = da_bar;
}

MatX jacobian_wrt_inputs(const MLP& net, const VecX& x) {
  MlpCache cache;
  forward_tangent(net, x, MatX::Identity(net.inputs(), net.inputs()), cache);
  return cache.da.back();
}

VecX joint_features(const VecX& q) {
  VecX f(2 * q.size());
  f.head(q.size()) = q.array().cos();
  f.tail(q.size()) = q.array().sin();
  return f;
}

MatX joint_features_jacobian(const VecX& q) {
  const int n = static_cast<int>(q.size());
  MatX j = MatX::Zero(2 * n, n);
  for (int i = 0; i < n; ++i) {
    j(i, i) = -std::sin(q[i]);
    j(n + i, i) = std::cos(q[i]);
  }
  return j;
}

}  // namespace felan
