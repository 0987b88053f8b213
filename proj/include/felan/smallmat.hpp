#pragma once

// Minimal fixed and dynamic matrices over the scalar types of ad.hpp.
// Eigen stays the workhorse for plain doubles; these exist so the same
// source can run on double, Jet and TJet.

#include <array>
#include <cmath>
#include <vector>

#include "felan/ad.hpp"
#include "felan/spatial.hpp"

namespace felan {

template <class S>
struct V3 {
  std::array<S, 3> v;
  S& operator[](int i) { return v[i]; }
  const S& operator[](int i) const { return v[i]; }

  static V3 zero() { return {{S(0.0), S(0.0), S(0.0)}}; }
  static V3 from(const Vec3& x) { return {{S(x[0]), S(x[1]), S(x[2])}}; }
  Vec3 value() const { return Vec3(ad::value(v[0]), ad::value(v[1]), ad::value(v[2])); }
};

template <class S>
struct M3 {
  std::array<S, 9> a;
  S& operator()(int i, int j) { return a[3 * i + j]; }
  const S& operator()(int i, int j) const { return a[3 * i + j]; }

  static M3 zero() {
    M3 m;
    m.a.fill(S(0.0));
    return m;
  }
  static M3 identity(double d = 1.0) {
    M3 m = zero();
    m(0, 0) = S(d);
    m(1, 1) = S(d);
    m(2, 2) = S(d);
    return m;
  }
  static M3 from(const Mat3& x) {
    M3 m;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) m(i, j) = S(x(i, j));
    return m;
  }
  Mat3 value() const {
    Mat3 out;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) out(i, j) = ad::value((*this)(i, j));
    return out;
  }
};

template <class S>
V3<S> operator+(const V3<S>& x, const V3<S>& y) {
  return {{x[0] + y[0], x[1] + y[1], x[2] + y[2]}};
}
template <class S>
V3<S> operator-(const V3<S>& x, const V3<S>& y) {
  return {{x[0] - y[0], x[1] - y[1], x[2] - y[2]}};
}
template <class S, class K>
V3<S> operator*(const K& k, const V3<S>& x) {
  return {{x[0] * k, x[1] * k, x[2] * k}};
}
template <class S>
S dot(const V3<S>& x, const V3<S>& y) {
  return x[0] * y[0] + x[1] * y[1] + x[2] * y[2];
}
template <class S>
V3<S> cross(const V3<S>& x, const V3<S>& y) {
  return {{x[1] * y[2] - x[2] * y[1], x[2] * y[0] - x[0] * y[2], x[0] * y[1] - x[1] * y[0]}};
}

template <class S>
M3<S> operator+(const M3<S>& x, const M3<S>& y) {
  M3<S> r;
  for (int i = 0; i < 9; ++i) r.a[i] = x.a[i] + y.a[i];
  return r;
}
template <class S>
M3<S> operator-(const M3<S>& x, const M3<S>& y) {
  M3<S> r;
  for (int i = 0; i < 9; ++i) r.a[i] = x.a[i] - y.a[i];
  return r;
}
template <class S, class K>
M3<S> scaled(const M3<S>& x, const K& k) {
  M3<S> r;
  for (int i = 0; i < 9; ++i) r.a[i] = x.a[i] * k;
  return r;
}
template <class S>
M3<S> operator*(const M3<S>& x, const M3<S>& y) {
  M3<S> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = x(i, 0) * y(0, j) + x(i, 1) * y(1, j) + x(i, 2) * y(2, j);
  return r;
}
template <class S>
V3<S> operator*(const M3<S>& x, const V3<S>& v) {
  V3<S> r;
  for (int i = 0; i < 3; ++i) r[i] = x(i, 0) * v[0] + x(i, 1) * v[1] + x(i, 2) * v[2];
  return r;
}
template <class S>
M3<S> transpose(const M3<S>& x) {
  M3<S> r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r(i, j) = x(j, i);
  return r;
}
template <class S>
S trace(const M3<S>& x) {
  return x(0, 0) + x(1, 1) + x(2, 2);
}
template <class S>
M3<S> skew(const V3<S>& v) {
  M3<S> m;
  const S zero(0.0);
  m(0, 0) = zero;
  m(0, 1) = -v[2];
  m(0, 2) = v[1];
  m(1, 0) = v[2];
  m(1, 1) = zero;
  m(1, 2) = -v[0];
  m(2, 0) = -v[1];
  m(2, 1) = v[0];
  m(2, 2) = zero;
  return m;
}

/// Dense row-major matrix over S.
template <class S>
struct MatS {
  int rows = 0;
  int cols = 0;
  std::vector<S> a;

  MatS() = default;
  MatS(int r, int c, const S& fill) : rows(r), cols(c), a(static_cast<std::size_t>(r) * c, fill) {}
  S& operator()(int i, int j) { return a[static_cast<std::size_t>(i) * cols + j]; }
  const S& operator()(int i, int j) const { return a[static_cast<std::size_t>(i) * cols + j]; }

  MatX value() const {
    MatX out(rows, cols);
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j) out(i, j) = ad::value((*this)(i, j));
    return out;
  }
};

/// Counts extremal-eigenvalue evaluations whose gap to the neighbouring
/// eigenvalue was below 1e-9 (gradient falls back to one eigenvector).
struct EigenDiagnostics {
  long nondifferentiable = 0;
};

/// Largest or smallest eigenvalue of a symmetric matrix.
///
/// For derivative-carrying scalars the value comes from the numeric solve and
/// the derivatives from second-order perturbation theory around the numeric
/// eigenbasis V:  lambda_k = b_kk + sum_{j != k} b_kj^2 / (lambda_k - lambda_j),
/// b = V^T A V.  This is exact to second order, which the training gradient
/// (a derivative of a derivative) needs.
template <class S>
S extremal_eigenvalue(const M3<S>& a, bool largest, EigenDiagnostics* diag = nullptr) {
  const SymEigen3 eig = sym_eigen3(a.value());
  const int k = largest ? 2 : 0;
  if constexpr (std::is_same_v<S, double>) {
    (void)diag;
    return eig.values(k);
  } else {
    V3<S> w;  // A v_k
    for (int i = 0; i < 3; ++i)
      w[i] = a(i, 0) * eig.vectors(0, k) + a(i, 1) * eig.vectors(1, k) + a(i, 2) * eig.vectors(2, k);
    auto project = [&](int col) {
      return w[0] * eig.vectors(0, col) + w[1] * eig.vectors(1, col) + w[2] * eig.vectors(2, col);
    };
    S result = project(k);
    const double scale = std::max(1.0, std::abs(eig.values(k)));
    for (int j = 0; j < 3; ++j) {
      if (j == k) continue;
      const double gap = eig.values(k) - eig.values(j);
      if (std::abs(gap) < 1e-9 * scale) {
        if (diag != nullptr && (j == 1)) ++diag->nondifferentiable;
        continue;
      }
      const S b = project(j);
      result = result + (b * b) * (1.0 / gap);
    }
    return result;
  }
}

}  // namespace felan
