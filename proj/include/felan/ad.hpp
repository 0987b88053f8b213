#pragma once

// Scalar types for the templated numerics.
//
//   double  - plain values
//   Jet     - value plus first partials wrt a runtime number of directions
//             (forward mode, used for dH/dq at inference time)
//   TJet    - a Jet recorded on a JetTape so that reverse mode can
//             propagate adjoints into both the value and the partials;
//             this yields exact mixed second derivatives d2/(dq dtheta)
//             for the training gradient.
//
// Templated code only uses + - * /, unary minus, sqrt, softplus, sin, cos
// and value(); all three types provide them.

#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

namespace felan::ad {

inline constexpr int kMaxTangents = 40;

inline double value(double x) { return x; }

/// Numerically stable log(1 + exp(x)).
inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sqrt(double x) { return std::sqrt(x); }
inline double sin(double x) { return std::sin(x); }
inline double cos(double x) { return std::cos(x); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Jet

struct Jet {
  double v = 0.0;
  int n = 0;
  std::array<double, kMaxTangents> d;

  Jet() = default;
  Jet(double value) : v(value), n(0) {}  // NOLINT(google-explicit-constructor)

  static Jet variable(double value, int n_tangents, int index) {
    Jet j;
    j.v = value;
    j.n = n_tangents;
    for (int i = 0; i < n_tangents; ++i) j.d[i] = 0.0;
    j.d[index] = 1.0;
    return j;
  }

  double tangent(int i) const { return i < n ? d[i] : 0.0; }
};

inline double value(const Jet& x) { return x.v; }

namespace detail {
template <class F>
inline Jet combine(const Jet& a, const Jet& b, double v, F&& f) {
  Jet r;
  r.v = v;
  r.n = a.n > b.n ? a.n : b.n;
  for (int i = 0; i < r.n; ++i) r.d[i] = f(a.tangent(i), b.tangent(i));
  return r;
}
inline Jet chain(const Jet& a, double v, double slope) {
  Jet r;
  r.v = v;
  r.n = a.n;
  for (int i = 0; i < a.n; ++i) r.d[i] = slope * a.d[i];
  return r;
}
}  // namespace detail

inline Jet operator+(const Jet& a, const Jet& b) {
  return detail::combine(a, b, a.v + b.v, [](double x, double y) { return x + y; });
}
inline Jet operator-(const Jet& a, const Jet& b) {
  return detail::combine(a, b, a.v - b.v, [](double x, double y) { return x - y; });
}
inline Jet operator*(const Jet& a, const Jet& b) {
  const double av = a.v, bv = b.v;
  return detail::combine(a, b, av * bv, [av, bv](double x, double y) { return av * y + x * bv; });
}
inline Jet operator-(const Jet& a) { return detail::chain(a, -a.v, -1.0); }
inline Jet operator+(const Jet& a, double k) {
  Jet r = a;
  r.v += k;
  return r;
}
inline Jet operator+(double k, const Jet& a) { return a + k; }
inline Jet operator-(const Jet& a, double k) { return a + (-k); }
inline Jet operator-(double k, const Jet& a) { return (-a) + k; }
inline Jet operator*(const Jet& a, double k) { return detail::chain(a, a.v * k, k); }
inline Jet operator*(double k, const Jet& a) { return a * k; }
inline Jet operator/(const Jet& a, double k) { return a * (1.0 / k); }
inline Jet reciprocal(const Jet& a) { return detail::chain(a, 1.0 / a.v, -1.0 / (a.v * a.v)); }
inline Jet operator/(const Jet& a, const Jet& b) { return a * reciprocal(b); }
inline Jet operator/(double k, const Jet& b) { return k * reciprocal(b); }
inline Jet& operator+=(Jet& a, const Jet& b) { return a = a + b; }
inline Jet& operator-=(Jet& a, const Jet& b) { return a = a - b; }

inline Jet sqrt(const Jet& a) {
  const double s = std::sqrt(a.v);
  return detail::chain(a, s, 0.5 / s);
}
inline Jet softplus(const Jet& a) { return detail::chain(a, softplus(a.v), sigmoid(a.v)); }
inline Jet sin(const Jet& a) { return detail::chain(a, std::sin(a.v), std::cos(a.v)); }
inline Jet cos(const Jet& a) { return detail::chain(a, std::cos(a.v), -std::sin(a.v)); }

// ---------------------------------------------------------------------------
// JetTape / TJet

/// Wengert list whose entries are jets of fixed width (1 + tangents()).
/// One tape per thread; reset() between samples keeps the allocation.
class JetTape {
 public:
  enum class Op : std::uint8_t { Leaf, Const, Add, Sub, Mul, Scale, AddConst, Unary };

  struct Node {
    Op op;
    int a;
    int b;
    double k0;  // Scale factor / AddConst offset / unary f'
    double k1;  // unary f''
  };

  void reset(int tangents) {
    assert(tangents >= 0 && tangents <= kMaxTangents);
    tangents_ = tangents;
    stride_ = tangents + 1;
    nodes_.clear();
    values_.clear();
    adjoints_.clear();
  }

  int tangents() const { return tangents_; }
  int stride() const { return stride_; }
  int size() const { return static_cast<int>(nodes_.size()); }

  const double* value(int id) const { return values_.data() + static_cast<std::size_t>(id) * stride_; }
  double* adjoint(int id) { return adjoints_.data() + static_cast<std::size_t>(id) * stride_; }
  const double* adjoint(int id) const {
    return adjoints_.data() + static_cast<std::size_t>(id) * stride_;
  }

  int push(const Node& node) {
    nodes_.push_back(node);
    values_.resize(values_.size() + stride_);
    return static_cast<int>(nodes_.size()) - 1;
  }
  double* mutable_value(int id) { return values_.data() + static_cast<std::size_t>(id) * stride_; }

  /// Allocates zeroed adjoints; call after the forward pass, then seed.
  void prepare_adjoints() { adjoints_.assign(values_.size(), 0.0); }

  void backward();

  /// Tape used when a TJet is created from a plain double.
  static JetTape*& current() {
    thread_local JetTape* tape = nullptr;
    return tape;
  }

 private:
  int tangents_ = 0;
  int stride_ = 1;
  std::vector<Node> nodes_;
  std::vector<double> values_;
  std::vector<double> adjoints_;
};

/// Installs a tape as the thread's current one for the lifetime of the scope.
class TapeScope {
 public:
  TapeScope(JetTape& tape, int tangents) : previous_(JetTape::current()) {
    tape.reset(tangents);
    JetTape::current() = &tape;
  }
  ~TapeScope() { JetTape::current() = previous_; }
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  JetTape* previous_;
};

struct TJet {
  JetTape* tape = nullptr;
  int id = -1;

  TJet() = default;
  TJet(double constant);  // NOLINT(google-explicit-constructor)
  TJet(JetTape* t, int i) : tape(t), id(i) {}

  static TJet leaf(JetTape& tape, double value, std::span<const double> tangents);

  double val() const { return tape->value(id)[0]; }
  double tangent(int i) const { return tape->value(id)[1 + i]; }
  double* adjoint() const { return tape->adjoint(id); }
};

inline double value(const TJet& x) { return x.val(); }

inline TJet::TJet(double constant) : tape(JetTape::current()) {
  assert(tape != nullptr && "no active JetTape");
  id = tape->push({JetTape::Op::Const, -1, -1, 0.0, 0.0});
  double* out = tape->mutable_value(id);
  out[0] = constant;
  for (int i = 1; i < tape->stride(); ++i) out[i] = 0.0;
}

inline TJet TJet::leaf(JetTape& tape, double value, std::span<const double> tangents) {
  const int id = tape.push({JetTape::Op::Leaf, -1, -1, 0.0, 0.0});
  double* out = tape.mutable_value(id);
  out[0] = value;
  const int t = tape.tangents();
  for (int i = 0; i < t; ++i) out[1 + i] = i < static_cast<int>(tangents.size()) ? tangents[i] : 0.0;
  return {&tape, id};
}

namespace detail {
inline TJet binary(JetTape::Op op, const TJet& a, const TJet& b) {
  JetTape& tp = *a.tape;
  const int id = tp.push({op, a.id, b.id, 0.0, 0.0});
  const int s = tp.stride();
  const double* x = tp.value(a.id);
  const double* y = tp.value(b.id);
  double* z = tp.mutable_value(id);
  switch (op) {
    case JetTape::Op::Add:
      for (int i = 0; i < s; ++i) z[i] = x[i] + y[i];
      break;
    case JetTape::Op::Sub:
      for (int i = 0; i < s; ++i) z[i] = x[i] - y[i];
      break;
    case JetTape::Op::Mul:
      z[0] = x[0] * y[0];
      for (int i = 1; i < s; ++i) z[i] = x[0] * y[i] + x[i] * y[0];
      break;
    default:
      assert(false);
  }
  return {&tp, id};
}

inline TJet scale(const TJet& a, double k) {
  JetTape& tp = *a.tape;
  const int id = tp.push({JetTape::Op::Scale, a.id, -1, k, 0.0});
  const int s = tp.stride();
  const double* x = tp.value(a.id);
  double* z = tp.mutable_value(id);
  for (int i = 0; i < s; ++i) z[i] = k * x[i];
  return {&tp, id};
}

inline TJet shift(const TJet& a, double k) {
  JetTape& tp = *a.tape;
  const int id = tp.push({JetTape::Op::AddConst, a.id, -1, k, 0.0});
  const int s = tp.stride();
  const double* x = tp.value(a.id);
  double* z = tp.mutable_value(id);
  z[0] = x[0] + k;
  for (int i = 1; i < s; ++i) z[i] = x[i];
  return {&tp, id};
}

/// f(a) given f(a0), f'(a0), f''(a0).
inline TJet unary(const TJet& a, double f, double f1, double f2) {
  JetTape& tp = *a.tape;
  const int id = tp.push({JetTape::Op::Unary, a.id, -1, f1, f2});
  const int s = tp.stride();
  const double* x = tp.value(a.id);
  double* z = tp.mutable_value(id);
  z[0] = f;
  for (int i = 1; i < s; ++i) z[i] = f1 * x[i];
  return {&tp, id};
}
}  // namespace detail

inline TJet operator+(const TJet& a, const TJet& b) { return detail::binary(JetTape::Op::Add, a, b); }
inline TJet operator-(const TJet& a, const TJet& b) { return detail::binary(JetTape::Op::Sub, a, b); }
inline TJet operator*(const TJet& a, const TJet& b) { return detail::binary(JetTape::Op::Mul, a, b); }
inline TJet operator-(const TJet& a) { return detail::scale(a, -1.0); }
inline TJet operator+(const TJet& a, double k) { return detail::shift(a, k); }
inline TJet operator+(double k, const TJet& a) { return detail::shift(a, k); }
inline TJet operator-(const TJet& a, double k) { return detail::shift(a, -k); }
inline TJet operator-(double k, const TJet& a) { return detail::shift(detail::scale(a, -1.0), k); }
inline TJet operator*(const TJet& a, double k) { return detail::scale(a, k); }
inline TJet operator*(double k, const TJet& a) { return detail::scale(a, k); }
inline TJet operator/(const TJet& a, double k) { return detail::scale(a, 1.0 / k); }
inline TJet reciprocal(const TJet& a) {
  const double x = a.val();
  return detail::unary(a, 1.0 / x, -1.0 / (x * x), 2.0 / (x * x * x));
}
inline TJet operator/(const TJet& a, const TJet& b) { return a * reciprocal(b); }
inline TJet operator/(double k, const TJet& b) { return k * reciprocal(b); }
inline TJet& operator+=(TJet& a, const TJet& b) { return a = a + b; }
inline TJet& operator-=(TJet& a, const TJet& b) { return a = a - b; }

inline TJet sqrt(const TJet& a) {
  const double s = std::sqrt(a.val());
  return detail::unary(a, s, 0.5 / s, -0.25 / (s * s * s));
}
inline TJet softplus(const TJet& a) {
  const double x = a.val();
  const double sg = sigmoid(x);
  return detail::unary(a, softplus(x), sg, sg * (1.0 - sg));
}
inline TJet sin(const TJet& a) {
  const double x = a.val();
  return detail::unary(a, std::sin(x), std::cos(x), -std::sin(x));
}
inline TJet cos(const TJet& a) {
  const double x = a.val();
  return detail::unary(a, std::cos(x), -std::sin(x), -std::cos(x));
}

inline void JetTape::backward() {
  const int s = stride_;
  for (int id = size() - 1; id >= 0; --id) {
    const Node& node = nodes_[id];
    if (node.op == Op::Leaf || node.op == Op::Const) continue;
    const double* cbar = adjoint(id);
    switch (node.op) {
      case Op::Add: {
        double* abar = adjoint(node.a);
        for (int i = 0; i < s; ++i) abar[i] += cbar[i];
        double* bbar = adjoint(node.b);
        for (int i = 0; i < s; ++i) bbar[i] += cbar[i];
        break;
      }
      case Op::Sub: {
        double* abar = adjoint(node.a);
        for (int i = 0; i < s; ++i) abar[i] += cbar[i];
        double* bbar = adjoint(node.b);
        for (int i = 0; i < s; ++i) bbar[i] -= cbar[i];
        break;
      }
      case Op::Mul: {
        const double* x = value(node.a);
        const double* y = value(node.b);
        double ga = cbar[0] * y[0];
        double gb = cbar[0] * x[0];
        for (int i = 1; i < s; ++i) {
          ga += cbar[i] * y[i];
          gb += cbar[i] * x[i];
        }
        double* abar = adjoint(node.a);
        abar[0] += ga;
        for (int i = 1; i < s; ++i) abar[i] += cbar[i] * y[0];
        double* bbar = adjoint(node.b);
        bbar[0] += gb;
        for (int i = 1; i < s; ++i) bbar[i] += cbar[i] * x[0];
        break;
      }
      case Op::Scale: {
        double* abar = adjoint(node.a);
        for (int i = 0; i < s; ++i) abar[i] += node.k0 * cbar[i];
        break;
      }
      case Op::AddConst: {
        double* abar = adjoint(node.a);
        for (int i = 0; i < s; ++i) abar[i] += cbar[i];
        break;
      }
      case Op::Unary: {
        const double* x = value(node.a);
        double g = cbar[0] * node.k0;
        for (int i = 1; i < s; ++i) g += node.k1 * cbar[i] * x[i];
        double* abar = adjoint(node.a);
        abar[0] += g;
        for (int i = 1; i < s; ++i) abar[i] += cbar[i] * node.k0;
        break;
      }
      case Op::Leaf:
      case Op::Const:
        break;
    }
  }
}

}  // namespace felan::ad
