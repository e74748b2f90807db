#pragma once

// Second-order time jets: a value together with its first and second time
// derivatives. Products follow the Leibniz rule, so frame constructions
// written against Jet<...> yield exact angular rates and accelerations.

#include <cmath>
#include <type_traits>
#include <utility>

#include "su2track/lie.hpp"
#include "su2track/types.hpp"

namespace su2track {

template <class T>
struct Jet {
  T v{};
  T d{};
  T dd{};

  static Jet constant(const T& value) {
    Jet j;
    j.v = value;
    if constexpr (std::is_arithmetic_v<T>) {
      j.d = 0.0;
      j.dd = 0.0;
    } else {
      j.d = T::Zero();
      j.dd = T::Zero();
    }
    return j;
  }
};

using ScalarJet = Jet<double>;
using Vec3Jet = Jet<Vec3>;
using QuatJet = Jet<Quat>;
using Mat3Jet = Jet<Mat3>;

/// (op(a, b))^{(k)} for a bilinear op, k = 0, 1, 2.
template <class A, class B, class Op>
auto leibniz(const Jet<A>& a, const Jet<B>& b, Op op) {
  using R = decltype(op(a.v, b.v));
  Jet<R> r;
  r.v = op(a.v, b.v);
  r.d = op(a.d, b.v) + op(a.v, b.d);
  r.dd = op(a.dd, b.v) + 2.0 * op(a.d, b.d) + op(a.v, b.dd);
  return r;
}

template <class T>
Jet<T> operator+(const Jet<T>& a, const Jet<T>& b) {
  return {a.v + b.v, a.d + b.d, a.dd + b.dd};
}

template <class T>
Jet<T> operator-(const Jet<T>& a, const Jet<T>& b) {
  return {a.v - b.v, a.d - b.d, a.dd - b.dd};
}

template <class T>
Jet<T> operator-(const Jet<T>& a) {
  return {-a.v, -a.d, -a.dd};
}

inline ScalarJet operator*(const ScalarJet& a, const ScalarJet& b) {
  return leibniz(a, b, [](double x, double y) { return x * y; });
}

template <class T>
Jet<T> operator*(const ScalarJet& s, const Jet<T>& a) {
  return leibniz(s, a, [](double x, const T& y) -> T { return x * y; });
}

template <class T>
Jet<T> operator*(double s, const Jet<T>& a) {
  return {s * a.v, s * a.d, s * a.dd};
}

/// Chain rule for a scalar function with derivatives f0, f1, f2 at a.v.
inline ScalarJet chain(const ScalarJet& a, double f0, double f1, double f2) {
  return {f0, f1 * a.d, f2 * a.d * a.d + f1 * a.dd};
}

inline ScalarJet sqrt(const ScalarJet& a) {
  const double s = std::sqrt(a.v);
  return chain(a, s, 0.5 / s, -0.25 / (s * a.v));
}

inline ScalarJet inverse(const ScalarJet& a) {
  const double i = 1.0 / a.v;
  return chain(a, i, -i * i, 2.0 * i * i * i);
}

inline ScalarJet sin(const ScalarJet& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return chain(a, s, c, -s);
}

inline ScalarJet cos(const ScalarJet& a) {
  const double s = std::sin(a.v), c = std::cos(a.v);
  return chain(a, c, -s, -c);
}

inline ScalarJet atan2(const ScalarJet& y, const ScalarJet& x) {
  const double r2 = x.v * x.v + y.v * y.v;
  const double num = x.v * y.d - y.v * x.d;
  const double num_d = x.v * y.dd - y.v * x.dd;
  const double r2_d = 2.0 * (x.v * x.d + y.v * y.d);
  return {std::atan2(y.v, x.v), num / r2, (num_d * r2 - num * r2_d) / (r2 * r2)};
}

inline ScalarJet dot(const Vec3Jet& a, const Vec3Jet& b) {
  return leibniz(a, b, [](const Vec3& x, const Vec3& y) { return x.dot(y); });
}

inline Vec3Jet cross(const Vec3Jet& a, const Vec3Jet& b) {
  return leibniz(a, b, [](const Vec3& x, const Vec3& y) -> Vec3 { return x.cross(y); });
}

inline ScalarJet norm(const Vec3Jet& a) { return sqrt(dot(a, a)); }

inline Vec3Jet normalized(const Vec3Jet& a) { return inverse(norm(a)) * a; }

inline ScalarJet component(const Vec3Jet& a, int i) { return {a.v[i], a.d[i], a.dd[i]}; }

inline QuatJet quat_mul(const QuatJet& a, const QuatJet& b) {
  return leibniz(a, b, [](const Quat& x, const Quat& y) -> Quat { return detail::quat_mul(x, y); });
}

inline Mat3Jet mat_mul(const Mat3Jet& a, const Mat3Jet& b) {
  return leibniz(a, b, [](const Mat3& x, const Mat3& y) -> Mat3 { return x * y; });
}

/// Jet of the rotation of a unit-quaternion jet.
inline Mat3Jet rotation_jet(const QuatJet& q) {
  // R(q) is quadratic in q; differentiate entrywise through the bilinear form.
  auto bil = [](const Quat& a, const Quat& b) -> Mat3 {
    // Symmetric bilinear form B(a, b) with B(q, q) = R(q).
    Mat3 R;
    R << a[0] * b[0] + a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        (a[1] * b[2] + a[2] * b[1]) - (a[0] * b[3] + a[3] * b[0]),
        (a[1] * b[3] + a[3] * b[1]) + (a[0] * b[2] + a[2] * b[0]),
        (a[1] * b[2] + a[2] * b[1]) + (a[0] * b[3] + a[3] * b[0]),
        a[0] * b[0] - a[1] * b[1] + a[2] * b[2] - a[3] * b[3],
        (a[2] * b[3] + a[3] * b[2]) - (a[0] * b[1] + a[1] * b[0]),
        (a[1] * b[3] + a[3] * b[1]) - (a[0] * b[2] + a[2] * b[0]),
        (a[2] * b[3] + a[3] * b[2]) + (a[0] * b[1] + a[1] * b[0]),
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] + a[3] * b[3];
    return R;
  };
  return leibniz(q, q, bil);
}

/// Body rates from a unit-quaternion jet: X' = X [w/2]^ gives
/// w = 2 vec(q* q'), w' = 2 vec(q* q'') (q'* q' is real).
inline std::pair<Vec3, Vec3> body_rates(const QuatJet& q) {
  const Quat qc = detail::quat_conj(q.v);
  const Vec3 w = 2.0 * detail::quat_mul(qc, q.d).tail<3>();
  const Vec3 w_dot = 2.0 * detail::quat_mul(qc, q.dd).tail<3>();
  return {w, w_dot};
}

/// Body rates from a rotation jet: w = [R^T R']^vee, w' = [R'^T R' + R^T R'']^vee.
/// The skew part is taken before vee; R'^T R' is symmetric and drops out.
inline std::pair<Vec3, Vec3> body_rates(const Mat3Jet& R) {
  const Mat3 A = R.v.transpose() * R.d;
  const Mat3 B = R.d.transpose() * R.d + R.v.transpose() * R.dd;
  const Mat3 As = 0.5 * (A - A.transpose());
  const Mat3 Bs = 0.5 * (B - B.transpose());
  return {Vec3(As(2, 1), As(0, 2), As(1, 0)), Vec3(Bs(2, 1), Bs(0, 2), Bs(1, 0))};
}

}  // namespace su2track
