#pragma once

// SU(2) / SO(3) primitives: hat and vee maps, exponentials, the quaternion
// embedding into SU(2), the double-cover map onto SO(3), and the trace
// distances Psi (on SO(3)) and Gamma (on SU(2)).

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

#include <Eigen/Dense>

#include "su2track/types.hpp"

namespace su2track {

/// Rotation of `angle` radians about the unit vector `axis`.
struct AxisAngle {
  Vec3 axis{Vec3::UnitX()};
  double angle{0.0};
};

namespace detail {
inline constexpr double kSmallAngle = 1e-6;
inline constexpr std::complex<double> kI{0.0, 1.0};

// sin(x)/x and (1 - cos x)/x^2 with 4th-order Taylor expansions near zero.
inline double sinc(double x) {
  if (std::abs(x) < kSmallAngle) {
    const double x2 = x * x;
    return 1.0 - x2 / 6.0 + x2 * x2 / 120.0;
  }
  return std::sin(x) / x;
}

inline double cosc(double x) {
  if (std::abs(x) < kSmallAngle) {
    const double x2 = x * x;
    return 0.5 - x2 / 24.0 + x2 * x2 / 720.0;
  }
  return (1.0 - std::cos(x)) / (x * x);
}

// Hamilton product of scalar-first quaternions.
inline Quat quat_mul(const Quat& a, const Quat& b) {
  return Quat(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
              a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
              a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
              a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

inline Quat quat_conj(const Quat& q) { return Quat(q[0], -q[1], -q[2], -q[3]); }

inline Quat pure(const Vec3& v) { return Quat(0.0, v.x(), v.y(), v.z()); }

// Rotation matrix of a (not necessarily unit) quaternion, scaled by |q|^2.
inline Mat3 quat_to_rotation(const Quat& q) {
  const double q1 = q[0], q2 = q[1], q3 = q[2], q4 = q[3];
  Mat3 R;
  R << q1 * q1 + q2 * q2 - q3 * q3 - q4 * q4, 2.0 * (q2 * q3 - q1 * q4), 2.0 * (q2 * q4 + q1 * q3),
      2.0 * (q2 * q3 + q1 * q4), q1 * q1 - q2 * q2 + q3 * q3 - q4 * q4, 2.0 * (q3 * q4 - q1 * q2),
      2.0 * (q2 * q4 - q1 * q3), 2.0 * (q3 * q4 + q1 * q2), q1 * q1 - q2 * q2 - q3 * q3 + q4 * q4;
  return R;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// Hat / vee maps
// ---------------------------------------------------------------------------

/// Skew matrix S(w) with S(a) b = a x b.
inline Mat3 hat_so3(const Vec3& w) {
  Mat3 S;
  S << 0.0, -w.z(), w.y(),
       w.z(), 0.0, -w.x(),
       -w.y(), w.x(), 0.0;
  return S;
}

inline Vec3 vee_so3(const Mat3& K, double tol = 1e-9) {
  if ((K + K.transpose()).norm() > tol) {
    throw Error(ErrorCode::NotSkew, "matrix is not skew-symmetric");
  }
  return Vec3(K(2, 1), K(0, 2), K(1, 0));
}

/// w1 L1 + w2 L2 + w3 L3 with the su(2) basis L1 = [0 i; i 0], L2 = [0 -1; 1 0], L3 = [i 0; 0 -i].
inline CMat2 hat_su2(const Vec3& w) {
  using detail::kI;
  CMat2 K;
  K << kI * w.z(), -w.y() + kI * w.x(),
       w.y() + kI * w.x(), -kI * w.z();
  return K;
}

/// Inverse of hat_su2; K must be anti-Hermitian and traceless.
inline Vec3 vee_su2(const CMat2& K, double tol = 1e-9) {
  if ((K + K.adjoint()).norm() > tol || std::abs(K.trace()) > tol) {
    throw Error(ErrorCode::NotInAlgebra, "matrix is not in su(2)");
  }
  return 0.5 * Vec3((K(0, 1) + K(1, 0)).imag(),
                    (K(1, 0) - K(0, 1)).real(),
                    (K(0, 0) - K(1, 1)).imag());
}

// ---------------------------------------------------------------------------
// SU(2) element
// ---------------------------------------------------------------------------

/// Element of SU(2), stored as a unit quaternion q = (q1, q2, q3, q4) with
/// X = q1 I + q2 L1 + q3 L2 + q4 L3. The group product is the Hamilton product.
///
/// Products are re-normalized every 64 compositions.
class Su2 {
 public:
  static constexpr double kUnitTolerance = 1e-6;
  static constexpr std::uint8_t kRenormalizeEvery = 64;

  Su2() = default;

  static Su2 identity() { return Su2(); }

  /// Throws NotUnit if |q| deviates from one by more than 1e-6.
  static Su2 from_quaternion(const Quat& q) {
    if (!q.allFinite() || std::abs(q.norm() - 1.0) > kUnitTolerance) {
      throw Error(ErrorCode::NotUnit, "quaternion norm deviates from one");
    }
    return Su2(q.normalized());
  }

  /// Normalizes without checking; for integrator output.
  static Su2 from_quaternion_unchecked(const Quat& q) { return Su2(q.normalized()); }

  static Su2 from_quaternion(double q1, double q2, double q3, double q4) {
    return from_quaternion(Quat(q1, q2, q3, q4));
  }

  /// Reads q back from the matrix form; throws NotUnit off the group.
  static Su2 from_matrix(const CMat2& X) {
    return from_quaternion(Quat(X(0, 0).real(), X(1, 0).imag(), X(1, 0).real(), X(0, 0).imag()));
  }

  /// One of the two preimages of R (the one with q1 >= 0).
  static Su2 from_rotation(const Mat3& R) {
    // Shepperd's method: branch on the largest diagonal of the 4x4 symmetric form.
    const double tr = R.trace();
    Quat q;
    if (tr >= R(0, 0) && tr >= R(1, 1) && tr >= R(2, 2)) {
      const double s = 2.0 * std::sqrt(1.0 + tr);
      q << 0.25 * s, (R(2, 1) - R(1, 2)) / s, (R(0, 2) - R(2, 0)) / s, (R(1, 0) - R(0, 1)) / s;
    } else if (R(0, 0) >= R(1, 1) && R(0, 0) >= R(2, 2)) {
      const double s = 2.0 * std::sqrt(1.0 + R(0, 0) - R(1, 1) - R(2, 2));
      q << (R(2, 1) - R(1, 2)) / s, 0.25 * s, (R(0, 1) + R(1, 0)) / s, (R(0, 2) + R(2, 0)) / s;
    } else if (R(1, 1) >= R(2, 2)) {
      const double s = 2.0 * std::sqrt(1.0 - R(0, 0) + R(1, 1) - R(2, 2));
      q << (R(0, 2) - R(2, 0)) / s, (R(0, 1) + R(1, 0)) / s, 0.25 * s, (R(1, 2) + R(2, 1)) / s;
    } else {
      const double s = 2.0 * std::sqrt(1.0 - R(0, 0) - R(1, 1) + R(2, 2));
      q << (R(1, 0) - R(0, 1)) / s, (R(0, 2) + R(2, 0)) / s, (R(1, 2) + R(2, 1)) / s, 0.25 * s;
    }
    if (q[0] < 0.0) q = -q;
    return Su2(q.normalized());
  }

  const Quat& quaternion() const { return q_; }
  double q1() const { return q_[0]; }
  double q2() const { return q_[1]; }
  double q3() const { return q_[2]; }
  double q4() const { return q_[3]; }
  Vec3 vec() const { return q_.tail<3>(); }

  /// Complex 2x2 form [q1 + i q4, -q3 + i q2; q3 + i q2, q1 - i q4].
  CMat2 matrix() const {
    using detail::kI;
    CMat2 X;
    X << q_[0] + kI * q_[3], -q_[2] + kI * q_[1],
         q_[2] + kI * q_[1], q_[0] - kI * q_[3];
    return X;
  }

  /// The rotation matrix represented by X (and by -X).
  Mat3 rotation() const { return detail::quat_to_rotation(q_); }

  Su2 adjoint() const { return Su2(detail::quat_conj(q_), count_); }
  Su2 operator-() const { return Su2(-q_, count_); }

  friend Su2 operator*(const Su2& a, const Su2& b) {
    const auto count = static_cast<std::uint8_t>(std::max(a.count_, b.count_) + 1);
    Quat q = detail::quat_mul(a.q_, b.q_);
    if (count >= kRenormalizeEvery) return Su2(q.normalized(), 0);
    return Su2(q, count);
  }

  /// Group product without the periodic re-normalization.
  static Su2 compose_raw(const Su2& a, const Su2& b) { return Su2(detail::quat_mul(a.q_, b.q_), 0); }

  Su2 normalized() const { return Su2(q_.normalized(), 0); }

  bool is_valid(double tol = 1e-9) const {
    const CMat2 X = matrix();
    return (X.adjoint() * X - CMat2::Identity()).norm() < tol &&
           std::abs(X.determinant() - std::complex<double>(1.0, 0.0)) < tol;
  }

 private:
  explicit Su2(const Quat& q, std::uint8_t count = 0) : q_(q), count_(count) {}

  Quat q_{1.0, 0.0, 0.0, 0.0};
  std::uint8_t count_{0};
};

// ---------------------------------------------------------------------------
// Exponential and logarithm
// ---------------------------------------------------------------------------

/// Rodrigues' formula; for w = theta u, a rotation of theta about u.
inline Mat3 exp_so3(const Vec3& w) {
  const double theta = w.norm();
  const Mat3 K = hat_so3(w);
  return Mat3::Identity() + detail::sinc(theta) * K + detail::cosc(theta) * K * K;
}

/// Exp of the algebra element hat_su2(w): cos|w| I + sin|w| hat_su2(w)/|w|.
/// exp_su2(w / 2) and exp_so3(w) represent the same rotation.
inline Su2 exp_su2(const Vec3& w) {
  const double n = w.norm();
  const Vec3 v = detail::sinc(n) * w;
  return Su2::from_quaternion_unchecked(Quat(std::cos(n), v.x(), v.y(), v.z()));
}

/// Inverse of exp_su2 on the principal branch (|result| <= pi).
inline Vec3 log_su2(const Su2& X) {
  const Vec3 v = X.vec();
  const double s = v.norm();
  const double c = X.q1();
  if (s < 1e-12) {
    if (c >= 0.0) return v / c;
    return Vec3(std::numbers::pi, 0.0, 0.0);
  }
  return (std::atan2(s, c) / s) * v;
}

/// Rotation vector of R, |result| <= pi.
inline Vec3 log_so3(const Mat3& R) { return 2.0 * log_su2(Su2::from_rotation(R)); }

/// Axis-angle of X with theta in [0, 2 pi]; X and -X give theta and 2 pi - theta
/// about opposite axes.
inline AxisAngle to_axis_angle(const Su2& X) {
  const Vec3 v = X.vec();
  const double s = v.norm();
  AxisAngle aa;
  aa.angle = 2.0 * std::atan2(s, X.q1());
  aa.axis = s > 0.0 ? Vec3(v / s) : Vec3::UnitX();
  return aa;
}

inline Su2 from_axis_angle(const AxisAngle& aa) { return exp_su2(0.5 * aa.angle * aa.axis.normalized()); }

// ---------------------------------------------------------------------------
// Embeddings and rotation composition
// ---------------------------------------------------------------------------

inline Su2 embed_quat_to_su2(const Quat& q) { return Su2::from_quaternion(q); }

inline Mat3 embed_su2_to_so3(const Su2& X) { return X.rotation(); }

/// a = [X hat(b) X*]^vee, evaluated in the complex representation.
inline Vec3 rotate_via_su2(const Su2& X, const Vec3& b) {
  const CMat2 M = X.matrix();
  return vee_su2(M * hat_su2(b) * M.adjoint(), 1e-8 * (1.0 + b.norm()));
}

inline bool is_rotation(const Mat3& R, double tol = 1e-9) {
  return (R.transpose() * R - Mat3::Identity()).norm() < tol && std::abs(R.determinant() - 1.0) < tol;
}

/// Nearest rotation in the Frobenius norm (polar factor).
inline Mat3 project_to_so3(const Mat3& A) {
  Eigen::JacobiSVD<Mat3> svd(A, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 D = Mat3::Identity();
  D(2, 2) = (svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  return svd.matrixU() * D * svd.matrixV().transpose();
}

// ---------------------------------------------------------------------------
// Distances and attitude error
// ---------------------------------------------------------------------------

/// Psi(R1, R2) = 1/2 Tr(I - R1^T R2), in [0, 2]; equals 2 for a half-turn.
inline double dist_so3(const Mat3& R1, const Mat3& R2) {
  return 0.5 * (3.0 - (R1.transpose() * R2).trace());
}

/// Gamma(X1, X2) = 1/2 Tr(I - X1* X2) = 1 - cos(theta/2) for the relative rotation.
/// Near zero the real part is evaluated as |vec|^2 / (1 + Re Tr/2), which is the
/// same number without the cancellation in 1 - Re Tr/2.
inline double dist_su2(const Su2& X1, const Su2& X2) {
  const std::complex<double> tr = (X1.matrix().adjoint() * X2.matrix()).trace();
  assert(std::abs(tr.imag()) < 1e-9);
  const double c = 0.5 * tr.real();
  if (c > 0.5) {
    const Quat e = detail::quat_mul(detail::quat_conj(X1.quaternion()), X2.quaternion());
    return e.tail<3>().squaredNorm() / (1.0 + c);
  }
  return 1.0 - c;
}

/// e_X = 1/2 [Xe - Tr(Xe) I / 2]^vee = 1/2 sin(theta/2) u. Zero at Xe = I and at Xe = -I.
inline Vec3 attitude_error_vector(const Su2& Xe) {
  const CMat2 M = Xe.matrix();
  const CMat2 K = M - 0.5 * M.trace() * CMat2::Identity();
  return 0.5 * vee_su2(K, 1e-8);
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Uniform (Haar) sample on SU(2), hence uniform on SO(3) after embedding.
template <class Rng>
Su2 random_su2(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Quat q;
  do {
    q = Quat(n(rng), n(rng), n(rng), n(rng));
  } while (q.norm() < 1e-12);
  return Su2::from_quaternion_unchecked(q);
}

template <class Rng>
Vec3 random_unit_vector(Rng& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-12);
  return v.normalized();
}

}  // namespace su2track
