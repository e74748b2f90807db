#pragma once

// Attitude tracking on SU(2): error signals, the torque feedback with exact
// feedforward, the 2x2 gain certificate matrices, the exponential-stability
// domain and the Lyapunov value.

#include <algorithm>
#include <cmath>
#include <utility>

#include <Eigen/Eigenvalues>

#include "su2track/lie.hpp"
#include "su2track/types.hpp"

namespace su2track {

/// Mass, gravity and inertia. Eigenvalues and the inverse of J are cached.
class InertialParams {
 public:
  InertialParams(double m, double g, const Mat3& J) : m_(m), g_(g), J_(J) {
    if (!(m > 0.0) || !(g > 0.0)) throw Error(ErrorCode::ConfigError, "mass and gravity must be positive");
    if ((J - J.transpose()).norm() > 1e-12) throw Error(ErrorCode::ConfigError, "inertia must be symmetric");
    Eigen::SelfAdjointEigenSolver<Mat3> es(J, Eigen::EigenvaluesOnly);
    lambda_min_ = es.eigenvalues()(0);
    lambda_max_ = es.eigenvalues()(2);
    if (!(lambda_min_ > 0.0)) throw Error(ErrorCode::ConfigError, "inertia must be positive definite");
    J_inv_ = J.inverse();
  }

  double m() const { return m_; }
  double g() const { return g_; }
  const Mat3& J() const { return J_; }
  const Mat3& J_inv() const { return J_inv_; }
  double lambda_min() const { return lambda_min_; }
  double lambda_max() const { return lambda_max_; }

 private:
  double m_;
  double g_;
  Mat3 J_;
  Mat3 J_inv_;
  double lambda_min_{};
  double lambda_max_{};
};

/// k_c is the cross-term weight of the Lyapunov function (called c_a in the
/// full-state controller).
struct AttitudeGains {
  double k_X{};
  double k_omega{};
  double k_c{};

  bool valid() const { return k_X > 0.0 && k_omega > 0.0 && k_c > 0.0; }
};

struct AttitudeRef {
  Su2 X_r;
  Vec3 omega_r{Vec3::Zero()};
  Vec3 omega_r_dot{Vec3::Zero()};
};

struct AttitudeErrors {
  Su2 X_e;  // X_r* X
  Vec3 e_X{Vec3::Zero()};
  Vec3 e_omega{Vec3::Zero()};
  Vec2 z{Vec2::Zero()};  // (|e_X|, |e_omega|)
};

inline AttitudeErrors attitude_errors(const Su2& X, const Vec3& omega, const AttitudeRef& ref) {
  AttitudeErrors e;
  e.X_e = ref.X_r.adjoint() * X;
  e.e_X = attitude_error_vector(e.X_e);
  const CMat2 Xe = e.X_e.matrix();
  e.e_omega = omega - vee_su2(Xe.adjoint() * hat_su2(ref.omega_r) * Xe, 1e-8 * (1.0 + ref.omega_r.norm()));
  e.z = Vec2(e.e_X.norm(), e.e_omega.norm());
  return e;
}

/// tau = -k_X e_X - k_w e_w - S(J w) w
///       + J [ -[e_w/2]^ Xe* [w_r]^ Xe + Xe* [w_r']^ Xe + Xe* [w_r]^ Xe [e_w/2]^ ]^vee
inline Vec3 attitude_torque(const Su2& /*X*/, const Vec3& omega, const AttitudeRef& ref,
                            const AttitudeGains& gains, const InertialParams& params,
                            const AttitudeErrors& errs) {
  const CMat2 Xe = errs.X_e.matrix();
  const CMat2 Xe_h = Xe.adjoint();
  const CMat2 Wr = Xe_h * hat_su2(ref.omega_r) * Xe;
  const CMat2 Eh = hat_su2(0.5 * errs.e_omega);
  const CMat2 ff = -Eh * Wr + Xe_h * hat_su2(ref.omega_r_dot) * Xe + Wr * Eh;
  const Vec3 ff_vec = vee_su2(ff, 1e-7 * (1.0 + ff.norm()));
  const Mat3& J = params.J();
  return -gains.k_X * errs.e_X - gains.k_omega * errs.e_omega - hat_so3(J * omega) * omega + J * ff_vec;
}

inline Vec3 attitude_torque(const Su2& X, const Vec3& omega, const AttitudeRef& ref,
                            const AttitudeGains& gains, const InertialParams& params) {
  return attitude_torque(X, omega, ref, gains, params, attitude_errors(X, omega, ref));
}

// ---------------------------------------------------------------------------
// 2x2 symmetric helpers (closed form)
// ---------------------------------------------------------------------------

/// Eigenvalues (min, max) of a symmetric 2x2 matrix from its trace and determinant.
inline std::pair<double, double> sym2_eigenvalues(const Mat2& A) {
  const double half_tr = 0.5 * (A(0, 0) + A(1, 1));
  const double half_diff = 0.5 * (A(0, 0) - A(1, 1));
  const double off = 0.5 * (A(0, 1) + A(1, 0));
  const double r = std::hypot(half_diff, off);
  return {half_tr - r, half_tr + r};
}

/// Positive definite when lambda_min > 1e-12 lambda_max (and lambda_max > 0).
inline bool is_positive_definite(const Mat2& A) {
  const auto [lo, hi] = sym2_eigenvalues(A);
  return hi > 0.0 && lo > 1e-12 * hi;
}

inline double quad_form(const Mat2& M, const Vec2& z) { return z.dot(M * z); }

struct AttitudeCertificate {
  Mat2 W{Mat2::Zero()};
  Mat2 M1{Mat2::Zero()};
  Mat2 M2{Mat2::Zero()};
  bool W_pd{false};
  bool M1_pd{false};
  bool M2_pd{false};

  bool pass() const { return W_pd && M1_pd && M2_pd; }
};

/// W^aa, M1^aa, M2^aa for a domain level phi in (0, 2).
inline AttitudeCertificate attitude_gain_matrices(const AttitudeGains& gains, const InertialParams& params,
                                                  double phi) {
  if (!(phi > 0.0 && phi < 2.0)) throw Error(ErrorCode::InvalidPhi, "phi must lie in (0, 2)");
  const double kX = gains.k_X, kw = gains.k_omega, kc = gains.k_c;
  const double lmin = params.lambda_min(), lmax = params.lambda_max();
  AttitudeCertificate c;
  c.W << kc * kX / lmax, -kc * kw / (2.0 * lmin),
         -kc * kw / (2.0 * lmin), kw - kc / 4.0;
  c.M1 << 0.5 * 4.0 * kX, -0.5 * kc,
          -0.5 * kc, 0.5 * lmin;
  c.M2 << 0.5 * 8.0 * kX / (2.0 - phi), 0.5 * kc,
          0.5 * kc, 0.5 * lmax;
  c.W_pd = is_positive_definite(c.W);
  c.M1_pd = is_positive_definite(c.M1);
  c.M2_pd = is_positive_definite(c.M2);
  return c;
}

/// Gamma(X_r, X) <= phi and z^T M2 z <= k_X phi.
inline bool attitude_domain_check(const AttitudeErrors& errs, const Su2& X, const AttitudeRef& ref,
                                  const AttitudeGains& gains, const InertialParams& params, double phi) {
  const AttitudeCertificate c = attitude_gain_matrices(gains, params, phi);
  return dist_su2(ref.X_r, X) <= phi && quad_form(c.M2, errs.z) <= gains.k_X * phi;
}

/// V^a = k_X Gamma(X_r, X) + k_c e_w . e_X + 1/2 e_w . J e_w
inline double attitude_lyapunov(const AttitudeErrors& errs, const Su2& X, const AttitudeRef& ref,
                                const AttitudeGains& gains, const InertialParams& params) {
  return gains.k_X * dist_su2(ref.X_r, X) + gains.k_c * errs.e_omega.dot(errs.e_X) +
         0.5 * errs.e_omega.dot(params.J() * errs.e_omega);
}

}  // namespace su2track
