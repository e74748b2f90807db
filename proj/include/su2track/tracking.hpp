#pragma once

// Full-state tracking on SU(2) x R^3: desired force, the three desired-attitude
// constructions, sign continuity, thrust projection, the gain certificate with
// its domain checks, and the composite Lyapunov function.

#include <algorithm>
#include <array>
#include <cmath>
#include <deque>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "su2track/attitude.hpp"
#include "su2track/jet.hpp"
#include "su2track/lie.hpp"
#include "su2track/state.hpp"
#include "su2track/types.hpp"

namespace su2track {

struct TranslationGains {
  double k_p{};
  double k_v{};
  double c_p{};

  bool valid() const { return k_p > 0.0 && k_v > 0.0 && c_p > 0.0; }
};

struct GainSet {
  TranslationGains trans;
  AttitudeGains att;  // att.k_c plays the role of c_a
};

/// phi_attractive bounds Gamma for the larger asymptotic-attractivity set.
struct DomainParams {
  double phi{0.01};
  double B_f{1.9};
  double B_p{1.0};
  double phi_attractive{1.999};

  double alpha() const { return 2.0 * std::sqrt(2.0 * phi); }
};

/// Reference trajectory at one instant. b1r is the raw heading vector with two
/// time derivatives (used by case 2); psi is the heading angle jet (case 3).
struct FullReference {
  Vec3 p{Vec3::Zero()};
  Vec3 v{Vec3::Zero()};
  Vec3 a{Vec3::Zero()};
  Vec3 jerk{Vec3::Zero()};
  Vec3 snap{Vec3::Zero()};
  Su2 X_r;
  Vec3 omega_r{Vec3::Zero()};
  Vec3 omega_r_dot{Vec3::Zero()};
  ScalarJet psi{ScalarJet::constant(0.0)};
  Vec3Jet b1r{Vec3Jet::constant(Vec3::UnitX())};
  std::optional<Vec3Jet> b_d1;  // case 1: externally supplied first body axis
  double f_r{0.0};
  Vec3 tau_r{Vec3::Zero()};

  AttitudeRef attitude() const { return {X_r, omega_r, omega_r_dot}; }
};

struct DesiredAttitude {
  Su2 X_d;
  Vec3 omega_d{Vec3::Zero()};
  Vec3 omega_d_dot{Vec3::Zero()};

  AttitudeRef as_reference() const { return {X_d, omega_d, omega_d_dot}; }
};

enum class AttitudeMode { Case1, Case2, Case3 };
enum class RateSource { Analytic, Numerical };

struct ControlOutput {
  double f{0.0};
  Vec3 tau{Vec3::Zero()};
  DesiredAttitude desired;
  Vec3 f_d{Vec3::Zero()};
  Vec3 e_p{Vec3::Zero()};
  Vec3 e_v{Vec3::Zero()};
  AttitudeErrors att;
  bool held_previous{false};
  bool negative_thrust{false};
};

inline constexpr double kForceThreshold = 1e-6;       // relative to m g
inline constexpr double kProjectionThreshold = 1e-6;  // |b_d3 x b_r1|
// Case 3 near b_d3 = -e3: the rates grow like 1 / |b_d3 + e3|^2, so the
// construction is treated as undefined inside this cone.
inline constexpr double kTiltSingularity = 0.05;  // |b_d3 + e3|

// ---------------------------------------------------------------------------
// Desired force and attitude constructions
// ---------------------------------------------------------------------------

/// f_d = -k_p e_p - k_v e_v + m g e3 + m a_r
inline Vec3 desired_force(const Vec3& e_p, const Vec3& e_v, const Vec3& a_r, const TranslationGains& gains,
                          const InertialParams& params) {
  return -gains.k_p * e_p - gains.k_v * e_v + params.m() * params.g() * e3() + params.m() * a_r;
}

/// b_d1 = -(b_d3 x (b_d3 x b_r1)) / |b_d3 x b_r1|
inline Vec3 desired_b1_projection(const Vec3& b_d3, const Vec3& b_r1) {
  const Vec3 c = b_d3.cross(b_r1);
  const double n = c.norm();
  if (n < kProjectionThreshold) throw Error(ErrorCode::ProjectionSingular, "heading parallel to thrust axis");
  return -b_d3.cross(c) / n;
}

inline Vec3 thrust_direction(const Vec3& f_d, double mg = 1.0) {
  const double n = f_d.norm();
  if (!(n >= kForceThreshold * mg)) throw Error(ErrorCode::DegenerateForce, "desired force vanishes");
  return f_d / n;
}

/// R_d = [b_d1, b_d3 x b_d1, b_d3] with b_d3 = f_d / |f_d|.
inline Mat3 desired_attitude_case2(const Vec3& f_d, const Vec3& b_r1) {
  const Vec3 b3 = thrust_direction(f_d);
  const Vec3 b1 = desired_b1_projection(b3, b_r1);
  Mat3 R;
  R.col(0) = b1;
  R.col(1) = b3.cross(b1);
  R.col(2) = b3;
  return R;
}

/// X_d = X_A X_B: X_A tilts e3 onto f_d by beta about n, X_B turns by psi_r about e3.
inline Su2 desired_attitude_case3(const Vec3& f_d, double psi_r) {
  const Vec3 b = thrust_direction(f_d);
  const double rho2 = f_d.x() * f_d.x() + f_d.y() * f_d.y();
  Su2 X_A;
  if (rho2 < kForceThreshold * kForceThreshold * f_d.squaredNorm()) {
    // Thrust along +-e3: n is undefined. beta = 0 gives I; beta = pi picks a half-turn about e1.
    X_A = b.z() > 0.0 ? Su2::identity() : Su2::from_quaternion(0.0, 1.0, 0.0, 0.0);
  } else {
    const double beta = std::atan2(std::sqrt(rho2), f_d.z());
    const Vec3 n = Vec3(-f_d.y(), f_d.x(), 0.0) / std::sqrt(rho2);
    X_A = exp_su2(0.5 * beta * n);
  }
  const Su2 X_B = exp_su2(0.5 * psi_r * e3());
  return X_A * X_B;
}

/// Keep the candidate if Gamma(candidate, prev) < 1, else flip its sign.
inline Su2 enforce_continuity(const Su2& candidate, const Su2& prev) {
  return dist_su2(candidate, prev) < 1.0 ? candidate : -candidate;
}

/// f = f_d . R e3
inline double thrust_projection(const Vec3& f_d, const Su2& X) { return f_d.dot(X.rotation().col(2)); }

// ---------------------------------------------------------------------------
// Jet versions: exact (omega_d, omega_d_dot) from a force jet
// ---------------------------------------------------------------------------

inline Mat3Jet frame_jet(const Vec3Jet& b1, const Vec3Jet& b2, const Vec3Jet& b3) {
  Mat3Jet R;
  R.v << b1.v, b2.v, b3.v;
  R.d << b1.d, b2.d, b3.d;
  R.dd << b1.dd, b2.dd, b3.dd;
  return R;
}

inline Vec3Jet thrust_direction_jet(const Vec3Jet& f_d, double mg) {
  if (!(f_d.v.norm() >= kForceThreshold * mg)) throw Error(ErrorCode::DegenerateForce, "desired force vanishes");
  return normalized(f_d);
}

/// Frame completion from a first-axis candidate; b1 need not be orthogonal to b3.
inline Mat3Jet frame_from_heading_jet(const Vec3Jet& b3, const Vec3Jet& b_r1) {
  const Vec3Jet c = cross(b3, b_r1);
  if (c.v.norm() < kProjectionThreshold) throw Error(ErrorCode::ProjectionSingular, "heading parallel to thrust axis");
  const Vec3Jet b1 = -(inverse(norm(c)) * cross(b3, c));
  return frame_jet(b1, cross(b3, b1), b3);
}

inline DesiredAttitude desired_from_frame_jet(const Mat3Jet& R) {
  const auto [w, w_dot] = body_rates(R);
  return {Su2::from_rotation(R.v), w, w_dot};
}

/// q_A = (1 + b3, -b2, b1, 0) / sqrt(2 (1 + b3)), the same tilt as the (beta, n)
/// construction, written without the atan2 so it differentiates cleanly.
inline QuatJet tilt_quaternion_jet(const Vec3Jet& b) {
  const ScalarJet one_plus = ScalarJet::constant(1.0) + component(b, 2);
  if (one_plus.v < 1e-9) throw Error(ErrorCode::DegenerateForce, "thrust axis antiparallel to e3");
  const ScalarJet s = inverse(sqrt(2.0 * one_plus));
  QuatJet q;
  q.v << one_plus.v, -b.v.y(), b.v.x(), 0.0;
  q.d << one_plus.d, -b.d.y(), b.d.x(), 0.0;
  q.dd << one_plus.dd, -b.dd.y(), b.dd.x(), 0.0;
  return s * q;
}

inline QuatJet yaw_quaternion_jet(const ScalarJet& psi) {
  const ScalarJet h = 0.5 * psi;
  const ScalarJet c = cos(h), s = sin(h);
  QuatJet q;
  q.v << c.v, 0.0, 0.0, s.v;
  q.d << c.d, 0.0, 0.0, s.d;
  q.dd << c.dd, 0.0, 0.0, s.dd;
  return q;
}

inline DesiredAttitude desired_from_quaternion_jet(const QuatJet& q) {
  const auto [w, w_dot] = body_rates(q);
  return {Su2::from_quaternion_unchecked(q.v), w, w_dot};
}

inline DesiredAttitude desired_case3_jet(const Vec3Jet& f_d, const ScalarJet& psi, double mg) {
  const Vec3Jet b = thrust_direction_jet(f_d, mg);
  if ((b.v + e3()).norm() < kTiltSingularity) {
    throw Error(ErrorCode::ProjectionSingular, "thrust axis inside the singular cone around -e3");
  }
  return desired_from_quaternion_jet(quat_mul(tilt_quaternion_jet(b), yaw_quaternion_jet(psi)));
}

inline DesiredAttitude desired_case2_jet(const Vec3Jet& f_d, const Vec3Jet& b_r1, double mg) {
  return desired_from_frame_jet(frame_from_heading_jet(thrust_direction_jet(f_d, mg), b_r1));
}

/// Heading angle jet psi such that case 3 applied to b reproduces X (X e3 must equal b).
inline ScalarJet heading_from_attitude_jet(const Vec3Jet& b, const QuatJet& q) {
  QuatJet qa = tilt_quaternion_jet(b);
  qa.v = detail::quat_conj(qa.v);
  qa.d = detail::quat_conj(qa.d);
  qa.dd = detail::quat_conj(qa.dd);
  const QuatJet qb = quat_mul(qa, q);
  const ScalarJet c{qb.v[0], qb.d[0], qb.dd[0]};
  const ScalarJet s{qb.v[3], qb.d[3], qb.dd[3]};
  return 2.0 * atan2(s, c);
}

// ---------------------------------------------------------------------------
// Numerical desired rates
// ---------------------------------------------------------------------------

enum class Stencil { Backward, Central };

/// Rates of an equally spaced X_d sequence from X' = X [w/2]^. Backward
/// evaluates at the last sample, Central at the middle one. Both O(h^2) in
/// omega_d; omega_d_dot is O(h^2) for Central and for Backward with >= 4 samples.
inline std::pair<Vec3, Vec3> desired_rates(const std::vector<Su2>& history, double h,
                                           Stencil stencil = Stencil::Backward) {
  const std::size_t n = history.size();
  if (n < 3) throw Error(ErrorCode::InsufficientHistory, "need at least three samples");
  if (!(h > 0.0)) throw Error(ErrorCode::NonPositiveDt, "sample spacing must be positive");
  auto q = [&](std::size_t i) -> Quat { return history[i].quaternion(); };
  Quat q0, qd, qdd;
  if (stencil == Stencil::Central) {
    const std::size_t k = n / 2;
    q0 = q(k);
    qd = (q(k + 1) - q(k - 1)) / (2.0 * h);
    qdd = (q(k + 1) - 2.0 * q(k) + q(k - 1)) / (h * h);
  } else {
    q0 = q(n - 1);
    qd = (3.0 * q(n - 1) - 4.0 * q(n - 2) + q(n - 3)) / (2.0 * h);
    if (n >= 4) {
      qdd = (2.0 * q(n - 1) - 5.0 * q(n - 2) + 4.0 * q(n - 3) - q(n - 4)) / (h * h);
    } else {
      qdd = (q(n - 1) - 2.0 * q(n - 2) + q(n - 3)) / (h * h);
    }
  }
  const Quat qc = detail::quat_conj(q0);
  return {2.0 * detail::quat_mul(qc, qd).tail<3>(), 2.0 * detail::quat_mul(qc, qdd).tail<3>()};
}

// ---------------------------------------------------------------------------
// Certificate
// ---------------------------------------------------------------------------

inline double spectral_norm2(const Mat2& A) {
  return std::sqrt(std::max(0.0, sym2_eigenvalues(A.transpose() * A).second));
}

struct CertificateReport {
  double phi{};
  double alpha{};
  Mat2 M1pp{Mat2::Zero()}, M2pp{Mat2::Zero()}, Wpp{Mat2::Zero()};
  Mat2 M1aa{Mat2::Zero()}, M2aa{Mat2::Zero()}, Waa{Mat2::Zero()};
  Mat2 Wpa{Mat2::Zero()};
  std::pair<double, double> eig_M1pp, eig_M2pp, eig_Wpp, eig_M1aa, eig_M2aa, eig_Waa;
  double Wpa_norm{};
  double B_z{};
  bool M1pp_pd{}, M2pp_pd{}, Wpp_pd{}, M1aa_pd{}, M2aa_pd{}, Waa_pd{};
  bool phi_ok{};
  bool pass{};
  // Secondary condition Wpp - Wpa Waa^-1 Wpa^T > 0.
  bool alt_schur_pd{};
  bool alt_pass{};
  // Sandwich and decay constants: c1 |z|^2 <= V <= c2 |z|^2, dV/dt <= -c3 |z|^2.
  double c1{}, c2{};
  double c3_bz{};    // B_z, as stated alongside the decay inequality
  double c3_rate{};  // lambda_min([l_pp, -|Wpa|/2; -|Wpa|/2, l_aa]), the rate actually implied
  // Sufficient bounds on the cross weights.
  double c_a_bound{}, c_p_bound{};
  bool c_a_within{}, c_p_within{};
  std::vector<std::string> violations;
};

inline CertificateReport gain_certificate(const GainSet& gains, const InertialParams& params,
                                          const DomainParams& domain) {
  if (!(domain.phi > 0.0 && domain.phi < 2.0)) throw Error(ErrorCode::InvalidPhi, "phi must lie in (0, 2)");
  CertificateReport r;
  const double kp = gains.trans.k_p, kv = gains.trans.k_v, cp = gains.trans.c_p;
  const double kX = gains.att.k_X, kw = gains.att.k_omega, ca = gains.att.k_c;
  const double m = params.m(), lmin = params.lambda_min(), lmax = params.lambda_max();
  const double a = domain.alpha();
  r.phi = domain.phi;
  r.alpha = a;

  r.M1pp << 0.5 * kp, -0.5 * cp, -0.5 * cp, 0.5 * m;
  r.M2pp << 0.5 * kp, 0.5 * cp, 0.5 * cp, 0.5 * m;
  r.Wpp << cp * kp / m * (1.0 - a), -cp * kv / (2.0 * m) * (1.0 + a),
           -cp * kv / (2.0 * m) * (1.0 + a), kv * (1.0 - a) - cp;
  const AttitudeCertificate ac = attitude_gain_matrices(gains.att, params, domain.phi);
  r.M1aa = ac.M1;
  r.M2aa = ac.M2;
  r.Waa = ac.W;
  r.Wpa << 4.0 * domain.B_f * cp / m, 0.0,
           4.0 * (domain.B_f + kp * domain.B_p), 0.0;

  r.eig_M1pp = sym2_eigenvalues(r.M1pp);
  r.eig_M2pp = sym2_eigenvalues(r.M2pp);
  r.eig_Wpp = sym2_eigenvalues(r.Wpp);
  r.eig_M1aa = sym2_eigenvalues(r.M1aa);
  r.eig_M2aa = sym2_eigenvalues(r.M2aa);
  r.eig_Waa = sym2_eigenvalues(r.Waa);
  r.M1pp_pd = is_positive_definite(r.M1pp);
  r.M2pp_pd = is_positive_definite(r.M2pp);
  r.Wpp_pd = is_positive_definite(r.Wpp);
  r.M1aa_pd = ac.M1_pd;
  r.M2aa_pd = ac.M2_pd;
  r.Waa_pd = ac.W_pd;
  r.Wpa_norm = spectral_norm2(r.Wpa);
  r.B_z = 4.0 * r.eig_Waa.first * r.eig_Wpp.first - r.Wpa_norm * r.Wpa_norm;
  r.phi_ok = domain.phi < 0.125;

  const bool all_pd = r.M1pp_pd && r.M2pp_pd && r.Wpp_pd && r.M1aa_pd && r.M2aa_pd && r.Waa_pd;
  r.pass = all_pd && r.B_z > 0.0 && r.phi_ok;
  if (r.Waa_pd) {
    const Mat2 S = r.Wpp - r.Wpa * r.Waa.inverse() * r.Wpa.transpose();
    r.alt_schur_pd = is_positive_definite(0.5 * (S + S.transpose()));
  }
  r.alt_pass = all_pd && r.alt_schur_pd && r.phi_ok;

  r.c1 = std::min(r.eig_M1pp.first, r.eig_M1aa.first);
  r.c2 = std::max(r.eig_M2pp.second, r.eig_M2aa.second);
  r.c3_bz = r.B_z;
  Mat2 C;
  C << r.eig_Wpp.first, -0.5 * r.Wpa_norm, -0.5 * r.Wpa_norm, r.eig_Waa.first;
  r.c3_rate = sym2_eigenvalues(C).first;

  r.c_a_bound = std::min({4.0 * kw, 4.0 * kw * kX * lmin * lmin / (lmax * kw * kw + lmin * lmin * kX),
                          2.0 * std::sqrt(kX * lmin)});
  r.c_p_bound = std::min({kv * (1.0 - a),
                          4.0 * m * kp * kv * (1.0 - a) * (1.0 - a) /
                              (kv * kv * (1.0 + a) * (1.0 + a) + 4.0 * m * kp * (1.0 - a)),
                          std::sqrt(kp * m)});
  r.c_a_within = ca > 0.0 && ca < r.c_a_bound;
  r.c_p_within = cp > 0.0 && cp < r.c_p_bound;

  auto flag = [&](bool ok, const char* what) {
    if (!ok) r.violations.emplace_back(what);
  };
  flag(r.phi_ok, "phi < 2^-3");
  flag(r.M1pp_pd, "M1pp > 0");
  flag(r.M2pp_pd, "M2pp > 0");
  flag(r.Wpp_pd, "Wpp > 0");
  flag(r.M1aa_pd, "M1aa > 0");
  flag(r.M2aa_pd, "M2aa > 0");
  flag(r.Waa_pd, "Waa > 0");
  flag(r.B_z > 0.0, "B_z = 4 lmin(Waa) lmin(Wpp) - |Wpa|^2 > 0");
  flag(r.c_a_within, "c_a below its sufficient bound");
  flag(r.c_p_within, "c_p below its sufficient bound");
  return r;
}

// ---------------------------------------------------------------------------
// Lyapunov function and domains
// ---------------------------------------------------------------------------

struct TrackingErrors {
  Vec3 e_p{Vec3::Zero()};
  Vec3 e_v{Vec3::Zero()};
  Vec3 e_X{Vec3::Zero()};
  Vec3 e_omega{Vec3::Zero()};
  double gamma{0.0};  // Gamma(X_d, X)

  Vec2 z_p() const { return {e_p.norm(), e_v.norm()}; }
  Vec2 z_a() const { return {e_X.norm(), e_omega.norm()}; }
  double z_bar_sq() const { return z_p().squaredNorm() + z_a().squaredNorm(); }
};

inline TrackingErrors tracking_errors(const Vec3& e_p, const Vec3& e_v, const Su2& X_d, const Su2& X,
                                      const Vec3& e_omega) {
  TrackingErrors e;
  e.e_p = e_p;
  e.e_v = e_v;
  e.e_X = attitude_error_vector(X_d.adjoint() * X);
  e.e_omega = e_omega;
  e.gamma = dist_su2(X_d, X);
  return e;
}

struct LyapunovValue {
  double V{0.0};
  double V_p{0.0};
  double V_a{0.0};
  double c1{0.0}, c2{0.0}, c3{0.0};
  double lower{0.0};  // c1 |z|^2
  double upper{0.0};  // c2 |z|^2
};

inline LyapunovValue full_lyapunov(const TrackingErrors& e, const GainSet& gains, const InertialParams& params,
                                   const CertificateReport& cert) {
  LyapunovValue L;
  L.V_p = 0.5 * gains.trans.k_p * e.e_p.squaredNorm() + 0.5 * params.m() * e.e_v.squaredNorm() +
          gains.trans.c_p * e.e_p.dot(e.e_v);
  L.V_a = gains.att.k_X * e.gamma + gains.att.k_c * e.e_X.dot(e.e_omega) +
          0.5 * e.e_omega.dot(params.J() * e.e_omega);
  L.V = L.V_p + L.V_a;
  L.c1 = cert.c1;
  L.c2 = cert.c2;
  L.c3 = cert.c3_bz;
  const double z2 = e.z_bar_sq();
  L.lower = cert.c1 * z2;
  L.upper = cert.c2 * z2;
  return L;
}

inline LyapunovValue full_lyapunov(const Vec3& e_p, const Vec3& e_v, const Su2& X_d, const Su2& X,
                                   const Vec3& e_omega, const GainSet& gains, const InertialParams& params,
                                   const DomainParams& domain) {
  return full_lyapunov(tracking_errors(e_p, e_v, X_d, X, e_omega), gains, params,
                       gain_certificate(gains, params, domain));
}

struct DomainMembership {
  bool in_D{false};
  bool in_attractive{false};
  double gamma{0.0};
};

/// Membership in the exponential domain D and in the larger attractivity set.
inline DomainMembership domain_check_full(const TrackingErrors& e, const GainSet& gains,
                                          const InertialParams& params, const DomainParams& domain,
                                          const CertificateReport& cert) {
  DomainMembership m;
  m.gamma = e.gamma;
  const double kX = gains.att.k_X, lmax = params.lambda_max();
  const double w2 = e.e_omega.squaredNorm();
  const double level = cert.eig_M2aa.second * e.z_a().squaredNorm() + cert.eig_M2pp.second * e.z_p().squaredNorm();
  m.in_D = domain.phi < 0.125 && e.gamma <= domain.phi && w2 <= 2.0 / lmax * kX * (domain.phi - e.gamma) &&
           level <= 0.5 * gains.trans.k_p * domain.B_p * domain.B_p;
  const double pa = domain.phi_attractive;
  m.in_attractive = pa < 2.0 && e.gamma <= pa && w2 <= 2.0 / lmax * kX * (pa - e.gamma);
  return m;
}

inline DomainMembership domain_check_full(const Vec3& e_p, const Vec3& e_v, const Su2& X_d, const Su2& X,
                                          const Vec3& e_omega, const GainSet& gains, const InertialParams& params,
                                          const DomainParams& domain) {
  return domain_check_full(tracking_errors(e_p, e_v, X_d, X, e_omega), gains, params, domain,
                           gain_certificate(gains, params, domain));
}

// ---------------------------------------------------------------------------
// Controller
// ---------------------------------------------------------------------------

struct ControllerOptions {
  AttitudeMode mode{AttitudeMode::Case3};
  RateSource rates{RateSource::Analytic};
  bool zero_omega_d_dot{false};
  bool clamp_thrust{false};
};

/// Jet of f_d along the closed loop, using the thrust actually applied.
inline Vec3Jet desired_force_jet(const RigidBodyState& s, const FullReference& ref, const TranslationGains& g,
                                 const InertialParams& params, bool clamp, double* f_out = nullptr) {
  const double m = params.m(), grav = params.g();
  const Mat3 R = s.X.rotation();
  const Vec3 b3 = R.col(2);
  const Vec3 e_p = s.p - ref.p;
  const Vec3 e_v = s.v - ref.v;
  Vec3Jet fd;
  fd.v = desired_force(e_p, e_v, ref.a, g, params);
  double f = fd.v.dot(b3);
  const bool clamped = clamp && f < 0.0;
  if (clamped) f = 0.0;
  const Vec3 e_v_dot = f / m * b3 - grav * e3() - ref.a;
  fd.d = -g.k_p * e_v - g.k_v * e_v_dot + m * ref.jerk;
  const Vec3 b3_dot = R * s.omega.cross(e3());
  const double f_dot = clamped ? 0.0 : fd.d.dot(b3) + fd.v.dot(b3_dot);
  const Vec3 e_v_ddot = (f_dot * b3 + f * b3_dot) / m - ref.jerk;
  fd.dd = -g.k_p * e_v_dot - g.k_v * e_v_ddot + m * ref.snap;
  if (f_out) *f_out = f;
  return fd;
}

/// Desired attitude candidate (before sign continuity) from the selected construction.
inline DesiredAttitude desired_attitude(const Vec3Jet& f_d, const FullReference& ref, AttitudeMode mode,
                                        double mg) {
  switch (mode) {
    case AttitudeMode::Case1: {
      if (!ref.b_d1) throw Error(ErrorCode::ConfigError, "case 1 needs an external b_d1 stream");
      return desired_case2_jet(f_d, *ref.b_d1, mg);
    }
    case AttitudeMode::Case2: return desired_case2_jet(f_d, ref.b1r, mg);
    case AttitudeMode::Case3: return desired_case3_jet(f_d, ref.psi, mg);
  }
  return {};
}

/// Stateful per-trajectory controller: keeps the previous desired attitude for
/// sign continuity and the vanishing-force fallback, and an X_d history for numerical rates.
class TrackingController {
 public:
  TrackingController(const GainSet& gains, const InertialParams& params, ControllerOptions opts = {})
      : gains_(gains), params_(params), opts_(opts) {}

  ControlOutput compute(double t, const RigidBodyState& s, const FullReference& ref) {
    ControlOutput out;
    out.e_p = s.p - ref.p;
    out.e_v = s.v - ref.v;
    const double mg = params_.m() * params_.g();
    Vec3Jet fd;
    try {
      fd = desired_force_jet(s, ref, gains_.trans, params_, opts_.clamp_thrust);
      out.f_d = fd.v;
      DesiredAttitude cand = desired_attitude(fd, ref, opts_.mode, mg);
      const Su2 anchor = prev_ ? prev_->X_d : s.X;
      cand.X_d = enforce_continuity(cand.X_d, anchor);
      out.desired = cand;
    } catch (const Error& err) {
      if (err.code() != ErrorCode::DegenerateForce && err.code() != ErrorCode::ProjectionSingular) throw;
      out.f_d = desired_force(out.e_p, out.e_v, ref.a, gains_.trans, params_);
      out.desired = prev_ ? *prev_ : DesiredAttitude{s.X, Vec3::Zero(), Vec3::Zero()};
      out.held_previous = true;
      ++held_count_;
    }

    if (opts_.rates == RateSource::Numerical) apply_numerical_rates(t, out.desired);
    if (opts_.zero_omega_d_dot) out.desired.omega_d_dot.setZero();

    out.f = thrust_projection(out.f_d, s.X);
    if (out.f < 0.0) {
      out.negative_thrust = true;
      ++negative_thrust_count_;
      if (opts_.clamp_thrust) out.f = 0.0;
    }
    const AttitudeRef aref = out.desired.as_reference();
    out.att = attitude_errors(s.X, s.omega, aref);
    out.tau = attitude_torque(s.X, s.omega, aref, gains_.att, params_, out.att);
    prev_ = out.desired;
    return out;
  }

  void seed_previous(const DesiredAttitude& d) { prev_ = d; }

  void reset() {
    prev_.reset();
    history_.clear();
    held_count_ = 0;
    negative_thrust_count_ = 0;
  }

  const std::optional<DesiredAttitude>& previous() const { return prev_; }
  std::size_t held_count() const { return held_count_; }
  std::size_t negative_thrust_count() const { return negative_thrust_count_; }
  const GainSet& gains() const { return gains_; }
  const InertialParams& params() const { return params_; }
  const ControllerOptions& options() const { return opts_; }

 private:
  void apply_numerical_rates(double t, DesiredAttitude& d) {
    history_.push_back({t, d.X_d});
    if (history_.size() > 4) history_.pop_front();
    if (history_.size() < 3) {
      d.omega_d.setZero();
      d.omega_d_dot.setZero();
      return;
    }
    std::vector<Su2> xs;
    for (const auto& [tt, X] : history_) xs.push_back(X);
    const double h = (history_.back().first - history_.front().first) / static_cast<double>(history_.size() - 1);
    std::tie(d.omega_d, d.omega_d_dot) = desired_rates(xs, h, Stencil::Backward);
  }

  GainSet gains_;
  InertialParams params_;
  ControllerOptions opts_;
  std::optional<DesiredAttitude> prev_;
  std::deque<std::pair<double, Su2>> history_;
  std::size_t held_count_{0};
  std::size_t negative_thrust_count_{0};
};

/// Single evaluation with analytic rates; prev anchors sign continuity.
inline ControlOutput tracking_control(const RigidBodyState& s, const FullReference& ref, const GainSet& gains,
                                      const InertialParams& params, AttitudeMode mode,
                                      const std::optional<DesiredAttitude>& prev = std::nullopt) {
  TrackingController c(gains, params, {mode, RateSource::Analytic, false, false});
  if (prev) c.seed_previous(*prev);
  return c.compute(0.0, s, ref);
}

}  // namespace su2track
