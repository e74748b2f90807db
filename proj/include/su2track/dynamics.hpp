#pragma once

// Plant dynamics on SU(2) x R^3, fixed-step RK4 with quaternion
// re-normalization, the random-realization sampler and the printed fixture.

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <random>

#include <Eigen/SVD>

#include "su2track/attitude.hpp"
#include "su2track/lie.hpp"
#include "su2track/state.hpp"
#include "su2track/types.hpp"

namespace su2track {

/// Tangent of the 13 coordinates (p, v, q, omega).
struct StateDerivative {
  Vec3 p_dot{Vec3::Zero()};
  Vec3 v_dot{Vec3::Zero()};
  Quat q_dot{Quat::Zero()};
  Vec3 omega_dot{Vec3::Zero()};
};

/// m v' = f R e3 - m g e3,  X' = X [w/2]^,  J w' = S(J w) w + tau
inline StateDerivative state_derivative(const RigidBodyState& s, const ControlInput& u, const InertialParams& params) {
  StateDerivative d;
  d.p_dot = s.v;
  d.v_dot = (u.f / params.m()) * s.X.rotation().col(2) - params.g() * e3();
  d.q_dot = 0.5 * detail::quat_mul(s.X.quaternion(), detail::pure(s.omega));
  d.omega_dot = params.J_inv() * (hat_so3(params.J() * s.omega) * s.omega + u.tau);
  return d;
}

namespace detail {

/// Raw 13-vector stage state; q is carried unnormalized between stages.
struct RawState {
  Vec3 p, v;
  Quat q;
  Vec3 w;
};

inline RawState axpy(const RawState& s, double h, const StateDerivative& d) {
  return {s.p + h * d.p_dot, s.v + h * d.v_dot, s.q + h * d.q_dot, s.w + h * d.omega_dot};
}

inline RigidBodyState to_state(const RawState& r) {
  RigidBodyState s;
  s.p = r.p;
  s.v = r.v;
  s.X = Su2::from_quaternion_unchecked(r.q);
  s.omega = r.w;
  return s;
}

// Forces use the normalized attitude; q itself advances with its raw value,
// so the step is plain RK4 on the 13 coordinates.
inline StateDerivative raw_derivative(const RawState& r, const ControlInput& u, const InertialParams& params) {
  RigidBodyState s;
  s.p = r.p;
  s.v = r.v;
  s.X = Su2::from_quaternion_unchecked(r.q);
  s.omega = r.w;
  StateDerivative d = state_derivative(s, u, params);
  d.q_dot = 0.5 * quat_mul(r.q, pure(r.w));
  return d;
}

}  // namespace detail

using InputFn = std::function<ControlInput(double, const RigidBodyState&)>;

/// Classical RK4 with time-varying input u(t, s) evaluated at every stage.
/// Returns the end state before re-normalization of q.
inline Quat rk4_step_raw(RigidBodyState& out, const RigidBodyState& s, double t, const InputFn& u,
                         const InertialParams& params, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::NonPositiveDt, "step must be positive");
  const detail::RawState r0{s.p, s.v, s.X.quaternion(), s.omega};
  auto f = [&](double tt, const detail::RawState& r) {
    return detail::raw_derivative(r, u(tt, detail::to_state(r)), params);
  };
  const StateDerivative k1 = f(t, r0);
  const StateDerivative k2 = f(t + 0.5 * h, detail::axpy(r0, 0.5 * h, k1));
  const StateDerivative k3 = f(t + 0.5 * h, detail::axpy(r0, 0.5 * h, k2));
  const StateDerivative k4 = f(t + h, detail::axpy(r0, h, k3));
  detail::RawState r = r0;
  r.p += h / 6.0 * (k1.p_dot + 2.0 * k2.p_dot + 2.0 * k3.p_dot + k4.p_dot);
  r.v += h / 6.0 * (k1.v_dot + 2.0 * k2.v_dot + 2.0 * k3.v_dot + k4.v_dot);
  r.q += h / 6.0 * (k1.q_dot + 2.0 * k2.q_dot + 2.0 * k3.q_dot + k4.q_dot);
  r.w += h / 6.0 * (k1.omega_dot + 2.0 * k2.omega_dot + 2.0 * k3.omega_dot + k4.omega_dot);
  out = detail::to_state(r);
  return r.q;
}

inline RigidBodyState rk4_step(const RigidBodyState& s, double t, const InputFn& u, const InertialParams& params,
                               double h) {
  RigidBodyState out;
  rk4_step_raw(out, s, t, u, params, h);
  return out;
}

/// Zero-order hold: u constant over the step.
inline RigidBodyState rk4_step(const RigidBodyState& s, const ControlInput& u, const InertialParams& params,
                               double h) {
  return rk4_step(s, 0.0, [&u](double, const RigidBodyState&) { return u; }, params, h);
}

inline double rotational_energy(const RigidBodyState& s, const InertialParams& params) {
  return 0.5 * s.omega.dot(params.J() * s.omega);
}

// ---------------------------------------------------------------------------
// Realizations
// ---------------------------------------------------------------------------

struct RealizationSample {
  Mat3 J{Mat3::Identity()};
  RigidBodyState initial;
  std::uint64_t seed{0};
  double m{0.1};
  double g{10.0};
  // Fixture only: the printed R(t0) and its distance to the projected rotation.
  Mat3 R_printed{Mat3::Identity()};
  double R_adjustment{0.0};

  InertialParams params() const { return InertialParams(m, g, J); }
};

/// J = Q^T D Q with Q uniform on SO(3) and D = diag(0.05, 0.1, U[0.05, 0.1])
/// in random order; v, omega ~ N(0, 5 I); p ~ N((0, 0, -2), I); X uniform.
inline RealizationSample sample_realization(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  RealizationSample r;
  r.seed = seed;
  std::uniform_real_distribution<double> mid(0.05, 0.1);
  std::array<double, 3> d{0.05, 0.1, mid(rng)};
  std::shuffle(d.begin(), d.end(), rng);
  const Mat3 Q = random_su2(rng).rotation();
  Mat3 J = Q.transpose() * Vec3(d[0], d[1], d[2]).asDiagonal() * Q;
  r.J = 0.5 * (J + J.transpose());
  std::normal_distribution<double> n(0.0, 1.0);
  const double s5 = std::sqrt(5.0);
  r.initial.v = s5 * Vec3(n(rng), n(rng), n(rng));
  r.initial.omega = s5 * Vec3(n(rng), n(rng), n(rng));
  r.initial.p = Vec3(0.0, 0.0, -2.0) + Vec3(n(rng), n(rng), n(rng));
  r.initial.X = random_su2(rng);
  return r;
}

/// The printed realization; R(t0) is given to two decimals and is projected to
/// the nearest rotation before conversion.
inline RealizationSample paper_fixture() {
  RealizationSample r;
  r.seed = 0;
  r.R_printed << 0.51, -0.05, -0.86,
                 -0.78, 0.41, -0.48,
                 0.37, 0.91, 0.17;
  r.J << 0.08, 0.01, 0.02,
         0.01, 0.07, 0.01,
         0.02, 0.01, 0.07;
  const Mat3 R = project_to_so3(r.R_printed);
  r.R_adjustment = (R - r.R_printed).norm();
  r.initial.X = Su2::from_rotation(R);
  r.initial.p = Vec3(0.08, -0.16, -1.63);
  r.initial.v = Vec3(-0.59, 0.76, -0.95);
  r.initial.omega = Vec3(-1.81, 1.80, 2.81);
  return r;
}

}  // namespace su2track
