#pragma once

// Flat outputs (position with four derivatives, heading with two), the circle
// and piecewise-linear generators, and expansion into the full reference state.
//
// Expansion: m a_r + m g e3 = f_r R_r e3 fixes f_r and the thrust axis; the
// heading completes the frame (projected velocity or yaw angle). Rates come
// from differentiating the frame as a jet, so no finite differences enter.

#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "su2track/attitude.hpp"
#include "su2track/jet.hpp"
#include "su2track/lie.hpp"
#include "su2track/tracking.hpp"
#include "su2track/types.hpp"

namespace su2track {

struct FlatOutput {
  Vec3 p{Vec3::Zero()};
  Vec3 v{Vec3::Zero()};
  Vec3 a{Vec3::Zero()};
  Vec3 jerk{Vec3::Zero()};
  Vec3 snap{Vec3::Zero()};
  double psi{0.0};
  double psi_dot{0.0};
  double psi_ddot{0.0};
};

/// Velocity: b_1r = v_r / |v_r| projected onto the thrust plane.
/// Yaw: psi_r turns the tilted frame about its thrust axis.
enum class HeadingMode { Velocity, Yaw };

struct FlatTrajectory {
  std::function<FlatOutput(double)> sample;
  HeadingMode heading{HeadingMode::Yaw};
  double duration{0.0};  // 0 for unbounded
};

/// p_r = (3 sin t, 3 cos t, 0) with heading along v_r.
inline FlatOutput circle_reference(double t, double radius = 3.0, double rate = 1.0) {
  const double s = std::sin(rate * t), c = std::cos(rate * t);
  const double r = radius, w = rate;
  FlatOutput f;
  f.p = Vec3(r * s, r * c, 0.0);
  f.v = Vec3(r * w * c, -r * w * s, 0.0);
  f.a = Vec3(-r * w * w * s, -r * w * w * c, 0.0);
  f.jerk = Vec3(-r * w * w * w * c, r * w * w * w * s, 0.0);
  f.snap = Vec3(r * w * w * w * w * s, r * w * w * w * w * c, 0.0);
  return f;
}

inline FlatTrajectory circle_trajectory(double radius = 3.0, double rate = 1.0) {
  return {[radius, rate](double t) { return circle_reference(t, radius, rate); }, HeadingMode::Velocity, 0.0};
}

inline FlatTrajectory hover_trajectory(const Vec3& p, double psi = 0.0) {
  return {[p, psi](double) {
            FlatOutput f;
            f.p = p;
            f.psi = psi;
            return f;
          },
          HeadingMode::Yaw, 0.0};
}

enum class YawPlan { Fixed, AlongPath };

/// Piecewise-linear path at constant speed. Velocity jumps at the knots; after
/// the last knot the reference holds position.
class SplineReference {
 public:
  SplineReference(std::vector<Vec3> waypoints, double speed, YawPlan yaw = YawPlan::Fixed, double psi0 = 0.0)
      : wp_(std::move(waypoints)), speed_(speed), yaw_(yaw) {
    if (wp_.size() < 2) throw Error(ErrorCode::DegenerateSegment, "need at least two waypoints");
    if (!(speed > 0.0)) throw Error(ErrorCode::ConfigError, "speed must be positive");
    t_.push_back(0.0);
    double psi = psi0;
    for (std::size_t i = 1; i < wp_.size(); ++i) {
      const Vec3 d = wp_[i] - wp_[i - 1];
      const double len = d.norm();
      if (len < 1e-9) throw Error(ErrorCode::DegenerateSegment, "repeated waypoint");
      t_.push_back(t_.back() + len / speed);
      dir_.push_back(d / len);
      if (yaw == YawPlan::AlongPath && std::hypot(d.x(), d.y()) > 1e-9) psi = std::atan2(d.y(), d.x());
      psi_.push_back(psi);
    }
  }

  double duration() const { return t_.back(); }
  const std::vector<double>& knot_times() const { return t_; }

  FlatOutput operator()(double t) const {
    FlatOutput f;
    if (t >= t_.back()) {
      f.p = wp_.back();
      f.psi = psi_.back();
      return f;
    }
    std::size_t i = 0;
    if (t > 0.0) {
      while (i + 1 < dir_.size() && t >= t_[i + 1]) ++i;
    }
    const double tau = std::max(0.0, t - t_[i]);
    f.v = speed_ * dir_[i];
    f.p = wp_[i] + tau * f.v;
    f.psi = psi_[i];
    return f;
  }

  FlatTrajectory trajectory() const {
    SplineReference copy = *this;
    return {[copy](double t) { return copy(t); }, HeadingMode::Yaw, duration()};
  }

 private:
  std::vector<Vec3> wp_;
  std::vector<double> t_;
  std::vector<Vec3> dir_;
  std::vector<double> psi_;
  double speed_;
  YawPlan yaw_;
};

inline QuatJet quaternion_jet(const Su2& X, const Vec3& w, const Vec3& w_dot) {
  QuatJet q;
  q.v = X.quaternion();
  q.d = 0.5 * detail::quat_mul(q.v, detail::pure(w));
  q.dd = 0.5 * detail::quat_mul(q.d, detail::pure(w)) + 0.5 * detail::quat_mul(q.v, detail::pure(w_dot));
  return q;
}

/// Full reference state at one instant. prev (the previous X_r) fixes the sign.
inline FullReference flat_to_reference(const FlatOutput& flat, HeadingMode heading, const InertialParams& params,
                                       const std::optional<Su2>& prev = std::nullopt) {
  const double m = params.m(), mg = params.m() * params.g();
  FullReference ref;
  ref.p = flat.p;
  ref.v = flat.v;
  ref.a = flat.a;
  ref.jerk = flat.jerk;
  ref.snap = flat.snap;

  Vec3Jet f{m * (flat.a + params.g() * e3()), m * flat.jerk, m * flat.snap};
  ref.f_r = f.v.norm();
  if (ref.f_r < kForceThreshold * mg) throw Error(ErrorCode::DegenerateThrust, "reference thrust vanishes");
  const Vec3Jet b3 = normalized(f);

  DesiredAttitude att;
  if (heading == HeadingMode::Velocity) {
    if (flat.v.norm() < 1e-6) throw Error(ErrorCode::DegenerateHeading, "reference velocity vanishes");
    ref.b1r = normalized(Vec3Jet{flat.v, flat.a, flat.jerk});
    att = desired_from_frame_jet(frame_from_heading_jet(b3, ref.b1r));
    if (1.0 + b3.v.z() > 1e-9) ref.psi = heading_from_attitude_jet(b3, quaternion_jet(att.X_d, att.omega_d, att.omega_d_dot));
  } else {
    ref.psi = {flat.psi, flat.psi_dot, flat.psi_ddot};
    const ScalarJet c = cos(ref.psi), s = sin(ref.psi);
    ref.b1r = Vec3Jet{Vec3(c.v, s.v, 0.0), Vec3(c.d, s.d, 0.0), Vec3(c.dd, s.dd, 0.0)};
    att = desired_from_quaternion_jet(quat_mul(tilt_quaternion_jet(b3), yaw_quaternion_jet(ref.psi)));
  }
  ref.X_r = prev ? enforce_continuity(att.X_d, *prev) : att.X_d;
  ref.omega_r = att.omega_d;
  ref.omega_r_dot = att.omega_d_dot;
  const Mat3& J = params.J();
  ref.tau_r = J * ref.omega_r_dot - hat_so3(J * ref.omega_r) * ref.omega_r;
  return ref;
}

/// Stateful expander along a trajectory; carries the previous X_r for continuity.
class ReferenceStream {
 public:
  ReferenceStream(FlatTrajectory traj, const InertialParams& params) : traj_(std::move(traj)), params_(params) {}

  FullReference at(double t) {
    FullReference ref = flat_to_reference(traj_.sample(t), traj_.heading, params_, prev_);
    prev_ = ref.X_r;
    return ref;
  }

  /// Expansion without touching the continuity anchor (for RK4 stage times).
  FullReference peek(double t) const { return flat_to_reference(traj_.sample(t), traj_.heading, params_, prev_); }

  const FlatTrajectory& trajectory() const { return traj_; }

 private:
  FlatTrajectory traj_;
  InertialParams params_;
  std::optional<Su2> prev_;
};

/// max over samples of |m g e3 + m a_r| with a 10% margin.
inline double bound_B_f(const FlatTrajectory& traj, const InertialParams& params, double horizon, double dt = 1e-2) {
  double best = 0.0;
  for (double t = 0.0; t <= horizon + 1e-12; t += dt) {
    const FlatOutput f = traj.sample(t);
    best = std::max(best, (params.m() * params.g() * e3() + params.m() * f.a).norm());
  }
  return 1.1 * best;
}

}  // namespace su2track
