#pragma once

// Multiplicative EKF on z = (p, v, delta): p in the world frame, v in the body
// frame, and the attitude carried as R_hat = R_anchor * polar(I + S(delta)),
// i.e. a turn of atan|delta| about delta. The covariance attitude block is
// the body-frame error eps with R = R_hat Exp(eps).

#include <algorithm>
#include <cmath>
#include <istream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "su2track/lie.hpp"
#include "su2track/state.hpp"
#include "su2track/types.hpp"

namespace su2track {

using Mat9 = Eigen::Matrix<double, 9, 9>;
using Vec9 = Eigen::Matrix<double, 9, 1>;

struct ImuSample {
  double t{0.0};
  Vec3 accel{Vec3::Zero()};  // specific force, body frame
  Vec3 gyro{Vec3::Zero()};
};

struct PoseMeasurement {
  double t{0.0};
  Vec3 position{Vec3::Zero()};
  Vec3 noise_std{Vec3::Constant(0.02)};
  std::optional<Mat3> attitude;  // fused only in experimental mode
  double attitude_noise_std{0.02};
};

struct EkfState {
  double t{0.0};
  Vec3 p_hat{Vec3::Zero()};
  Vec3 v_hat{Vec3::Zero()};  // body frame
  Vec3 delta{Vec3::Zero()};
  Mat3 R_anchor{Mat3::Identity()};
  Mat9 P{Mat9::Identity()};
};

/// polar(I + S(delta)) = Exp(atan|delta| delta/|delta|)
inline Mat3 delta_rotation(const Vec3& delta) {
  const double n = delta.norm();
  if (n < 1e-12) return exp_so3(delta);
  return exp_so3((std::atan(n) / n) * delta);
}

/// Inverse of delta_rotation for turns below pi/2.
inline Vec3 delta_from_rotation(const Mat3& R_rel) {
  const Vec3 w = log_so3(R_rel);
  const double th = w.norm();
  if (th < 1e-12) return w;
  if (th >= 0.5 * std::numbers::pi - 1e-9) throw Error(ErrorCode::ConfigError, "attitude offset exceeds pi/2; reset earlier");
  return (std::tan(th) / th) * w;
}

inline Mat3 attitude_estimate(const EkfState& s) { return s.R_anchor * delta_rotation(s.delta); }

inline void set_attitude_estimate(EkfState& s, const Mat3& R_hat) {
  s.delta = delta_from_rotation(s.R_anchor.transpose() * R_hat);
}

inline void symmetrize(Mat9& P) { P = 0.5 * (P + P.transpose()).eval(); }

inline bool is_spd(const Mat9& P, double sym_tol = 1e-10) {
  if ((P - P.transpose()).cwiseAbs().maxCoeff() > sym_tol) return false;
  Eigen::LLT<Mat9> llt(P);
  return llt.info() == Eigen::Success;
}

struct EkfNoise {
  double accel{0.5};
  double gyro{0.05};
  double pose{0.02};
};

/// Discrete process noise for a step dt: accel noise drives v (and p through
/// the double integral), gyro noise drives the attitude error.
inline Mat9 process_noise(const EkfNoise& n, double dt) {
  Mat9 Q = Mat9::Zero();
  const double qa = n.accel * n.accel, qg = n.gyro * n.gyro;
  for (int i = 0; i < 3; ++i) {
    Q(i, i) = qa * dt * dt * dt / 3.0;
    Q(i, 3 + i) = Q(3 + i, i) = qa * dt * dt / 2.0;
    Q(3 + i, 3 + i) = qa * dt;
    Q(6 + i, 6 + i) = qg * dt;
  }
  return Q;
}

namespace detail {

struct NavState {
  Vec3 p;
  Vec3 v;  // body
};

/// Mean over [0, dt] with constant (accel, gyro): R(tau) = R0 Exp(w tau),
/// p' = R v, v' = -w x v + a - g R^T e3, integrated by RK4.
inline NavState propagate_nav(const NavState& x0, const Mat3& R0, const Vec3& accel, const Vec3& gyro, double dt,
                              double g) {
  auto Rt = [&](double tau) { return R0 * exp_so3(gyro * tau); };
  auto f = [&](double tau, const NavState& x) {
    const Mat3 R = Rt(tau);
    return NavState{R * x.v, -gyro.cross(x.v) + accel - g * R.transpose() * e3()};
  };
  auto add = [](const NavState& x, double h, const NavState& d) { return NavState{x.p + h * d.p, x.v + h * d.v}; };
  const NavState k1 = f(0.0, x0);
  const NavState k2 = f(0.5 * dt, add(x0, 0.5 * dt, k1));
  const NavState k3 = f(0.5 * dt, add(x0, 0.5 * dt, k2));
  const NavState k4 = f(dt, add(x0, dt, k3));
  return {x0.p + dt / 6.0 * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p),
          x0.v + dt / 6.0 * (k1.v + 2.0 * k2.v + 2.0 * k3.v + k4.v)};
}

}  // namespace detail

/// Mean-only propagation over dt with one IMU sample.
inline void ekf_propagate_mean(EkfState& s, const Vec3& accel, const Vec3& gyro, double dt, double g) {
  if (!(dt > 0.0)) throw Error(ErrorCode::NonPositiveDt, "dt must be positive");
  const Mat3 R0 = attitude_estimate(s);
  const detail::NavState x = detail::propagate_nav({s.p_hat, s.v_hat}, R0, accel, gyro, dt, g);
  s.p_hat = x.p;
  s.v_hat = x.v;
  set_attitude_estimate(s, R0 * exp_so3(gyro * dt));
  s.t += dt;
}

/// First-order transition I + F dt of the error state (dp, dv, eps).
inline Mat9 transition(const EkfState& s, const Vec3& gyro, double dt, double g) {
  const Mat3 R = attitude_estimate(s);
  Mat9 F = Mat9::Zero();
  F.block<3, 3>(0, 3) = R;
  F.block<3, 3>(0, 6) = -R * hat_so3(s.v_hat);
  F.block<3, 3>(3, 3) = -hat_so3(gyro);
  F.block<3, 3>(3, 6) = -g * hat_so3(R.transpose() * e3());
  F.block<3, 3>(6, 6) = -hat_so3(gyro);
  return Mat9::Identity() + dt * F;
}

inline EkfState ekf_predict(const EkfState& state, const ImuSample& imu, double dt, const Mat9& Q, double g = 10.0) {
  if (!(dt > 0.0)) throw Error(ErrorCode::NonPositiveDt, "dt must be positive");
  EkfState s = state;
  const Mat9 Fd = transition(s, imu.gyro, dt, g);
  ekf_propagate_mean(s, imu.accel, imu.gyro, dt, g);
  s.P = Fd * s.P * Fd.transpose() + Q;
  symmetrize(s.P);
  return s;
}

struct ScalarUpdateLog {
  int axis{0};
  double innovation{0.0};
  double innovation_var{0.0};
  Vec9 gain{Vec9::Zero()};
  double trace_before{0.0};
  double trace_after{0.0};
};

/// Folds a 9-dim error-state correction into the mean.
inline void apply_correction(EkfState& s, const Vec9& dx) {
  s.p_hat += dx.segment<3>(0);
  s.v_hat += dx.segment<3>(3);
  set_attitude_estimate(s, attitude_estimate(s) * exp_so3(dx.segment<3>(6)));
}

/// One scalar Kalman step on row H of the error state, Joseph form.
/// dx accumulates the correction so sequential steps equal the joint update.
inline ScalarUpdateLog scalar_update(Mat9& P, Vec9& dx, const Vec9& H, double residual, double r2, int axis) {
  ScalarUpdateLog log;
  log.axis = axis;
  log.trace_before = P.trace();
  log.innovation = residual - H.dot(dx);
  log.innovation_var = H.dot(P * H) + r2;
  const Vec9 K = P * H / log.innovation_var;
  log.gain = K;
  dx += K * log.innovation;
  const Mat9 A = Mat9::Identity() - K * H.transpose();
  P = A * P * A.transpose() + r2 * K * K.transpose();
  symmetrize(P);
  log.trace_after = P.trace();
  return log;
}

/// Three sequential scalar position updates; optional attitude rows in experimental mode.
inline EkfState ekf_update_scalar(const EkfState& state, const PoseMeasurement& meas,
                                  std::vector<ScalarUpdateLog>* log = nullptr, bool fuse_attitude = false) {
  EkfState s = state;
  Vec9 dx = Vec9::Zero();
  const Vec3 r_p = meas.position - s.p_hat;
  for (int i = 0; i < 3; ++i) {
    Vec9 H = Vec9::Zero();
    H(i) = 1.0;
    const double sd = meas.noise_std(i);
    const ScalarUpdateLog l = scalar_update(s.P, dx, H, r_p(i), sd * sd, i);
    if (log) log->push_back(l);
  }
  if (fuse_attitude && meas.attitude) {
    const Vec3 r_a = log_so3(attitude_estimate(s).transpose() * *meas.attitude);
    for (int i = 0; i < 3; ++i) {
      Vec9 H = Vec9::Zero();
      H(6 + i) = 1.0;
      const double sd = meas.attitude_noise_std;
      const ScalarUpdateLog l = scalar_update(s.P, dx, H, r_a(i), sd * sd, 3 + i);
      if (log) log->push_back(l);
    }
  }
  apply_correction(s, dx);
  return s;
}

/// Moves the anchor onto the current estimate when |delta| exceeds the
/// threshold. R_hat is unchanged, so the eps-covariance needs no rotation.
inline EkfState attitude_reset(const EkfState& state, double threshold = 0.1) {
  if (!(state.delta.norm() > threshold)) return state;
  EkfState s = state;
  s.R_anchor = project_to_so3(s.R_anchor * (Mat3::Identity() + hat_so3(s.delta)));
  s.delta.setZero();
  return s;
}

/// Full state for the controller: X from R_hat (sign kept near prev), omega
/// the mean of the buffered gyro samples, v rotated to the world frame.
inline RigidBodyState externalize(const EkfState& s, const std::vector<Vec3>& recent_gyro,
                                  const std::optional<Su2>& prev = std::nullopt) {
  if (recent_gyro.empty()) throw Error(ErrorCode::EmptyGyroBuffer, "no gyro samples since last call");
  RigidBodyState out;
  const Mat3 R = attitude_estimate(s);
  out.p = s.p_hat;
  out.v = R * s.v_hat;
  Su2 X = Su2::from_rotation(R);
  if (prev && X.quaternion().dot(prev->quaternion()) < 0.0) X = -X;
  out.X = X;
  Vec3 sum = Vec3::Zero();
  for (const Vec3& w : recent_gyro) sum += w;
  out.omega = sum / static_cast<double>(recent_gyro.size());
  return out;
}

struct EkfConfig {
  EkfNoise noise;
  double reset_threshold{0.1};
  double predict_rate{100.0};
  double g{10.0};
  bool fuse_attitude{false};  // experimental
};

/// Filter pipeline: IMU samples are buffered and folded in at the prediction
/// rate (mean through each sample interval, covariance once per tick with the
/// averaged gyro); poses are fused on arrival; stale poses are rejected.
class Mekf {
 public:
  Mekf(const EkfConfig& cfg, const EkfState& init) : cfg_(cfg), s_(init) {}

  void add_imu(const ImuSample& imu) {
    if (last_imu_ && imu.t <= last_imu_->t) return;
    pending_.push_back(imu);
    gyro_buffer_.push_back(imu.gyro);
    last_imu_ = imu;
  }

  /// Integrates buffered IMU data up to the newest sample. A sample stamped t
  /// carries the mean specific force and rate over the interval ending at t.
  void predict() {
    if (pending_.empty()) return;
    Vec3 w_sum = Vec3::Zero();
    double total = 0.0;
    const EkfState before = s_;
    for (const ImuSample& imu : pending_) {
      const double dt = imu.t - s_.t;
      if (dt <= 0.0) continue;
      ekf_propagate_mean(s_, imu.accel, imu.gyro, dt, cfg_.g);
      w_sum += dt * imu.gyro;
      total += dt;
    }
    pending_.clear();
    if (total > 0.0) {
      const Mat9 Fd = transition(before, w_sum / total, total, cfg_.g);
      s_.P = Fd * s_.P * Fd.transpose() + process_noise(cfg_.noise, total);
      symmetrize(s_.P);
      ++predict_count_;
    }
    s_ = attitude_reset(s_, cfg_.reset_threshold);
  }

  /// Returns false (and counts) when the pose is older than the filter clock.
  bool add_pose(const PoseMeasurement& meas) {
    if (meas.t < s_.t - 1e-12) {
      ++rejected_;
      return false;
    }
    std::vector<ScalarUpdateLog> log;
    s_ = ekf_update_scalar(s_, meas, &log, cfg_.fuse_attitude);
    s_ = attitude_reset(s_, cfg_.reset_threshold);
    last_log_ = std::move(log);
    ++update_count_;
    return true;
  }

  /// Between IMU samples the rate of the previous call is held.
  RigidBodyState externalize_state() {
    if (gyro_buffer_.empty() && last_rate_) gyro_buffer_.push_back(*last_rate_);
    // Mean through the IMU samples not yet folded into a prediction.
    EkfState ahead = s_;
    for (const ImuSample& imu : pending_) {
      if (imu.t > ahead.t) ekf_propagate_mean(ahead, imu.accel, imu.gyro, imu.t - ahead.t, cfg_.g);
    }
    RigidBodyState out = externalize(ahead, gyro_buffer_, prev_X_);
    gyro_buffer_.clear();
    prev_X_ = out.X;
    last_rate_ = out.omega;
    return out;
  }

  /// Sign reference for the next externalized X.
  void seed_sign(const Su2& X) { prev_X_ = X; }

  /// Rate used until the first gyro sample arrives.
  void seed_rate(const Vec3& w) { last_rate_ = w; }

  const EkfState& state() const { return s_; }
  EkfState& mutable_state() { return s_; }
  const EkfConfig& config() const { return cfg_; }
  std::size_t rejected() const { return rejected_; }
  std::size_t predict_count() const { return predict_count_; }
  std::size_t update_count() const { return update_count_; }
  const std::vector<ScalarUpdateLog>& last_log() const { return last_log_; }

 private:
  EkfConfig cfg_;
  EkfState s_;
  std::vector<ImuSample> pending_;
  std::vector<Vec3> gyro_buffer_;
  std::optional<ImuSample> last_imu_;
  std::optional<Su2> prev_X_;
  std::optional<Vec3> last_rate_;
  std::vector<ScalarUpdateLog> last_log_;
  std::size_t rejected_{0};
  std::size_t predict_count_{0};
  std::size_t update_count_{0};
};

// ---------------------------------------------------------------------------
// Replay log: "IMU t ax ay az gx gy gz" and "POSE t px py pz sx sy sz"
// ---------------------------------------------------------------------------

struct ReplayRecord {
  enum class Kind { Imu, Pose } kind{Kind::Imu};
  ImuSample imu;
  PoseMeasurement pose;
};

inline std::vector<ReplayRecord> parse_replay(std::istream& in) {
  std::vector<ReplayRecord> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    std::string tag;
    ss >> tag;
    ReplayRecord r;
    double t{}, a{}, b{}, c{}, d{}, e{}, f{};
    if (!(ss >> t >> a >> b >> c >> d >> e >> f)) {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected 7 numbers");
    }
    if (tag == "IMU") {
      r.kind = ReplayRecord::Kind::Imu;
      r.imu = {t, Vec3(a, b, c), Vec3(d, e, f)};
    } else if (tag == "POSE") {
      r.kind = ReplayRecord::Kind::Pose;
      r.pose.t = t;
      r.pose.position = Vec3(a, b, c);
      r.pose.noise_std = Vec3(d, e, f);
      if (!(r.pose.noise_std.array() > 0.0).all()) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": noise std must be positive");
      }
    } else {
      throw Error(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": unknown record '" + tag + "'");
    }
    out.push_back(r);
  }
  return out;
}

struct ReplayResult {
  EkfState final_state;
  std::vector<std::pair<double, EkfState>> after_pose;  // state after each accepted pose
  std::size_t rejected{0};
  std::size_t predicts{0};
};

/// Runs the pipeline over a record stream: predicts at the configured rate and
/// before each pose.
inline ReplayResult replay(const std::vector<ReplayRecord>& records, const EkfConfig& cfg, const EkfState& init) {
  Mekf f(cfg, init);
  const double period = 1.0 / cfg.predict_rate;
  double last_predict = init.t;
  ReplayResult res;
  for (const ReplayRecord& r : records) {
    if (r.kind == ReplayRecord::Kind::Imu) {
      f.add_imu(r.imu);
      if (r.imu.t - last_predict >= period - 1e-9) {
        f.predict();
        last_predict = r.imu.t;
      }
    } else {
      f.predict();
      if (f.add_pose(r.pose)) res.after_pose.emplace_back(r.pose.t, f.state());
    }
  }
  f.predict();
  res.final_state = f.state();
  res.rejected = f.rejected();
  res.predicts = f.predict_count();
  return res;
}

}  // namespace su2track
