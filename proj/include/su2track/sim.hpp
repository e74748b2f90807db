#pragma once

// Closed-loop simulation, Monte Carlo sweeps, the estimator-in-the-loop
// schedule and the Lyapunov monitor.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "su2track/config.hpp"
#include "su2track/dynamics.hpp"
#include "su2track/estimator.hpp"
#include "su2track/reference.hpp"
#include "su2track/tracking.hpp"

namespace su2track {

// ---------------------------------------------------------------------------
// Trace
// ---------------------------------------------------------------------------

/// Column-named sample table on a uniform time grid.
struct SimTrace {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;
  std::map<std::string, std::string> meta;

  std::size_t col(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw Error(ErrorCode::ConfigError, "trace has no column '" + name + "'");
    return static_cast<std::size_t>(it - columns.begin());
  }
  bool has(const std::string& name) const {
    return std::find(columns.begin(), columns.end(), name) != columns.end();
  }
  std::vector<double> series(const std::string& name) const {
    const std::size_t c = col(name);
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(r[c]);
    return out;
  }
  bool empty() const { return rows.empty(); }
};

inline std::vector<std::string> trace_columns(bool with_estimator) {
  std::vector<std::string> c{"t"};
  auto v3 = [&c](const std::string& n) {
    for (const char* s : {"_x", "_y", "_z"}) c.push_back(n + s);
  };
  auto q4 = [&c](const std::string& n) {
    for (const char* s : {"_1", "_2", "_3", "_4"}) c.push_back(n + s);
  };
  v3("p"); v3("v"); q4("q"); v3("omega");
  v3("p_r"); v3("v_r"); q4("q_r"); v3("omega_r");
  q4("q_d"); v3("omega_d");
  c.push_back("f"); c.push_back("f_r"); v3("tau"); v3("tau_r");
  v3("e_p"); v3("e_v"); v3("e_X"); v3("e_omega");
  for (const char* s : {"gamma_dX", "gamma_rX", "psi_rR", "V", "V_lower", "V_upper", "in_D", "in_attractive", "held",
                        "negative_thrust"}) {
    c.emplace_back(s);
  }
  if (with_estimator) {
    v3("p_hat");
    c.emplace_back("gamma_hat");
  }
  return c;
}

// ---------------------------------------------------------------------------
// Setup
// ---------------------------------------------------------------------------

inline FlatTrajectory make_trajectory(const TrajectoryConfig& t) {
  if (t.type == "circle") return circle_trajectory(t.radius, t.rate);
  if (t.type == "hover") return hover_trajectory(t.hover_position, t.psi0);
  if (t.type == "spline") {
    return SplineReference(t.waypoints, t.speed, t.yaw_plan == "along_path" ? YawPlan::AlongPath : YawPlan::Fixed,
                           t.psi0)
        .trajectory();
  }
  throw Error(ErrorCode::ConfigError, "unknown trajectory type '" + t.type + "'");
}

struct Plant {
  InertialParams params;
  RigidBodyState initial;
};

inline Plant resolve_plant(const SimConfig& cfg, const FlatTrajectory& traj) {
  const PlantConfig& pc = cfg.plant;
  if (pc.source == "fixture") {
    const RealizationSample fx = paper_fixture();
    return {fx.params(), fx.initial};
  }
  if (pc.source == "sample") {
    const RealizationSample s = sample_realization(cfg.seed);
    return {InertialParams(pc.m, pc.g, s.J), s.initial};
  }
  InertialParams params(pc.m, pc.g, pc.J);
  if (pc.source == "reference") {
    const FullReference ref = flat_to_reference(traj.sample(0.0), traj.heading, params);
    RigidBodyState s;
    s.p = ref.p;
    s.v = ref.v;
    s.X = ref.X_r;
    s.omega = ref.omega_r;
    return {params, s};
  }
  return {params, pc.initial};
}

inline DomainParams resolve_domain(const SimConfig& cfg, const FlatTrajectory& traj, const InertialParams& params) {
  DomainParams d = cfg.domain;
  d.B_f = cfg.B_f ? *cfg.B_f : bound_B_f(traj, params, cfg.horizon);
  return d;
}

// ---------------------------------------------------------------------------
// Single run
// ---------------------------------------------------------------------------

struct RunSummary {
  std::uint64_t seed{0};
  bool converged{false};
  bool diverged{false};
  std::string error;
  double e_p{0.0}, e_v{0.0}, e_X{0.0}, e_omega{0.0};  // at the horizon
  double rms_e_p{0.0};
  bool entered_D{false};
  double t_entry{-1.0};
  std::size_t held{0};
  std::size_t negative_thrust{0};
  bool certificate_pass{false};
};

struct EventLogEntry {
  double t;
  std::string kind;  // IMU | PREDICT | POSE | CONTROL
};

struct SimResult {
  SimTrace trace;
  RunSummary summary;
  CertificateReport certificate;
  std::vector<EventLogEntry> events;
};

struct SimOptions {
  bool keep_trace{true};
  bool keep_events{false};
};

namespace detail {

inline long steps_of(double period, double h) {
  const long n = std::lround(period / h);
  if (n < 1 || std::abs(n * h - period) > 1e-9 * std::max(1.0, period)) {
    throw Error(ErrorCode::ConfigError, "periods must be integer multiples of h");
  }
  return n;
}

inline void push3(std::vector<double>& r, const Vec3& v) { r.insert(r.end(), {v.x(), v.y(), v.z()}); }
inline void push4(std::vector<double>& r, const Quat& q) { r.insert(r.end(), {q[0], q[1], q[2], q[3]}); }

inline double estimate_gamma(const Mekf& f, const Su2& X) {
  const Su2 Xh = Su2::from_rotation(attitude_estimate(f.state()));
  return std::min(dist_su2(Xh, X), dist_su2(-Xh, X));
}

}  // namespace detail

/// Initial filter state offset from the truth at t = 0.
inline EkfState initial_estimate(const RigidBodyState& s, double dp, double da) {
  EkfState init;
  const Mat3 R = s.X.rotation();
  init.p_hat = s.p + dp * Vec3(1.0, -1.0, 1.0).normalized();
  init.R_anchor = R * exp_so3(da * Vec3(1.0, 2.0, -1.0).normalized());
  init.v_hat = init.R_anchor.transpose() * s.v;
  init.P.setZero();
  const double sp = std::max(dp, 0.05), sa = std::max(da, 0.02), sv = 0.05;
  init.P.diagonal() << Vec3::Constant(sp * sp), Vec3::Constant(sv * sv), Vec3::Constant(sa * sa);
  return init;
}

/// Closed loop with zero-order-hold control. With the estimator enabled, the
/// controller sees the externalized filter state and events fire in the order
/// IMU, PREDICT, POSE, CONTROL at coinciding instants.
inline SimResult run_single(const SimConfig& cfg, const SimOptions& opt = {}) {
  const FlatTrajectory traj = make_trajectory(cfg.trajectory);
  const Plant plant = resolve_plant(cfg, traj);
  const InertialParams& params = plant.params;
  const DomainParams domain = resolve_domain(cfg, traj, params);

  SimResult res;
  res.certificate = gain_certificate(cfg.gains, params, domain);
  res.summary.seed = cfg.seed;
  res.summary.certificate_pass = res.certificate.pass;

  const double h = cfg.h;
  const double cp = cfg.control_period > 0.0 ? cfg.control_period : h;
  const long ctrl_steps = detail::steps_of(cp, h);
  const long record_steps = ctrl_steps * std::max(1L, std::lround(cfg.record_interval / cp));
  const long total_steps = std::lround(cfg.horizon / h);
  const bool est = cfg.estimator.enabled;
  long imu_steps = 0, predict_steps = 0, pose_steps = 0;
  if (est) {
    imu_steps = detail::steps_of(1.0 / cfg.estimator.imu_rate, h);
    predict_steps = detail::steps_of(1.0 / cfg.estimator.predict_rate, h);
    pose_steps = detail::steps_of(1.0 / cfg.estimator.pose_rate, h);
  }

  ReferenceStream refs(traj, params);
  TrackingController ctrl(cfg.gains, params, cfg.controller);
  RigidBodyState s = plant.initial;

  std::optional<Mekf> filter;
  if (est) {
    EkfConfig ec;
    ec.noise = cfg.estimator.noise;
    ec.reset_threshold = cfg.estimator.reset_threshold;
    ec.predict_rate = cfg.estimator.predict_rate;
    ec.g = params.g();
    ec.fuse_attitude = cfg.estimator.fuse_attitude;
    const EkfState init =
        initial_estimate(s, cfg.estimator.init_position_offset, cfg.estimator.init_attitude_offset);
    filter.emplace(ec, init);
    filter->seed_sign(s.X);
    filter->seed_rate(s.omega);  // no gyro sample before the first IMU tick
  }

  if (opt.keep_trace) res.trace.columns = trace_columns(est);
  res.trace.meta["h"] = std::to_string(h);
  res.trace.meta["control_period"] = std::to_string(cp);

  ControlInput u;
  ControlOutput out;
  FullReference ref;
  Vec3 gyro_int = Vec3::Zero();  // integrals since the last IMU sample
  double thrust_int = 0.0;
  double sum_ep2 = 0.0;
  std::size_t n_rec = 0;
  auto log_event = [&](double t, const char* kind) {
    if (opt.keep_events) res.events.push_back({t, kind});
  };

  try {
    for (long i = 0;; ++i) {
      const double t = static_cast<double>(i) * h;
      const bool control_tick = i % ctrl_steps == 0;
      if (est) {
        if (i > 0 && i % imu_steps == 0) {
          ImuSample imu;
          imu.t = t;
          const double span = static_cast<double>(imu_steps) * h;
          imu.accel = (thrust_int / span / params.m()) * e3();
          imu.gyro = gyro_int / span;
          gyro_int.setZero();
          thrust_int = 0.0;
          filter->add_imu(imu);
          log_event(t, "IMU");
        }
        if (i > 0 && i % predict_steps == 0) {
          filter->predict();
          log_event(t, "PREDICT");
        }
        if (i > 0 && i % pose_steps == 0) {
          PoseMeasurement pm;
          pm.t = t;
          pm.position = s.p;
          pm.noise_std = Vec3::Constant(cfg.estimator.noise.pose);
          pm.attitude = s.X.rotation();
          filter->add_pose(pm);
          log_event(t, "POSE");
        }
      }
      if (control_tick) {
        ref = refs.at(t);
        RigidBodyState fb = s;
        if (est) {
          fb = filter->externalize_state();
        }
        out = ctrl.compute(t, fb, ref);
        u = {out.f, out.tau};
        log_event(t, "CONTROL");
      }

      const bool last = i >= total_steps;
      if (control_tick && (i % record_steps == 0 || last)) {
        // Errors of the true state against the commanded desired attitude.
        const AttitudeErrors ae = attitude_errors(s.X, s.omega, out.desired.as_reference());
        const TrackingErrors te = tracking_errors(s.p - ref.p, s.v - ref.v, out.desired.X_d, s.X, ae.e_omega);
        const LyapunovValue L = full_lyapunov(te, cfg.gains, params, res.certificate);
        const DomainMembership dm = domain_check_full(te, cfg.gains, params, domain, res.certificate);
        if (dm.in_D && !res.summary.entered_D) {
          res.summary.entered_D = true;
          res.summary.t_entry = t;
        }
        sum_ep2 += te.e_p.squaredNorm();
        ++n_rec;
        if (opt.keep_trace) {
          std::vector<double> r;
          r.reserve(res.trace.columns.size());
          r.push_back(t);
          detail::push3(r, s.p);
          detail::push3(r, s.v);
          detail::push4(r, s.X.quaternion());
          detail::push3(r, s.omega);
          detail::push3(r, ref.p);
          detail::push3(r, ref.v);
          detail::push4(r, ref.X_r.quaternion());
          detail::push3(r, ref.omega_r);
          detail::push4(r, out.desired.X_d.quaternion());
          detail::push3(r, out.desired.omega_d);
          r.push_back(u.f);
          r.push_back(ref.f_r);
          detail::push3(r, u.tau);
          detail::push3(r, ref.tau_r);
          detail::push3(r, te.e_p);
          detail::push3(r, te.e_v);
          detail::push3(r, te.e_X);
          detail::push3(r, te.e_omega);
          r.push_back(te.gamma);
          r.push_back(dist_su2(ref.X_r, s.X));
          r.push_back(dist_so3(ref.X_r.rotation(), s.X.rotation()));
          r.push_back(L.V);
          r.push_back(L.lower);
          r.push_back(L.upper);
          r.push_back(dm.in_D ? 1.0 : 0.0);
          r.push_back(dm.in_attractive ? 1.0 : 0.0);
          r.push_back(out.held_previous ? 1.0 : 0.0);
          r.push_back(out.negative_thrust ? 1.0 : 0.0);
          if (est) {
            detail::push3(r, filter->state().p_hat);
            r.push_back(detail::estimate_gamma(*filter, s.X));
          }
          res.trace.rows.push_back(std::move(r));
        }
        if (last) {
          res.summary.e_p = te.e_p.norm();
          res.summary.e_v = te.e_v.norm();
          res.summary.e_X = te.e_X.norm();
          res.summary.e_omega = te.e_omega.norm();
        }
      }
      if (last) break;

      const RigidBodyState prev = s;
      s = rk4_step(s, u, params, h);
      if (est) {
        gyro_int += 0.5 * h * (prev.omega + s.omega);
        thrust_int += h * u.f;
      }
      if (!s.finite() || s.max_abs() > cfg.diverge_threshold) {
        throw Error(ErrorCode::SimulationDiverged, "state norm exceeded at t = " + std::to_string(t + h));
      }
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::SimulationDiverged) throw;
    res.summary.diverged = true;
    res.summary.error = e.what();
  }

  res.summary.rms_e_p = n_rec ? std::sqrt(sum_ep2 / static_cast<double>(n_rec)) : 0.0;
  res.summary.held = ctrl.held_count();
  res.summary.negative_thrust = ctrl.negative_thrust_count();
  res.summary.converged = !res.summary.diverged && res.summary.e_p < 1e-2 && res.summary.e_v < 1e-2 &&
                          res.summary.e_X < 1e-2 && res.summary.e_omega < 1e-2;
  return res;
}

// ---------------------------------------------------------------------------
// Monte Carlo
// ---------------------------------------------------------------------------

struct MonteCarloSummary {
  std::size_t n{0};
  std::uint64_t base_seed{0};
  std::vector<RunSummary> runs;  // sorted by seed
  std::size_t converged{0};
  std::size_t entered_D{0};
  std::vector<std::uint64_t> failed_seeds;
};

/// Run i uses the sampler with seed base + i on an otherwise shared config.
inline MonteCarloSummary run_monte_carlo(std::size_t n, const SimConfig& base, std::uint64_t seed,
                                         unsigned threads = 0) {
  if (n < 1) throw Error(ErrorCode::ConfigError, "need at least one realization");
  MonteCarloSummary mc;
  mc.n = n;
  mc.base_seed = seed;
  mc.runs.resize(n);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, n));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      SimConfig cfg = base;
      cfg.plant.source = "sample";
      cfg.seed = seed + i;
      RunSummary r;
      try {
        r = run_single(cfg, {false, false}).summary;
      } catch (const std::exception& e) {
        r.seed = cfg.seed;
        r.error = e.what();
      }
      mc.runs[i] = r;
    }
  };
  std::vector<std::thread> pool;
  for (unsigned k = 1; k < threads; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  std::sort(mc.runs.begin(), mc.runs.end(), [](const RunSummary& a, const RunSummary& b) { return a.seed < b.seed; });
  for (const RunSummary& r : mc.runs) {
    if (r.converged) ++mc.converged;
    else mc.failed_seeds.push_back(r.seed);
    if (r.entered_D) ++mc.entered_D;
  }
  return mc;
}

// ---------------------------------------------------------------------------
// Lyapunov monitor
// ---------------------------------------------------------------------------

struct MonitorViolation {
  std::size_t row;
  double t;
  std::string kind;  // sandwich | increase | envelope
  double value;
  double bound;
};

struct MonitorReport {
  bool certificate_pass{false};
  std::vector<std::string> certificate_violations;
  bool entered_D{false};
  double t_entry{-1.0};
  std::vector<MonitorViolation> violations;

  bool pass() const { return certificate_pass && violations.empty(); }
  std::vector<std::size_t> rows() const {
    std::vector<std::size_t> r;
    for (const auto& v : violations) r.push_back(v.row);
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    return r;
  }
};

struct MonitorTolerances {
  double sandwich_abs{1e-10};
  double increase_rel{1e-9};
  double increase_abs{1e-12};
  double envelope_factor{1.05};
};

/// From the first sample inside D on: sandwich bounds, V increases between
/// samples inside D, and the exponential envelope anchored at the entry.
inline MonitorReport lyapunov_monitor(const SimTrace& trace, const GainSet& gains, const InertialParams& params,
                                      const DomainParams& domain, const MonitorTolerances& tol = {}) {
  MonitorReport rep;
  const CertificateReport cert = gain_certificate(gains, params, domain);
  rep.certificate_pass = cert.pass;
  rep.certificate_violations = cert.violations;
  if (!cert.pass) return rep;
  const std::size_t cT = trace.col("t"), cV = trace.col("V"), cL = trace.col("V_lower"), cU = trace.col("V_upper"),
                    cD = trace.col("in_D");
  const double rate = cert.c3_rate / cert.c2;
  std::optional<std::size_t> entry;
  for (std::size_t k = 0; k < trace.rows.size(); ++k) {
    const auto& r = trace.rows[k];
    if (!entry && r[cD] > 0.5) {
      entry = k;
      rep.entered_D = true;
      rep.t_entry = r[cT];
    }
    if (!entry) continue;
    const double V = r[cV];
    if (V < r[cL] - tol.sandwich_abs) rep.violations.push_back({k, r[cT], "sandwich", V, r[cL]});
    if (V > r[cU] + tol.sandwich_abs) rep.violations.push_back({k, r[cT], "sandwich", V, r[cU]});
    if (k > *entry) {
      const auto& p = trace.rows[k - 1];
      const double bound = p[cV] + tol.increase_rel * std::abs(p[cV]) + tol.increase_abs;
      if (p[cD] > 0.5 && V > bound) rep.violations.push_back({k, r[cT], "increase", V, p[cV]});
    }
    const auto& e = trace.rows[*entry];
    const double env = e[cV] * std::exp(-rate * (r[cT] - e[cT])) * tol.envelope_factor + tol.increase_abs;
    if (V > env) rep.violations.push_back({k, r[cT], "envelope", V, env});
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Replay logs from simulated truth
// ---------------------------------------------------------------------------

struct ReplayFixture {
  std::vector<ReplayRecord> records;
  std::vector<std::pair<double, RigidBodyState>> truth;  // at pose stamps
  InertialParams params;
};

/// True-state closed loop over [0, duration]; emits exact interval-mean IMU
/// samples and noiseless poses at the configured estimator rates.
inline ReplayFixture make_replay_fixture(const SimConfig& cfg, double duration) {
  const FlatTrajectory traj = make_trajectory(cfg.trajectory);
  const Plant plant = resolve_plant(cfg, traj);
  const double h = cfg.h;
  const long imu_steps = detail::steps_of(1.0 / cfg.estimator.imu_rate, h);
  const long pose_steps = detail::steps_of(1.0 / cfg.estimator.pose_rate, h);
  const long total = std::lround(duration / h);
  ReplayFixture out{{}, {}, plant.params};
  ReferenceStream refs(traj, plant.params);
  TrackingController ctrl(cfg.gains, plant.params, cfg.controller);
  RigidBodyState s = plant.initial;
  Vec3 gyro_int = Vec3::Zero();
  double thrust_int = 0.0;
  for (long i = 0;; ++i) {
    const double t = static_cast<double>(i) * h;
    if (i > 0 && i % imu_steps == 0) {
      const double span = static_cast<double>(imu_steps) * h;
      ReplayRecord r;
      r.kind = ReplayRecord::Kind::Imu;
      r.imu = {t, (thrust_int / span / plant.params.m()) * e3(), gyro_int / span};
      out.records.push_back(r);
      gyro_int.setZero();
      thrust_int = 0.0;
    }
    if (i > 0 && i % pose_steps == 0) {
      ReplayRecord r;
      r.kind = ReplayRecord::Kind::Pose;
      r.pose.t = t;
      r.pose.position = s.p;
      r.pose.noise_std = Vec3::Constant(cfg.estimator.noise.pose);
      out.records.push_back(r);
      out.truth.emplace_back(t, s);
    }
    if (i >= total) break;
    const ControlOutput c = ctrl.compute(t, s, refs.at(t));
    const RigidBodyState prev = s;
    s = rk4_step(s, {c.f, c.tau}, plant.params, h);
    gyro_int += 0.5 * h * (prev.omega + s.omega);
    thrust_int += h * c.f;
  }
  return out;
}

}  // namespace su2track
