#pragma once

// Declarative simulation config (JSON). Every key is optional; defaults
// reproduce the circle experiment with the printed fixture and certified gains.

#include <cstdint>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "su2track/dynamics.hpp"
#include "su2track/estimator.hpp"
#include "su2track/reference.hpp"
#include "su2track/tracking.hpp"

namespace su2track {

using json = nlohmann::json;

struct TrajectoryConfig {
  std::string type{"circle"};  // circle | spline | hover
  double radius{3.0};
  double rate{1.0};
  std::vector<Vec3> waypoints;
  double speed{1.0};
  std::string yaw_plan{"fixed"};  // fixed | along_path
  double psi0{0.0};
  Vec3 hover_position{Vec3::Zero()};
};

/// Source of (m, g, J) and the initial state.
/// fixture: printed realization; sample: seeded sampler; reference: start on
/// the reference; explicit: values below.
struct PlantConfig {
  std::string source{"fixture"};
  double m{0.1};
  double g{10.0};
  Mat3 J{Mat3::Identity() * 0.075};
  RigidBodyState initial;
};

struct EstimatorLoopConfig {
  bool enabled{false};
  double imu_rate{500.0};
  double predict_rate{100.0};
  double pose_rate{50.0};
  EkfNoise noise;
  double reset_threshold{0.1};
  double init_position_offset{0.0};
  double init_attitude_offset{0.0};  // rad, about a fixed skew axis
  bool fuse_attitude{false};
};

struct SimConfig {
  TrajectoryConfig trajectory;
  PlantConfig plant;
  GainSet gains{{2.3, 1.35, 0.047}, {3000.0, 200.0, 0.013}};
  DomainParams domain;
  std::optional<double> B_f;  // unset: max over the reference plus 10%
  ControllerOptions controller;
  EstimatorLoopConfig estimator;
  double h{1e-4};
  double control_period{0.0};  // 0: every integrator step
  double horizon{15.0};
  double record_interval{1e-2};
  std::uint64_t seed{0};
  double diverge_threshold{1e6};
};

/// Certified tuple for the fixture (phi = 0.01, B_f = m (g + 9), B_p = 1).
inline GainSet fixture_gains() { return {{2.3, 1.35, 0.047}, {3000.0, 200.0, 0.013}}; }

/// Soft gains for 500 Hz zero-order-hold loops; not certified.
inline GainSet soft_gains() { return {{2.3, 1.35, 0.047}, {8.0, 2.0, 0.1}}; }

namespace detail {

inline Vec3 vec3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ConfigError, "expected a 3-vector");
  return Vec3(j[0].get<double>(), j[1].get<double>(), j[2].get<double>());
}

inline Mat3 mat3_from(const json& j) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::ConfigError, "expected a 3x3 matrix");
  Mat3 M;
  for (int r = 0; r < 3; ++r) M.row(r) = vec3_from(j[r]).transpose();
  return M;
}

template <class T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline GainSet gains_from_json(const json& j) {
  GainSet g = fixture_gains();
  detail::read(j, "k_p", g.trans.k_p);
  detail::read(j, "k_v", g.trans.k_v);
  detail::read(j, "c_p", g.trans.c_p);
  detail::read(j, "k_X", g.att.k_X);
  detail::read(j, "k_omega", g.att.k_omega);
  detail::read(j, "c_a", g.att.k_c);
  detail::read(j, "k_c", g.att.k_c);
  return g;
}

inline DomainParams domain_from_json(const json& j, std::optional<double>& B_f) {
  DomainParams d;
  detail::read(j, "phi", d.phi);
  detail::read(j, "B_p", d.B_p);
  detail::read(j, "phi_attractive", d.phi_attractive);
  if (j.contains("B_f")) B_f = j.at("B_f").get<double>();
  return d;
}

inline SimConfig config_from_json(const json& root) {
  try {
    SimConfig c;
    if (root.contains("trajectory")) {
      const json& t = root.at("trajectory");
      auto& T = c.trajectory;
      detail::read(t, "type", T.type);
      detail::read(t, "radius", T.radius);
      detail::read(t, "rate", T.rate);
      detail::read(t, "speed", T.speed);
      detail::read(t, "yaw_plan", T.yaw_plan);
      detail::read(t, "psi0", T.psi0);
      if (t.contains("hover_position")) T.hover_position = detail::vec3_from(t.at("hover_position"));
      if (t.contains("waypoints")) {
        for (const json& w : t.at("waypoints")) T.waypoints.push_back(detail::vec3_from(w));
      }
      if (T.type != "circle" && T.type != "spline" && T.type != "hover") {
        throw Error(ErrorCode::ConfigError, "unknown trajectory type '" + T.type + "'");
      }
    }
    if (root.contains("plant")) {
      const json& p = root.at("plant");
      auto& P = c.plant;
      detail::read(p, "source", P.source);
      detail::read(p, "m", P.m);
      detail::read(p, "g", P.g);
      if (p.contains("J")) P.J = detail::mat3_from(p.at("J"));
      if (p.contains("p")) P.initial.p = detail::vec3_from(p.at("p"));
      if (p.contains("v")) P.initial.v = detail::vec3_from(p.at("v"));
      if (p.contains("omega")) P.initial.omega = detail::vec3_from(p.at("omega"));
      if (p.contains("q")) {
        const json& q = p.at("q");
        if (!q.is_array() || q.size() != 4) throw Error(ErrorCode::ConfigError, "q must have 4 entries");
        P.initial.X = Su2::from_quaternion(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                                           q[3].get<double>());
      }
      if (P.source != "fixture" && P.source != "sample" && P.source != "reference" && P.source != "explicit") {
        throw Error(ErrorCode::ConfigError, "unknown plant source '" + P.source + "'");
      }
    }
    if (root.contains("gains")) c.gains = gains_from_json(root.at("gains"));
    if (root.contains("domain")) c.domain = domain_from_json(root.at("domain"), c.B_f);
    if (root.contains("controller")) {
      const json& m = root.at("controller");
      if (m.contains("attitude_case")) {
        const int k = m.at("attitude_case").get<int>();
        if (k < 1 || k > 3) throw Error(ErrorCode::ConfigError, "attitude_case must be 1, 2 or 3");
        c.controller.mode = k == 1 ? AttitudeMode::Case1 : k == 2 ? AttitudeMode::Case2 : AttitudeMode::Case3;
      }
      if (m.contains("rate_source")) {
        const auto s = m.at("rate_source").get<std::string>();
        if (s != "analytic" && s != "numerical") throw Error(ErrorCode::ConfigError, "rate_source: analytic|numerical");
        c.controller.rates = s == "analytic" ? RateSource::Analytic : RateSource::Numerical;
      }
      detail::read(m, "zero_omega_d_dot", c.controller.zero_omega_d_dot);
      detail::read(m, "clamp_thrust", c.controller.clamp_thrust);
    }
    if (root.contains("estimator")) {
      const json& e = root.at("estimator");
      auto& E = c.estimator;
      detail::read(e, "enabled", E.enabled);
      detail::read(e, "imu_rate", E.imu_rate);
      detail::read(e, "predict_rate", E.predict_rate);
      detail::read(e, "pose_rate", E.pose_rate);
      detail::read(e, "accel_noise", E.noise.accel);
      detail::read(e, "gyro_noise", E.noise.gyro);
      detail::read(e, "pose_noise", E.noise.pose);
      detail::read(e, "reset_threshold", E.reset_threshold);
      detail::read(e, "init_position_offset", E.init_position_offset);
      detail::read(e, "init_attitude_offset", E.init_attitude_offset);
      detail::read(e, "fuse_attitude", E.fuse_attitude);
    }
    detail::read(root, "h", c.h);
    detail::read(root, "control_period", c.control_period);
    detail::read(root, "horizon", c.horizon);
    detail::read(root, "record_interval", c.record_interval);
    detail::read(root, "seed", c.seed);
    if (!(c.h > 0.0)) throw Error(ErrorCode::ConfigError, "h must be positive");
    if (!(c.horizon > 0.0)) throw Error(ErrorCode::ConfigError, "horizon must be positive");
    if (c.control_period < 0.0) throw Error(ErrorCode::ConfigError, "control_period must be non-negative");
    return c;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ConfigError, e.what());
  }
}

inline json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::ConfigError, "cannot open '" + path + "'");
  try {
    return json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, path + ": " + e.what());
  }
}

inline SimConfig load_config(const std::string& path) { return config_from_json(read_json_file(path)); }

/// Gains file: {"gains": {...}, "domain": {...}, "plant": {"m":..,"J":..}} or a flat gains object.
struct CertifyInput {
  GainSet gains{fixture_gains()};
  DomainParams domain;
  InertialParams params{0.1, 10.0, paper_fixture().J};
};

inline CertifyInput certify_input_from_json(const json& root) {
  try {
    CertifyInput in;
    in.gains = gains_from_json(root.contains("gains") ? root.at("gains") : root);
    std::optional<double> B_f;
    if (root.contains("domain")) in.domain = domain_from_json(root.at("domain"), B_f);
    in.domain.B_f = B_f.value_or(1.9);
    if (root.contains("plant")) {
      const json& p = root.at("plant");
      double m = 0.1, g = 10.0;
      Mat3 J = paper_fixture().J;
      detail::read(p, "m", m);
      detail::read(p, "g", g);
      if (p.contains("J")) J = detail::mat3_from(p.at("J"));
      in.params = InertialParams(m, g, J);
    }
    return in;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::ParseError, e.what());
  }
}

}  // namespace su2track
