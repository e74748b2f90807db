#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Core>

namespace su2track {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using CMat2 = Eigen::Matrix2cd;

/// Scalar-first quaternion coefficients (q1, q2, q3, q4).
using Quat = Eigen::Vector4d;

enum class ErrorCode {
  NotSkew,
  NotInAlgebra,
  NotUnit,
  InvalidPhi,
  DegenerateForce,
  ProjectionSingular,
  InsufficientHistory,
  DegenerateThrust,
  DegenerateHeading,
  DegenerateSegment,
  NonPositiveDt,
  EmptyGyroBuffer,
  ConfigError,
  SimulationDiverged,
  ParseError,
  IoError,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NotSkew: return "NotSkew";
    case ErrorCode::NotInAlgebra: return "NotInAlgebra";
    case ErrorCode::NotUnit: return "NotUnit";
    case ErrorCode::InvalidPhi: return "InvalidPhi";
    case ErrorCode::DegenerateForce: return "DegenerateForce";
    case ErrorCode::ProjectionSingular: return "ProjectionSingular";
    case ErrorCode::InsufficientHistory: return "InsufficientHistory";
    case ErrorCode::DegenerateThrust: return "DegenerateThrust";
    case ErrorCode::DegenerateHeading: return "DegenerateHeading";
    case ErrorCode::DegenerateSegment: return "DegenerateSegment";
    case ErrorCode::NonPositiveDt: return "NonPositiveDt";
    case ErrorCode::EmptyGyroBuffer: return "EmptyGyroBuffer";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::SimulationDiverged: return "SimulationDiverged";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::IoError: return "IoError";
  }
  return "Unknown";
}

/// Library exception; every failure mode carries an ErrorCode.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline Vec3 e1() { return Vec3::UnitX(); }
inline Vec3 e2() { return Vec3::UnitY(); }
inline Vec3 e3() { return Vec3::UnitZ(); }

}  // namespace su2track
