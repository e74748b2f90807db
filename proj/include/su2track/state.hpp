#pragma once

#include <cmath>

#include "su2track/lie.hpp"
#include "su2track/types.hpp"

namespace su2track {

/// Plant (or reference) state (p, v, X, omega); v is in the world frame.
struct RigidBodyState {
  Vec3 p{Vec3::Zero()};
  Vec3 v{Vec3::Zero()};
  Su2 X;
  Vec3 omega{Vec3::Zero()};

  bool finite() const { return p.allFinite() && v.allFinite() && X.quaternion().allFinite() && omega.allFinite(); }

  /// Max-abs over the 13 coordinates.
  double max_abs() const {
    return std::max({p.cwiseAbs().maxCoeff(), v.cwiseAbs().maxCoeff(), X.quaternion().cwiseAbs().maxCoeff(),
                     omega.cwiseAbs().maxCoeff()});
  }
};

struct ControlInput {
  double f{0.0};
  Vec3 tau{Vec3::Zero()};
};

}  // namespace su2track
