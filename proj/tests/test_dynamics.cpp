#include <Eigen/Eigenvalues>

#include "test_util.hpp"

using namespace su2track;
using namespace su2track::testing;

namespace {

InertialParams spin_params() { return InertialParams(0.1, 10.0, diag_J(0.05, 0.08, 0.1)); }

RigidBodyState hover_state(const Vec3& p) {
  RigidBodyState s;
  s.p = p;
  return s;
}

double spin_error(double h) {
  const InertialParams p = spin_params();
  RigidBodyState s;
  s.omega = Vec3(0, 0, 1);
  const long n = std::lround(1.0 / h);
  for (long i = 0; i < n; ++i) s = rk4_step(s, ControlInput{p.m() * p.g(), Vec3::Zero()}, p, h);
  return (s.X.quaternion() - exp_su2(0.5 * e3()).quaternion()).norm();
}

// Torque-free spin about a non-principal axis; the closed form is not used, so
// the oracle for the order check is a much finer run.
RigidBodyState tumble(double h, double T) {
  const InertialParams p = spin_params();
  RigidBodyState s;
  s.omega = Vec3(0.3, 1.0, 0.2);
  s.X = exp_su2(Vec3(0.1, -0.2, 0.3));
  const long n = std::lround(T / h);
  for (long i = 0; i < n; ++i) s = rk4_step(s, ControlInput{}, p, h);
  return s;
}

}  // namespace

TEST(StateDerivative, HoverEquilibrium) {
  const InertialParams p = spin_params();
  const StateDerivative d = state_derivative(hover_state(Vec3(1, 2, 3)), {p.m() * p.g(), Vec3::Zero()}, p);
  EXPECT_TRUE(d.p_dot.isZero(0.0));
  EXPECT_TRUE(d.v_dot.isZero(1e-15));
  EXPECT_TRUE(d.q_dot.isZero(0.0));
  EXPECT_TRUE(d.omega_dot.isZero(0.0));
}

TEST(StateDerivative, FreeFall) {
  const InertialParams p = spin_params();
  RigidBodyState s;
  s.X = exp_su2(Vec3(0.3, 0.1, -0.7));
  s.v = Vec3(1, 2, 3);
  const StateDerivative d = state_derivative(s, {}, p);
  EXPECT_TRUE(near_vec(d.v_dot, -p.g() * e3(), 0.0));
  EXPECT_TRUE(near_vec(d.p_dot, s.v, 0.0));
}

TEST(StateDerivative, PrincipalAxisSpin) {
  const InertialParams p = spin_params();
  RigidBodyState s;
  s.X = exp_su2(Vec3(0.2, 0.0, 0.1));
  s.omega = Vec3(0, 0, 2.5);
  const StateDerivative d = state_derivative(s, {}, p);
  EXPECT_TRUE(d.omega_dot.isZero(1e-15));
  const double eps = 1e-7;
  const Su2 ahead = s.X * exp_su2(0.5 * eps * s.omega);
  const CMat2 Xdot = s.X.matrix() * hat_su2(0.5 * s.omega);
  EXPECT_LT(((ahead.matrix() - s.X.matrix()) / eps - Xdot).norm(), 1e-6);
  EXPECT_LT(((ahead.quaternion() - s.X.quaternion()) / eps - d.q_dot).norm(), 1e-6);
}

TEST(StateDerivative, GyroscopicTermIsPowerFree) {
  Rng rng(3);
  const InertialParams p = fixture_params();
  for (int i = 0; i < 1000; ++i) {
    RigidBodyState s;
    s.omega = random_vec(rng, 3.0);
    const StateDerivative d = state_derivative(s, {}, p);
    EXPECT_NEAR(s.omega.dot(p.J() * d.omega_dot), 0.0, 1e-12);
  }
}

TEST(Rk4, HoverUnchanged) {
  const InertialParams p = spin_params();
  const RigidBodyState s0 = hover_state(Vec3(0.5, -1, 2));
  RigidBodyState s = s0;
  for (int i = 0; i < 1000; ++i) s = rk4_step(s, ControlInput{p.m() * p.g(), Vec3::Zero()}, p, 1e-3);
  EXPECT_TRUE(near_vec(s.p, s0.p, 1e-14));
  EXPECT_LT(s.v.norm(), 1e-14);
  EXPECT_TRUE(same_element(s.X, s0.X, 1e-14));
  EXPECT_LT(s.omega.norm(), 1e-14);
}

TEST(Rk4, PureSpinMatchesExponential) { EXPECT_LT(spin_error(1e-3), 1e-10); }

TEST(Rk4, FourthOrderConvergence) {
  // Spin about a principal axis is integrated almost exactly, so use a tumble.
  const RigidBodyState ref = tumble(1e-4, 2.0);
  auto err = [&](double h) {
    const RigidBodyState s = tumble(h, 2.0);
    return (s.X.quaternion() - ref.X.quaternion()).norm() + (s.omega - ref.omega).norm();
  };
  const double e1v = err(0.04), e2v = err(0.02);
  EXPECT_GE(e1v / e2v, 14.0);
  EXPECT_GE(std::log2(e1v / e2v), 3.9);
  const double s1 = spin_error(0.1), s2 = spin_error(0.05);
  if (s2 > 1e-14) {
    EXPECT_GE(s1 / s2, 14.0);
  }
}

TEST(Rk4, RejectsNonPositiveStep) {
  const InertialParams p = spin_params();
  expect_error([&] { rk4_step(RigidBodyState{}, ControlInput{}, p, 0.0); }, ErrorCode::NonPositiveDt);
  expect_error([&] { rk4_step(RigidBodyState{}, ControlInput{}, p, -1e-3); }, ErrorCode::NonPositiveDt);
}

TEST(Rk4, EnergyConservedWithoutInputs) {
  const InertialParams p = fixture_params();
  RigidBodyState s;
  s.omega = Vec3(-1.81, 1.80, 2.81);
  const double E0 = rotational_energy(s, p);
  const Vec3 L0 = s.X.rotation() * p.J() * s.omega;
  for (int i = 0; i < 10000; ++i) s = rk4_step(s, ControlInput{}, p, 1e-3);
  EXPECT_NEAR(rotational_energy(s, p), E0, 1e-6);
  EXPECT_TRUE(near_vec(s.X.rotation() * p.J() * s.omega, L0, 1e-6));
}

TEST(Rk4, QuaternionNormDriftPerStep) {
  const InertialParams p = fixture_params();
  RigidBodyState s;
  s.omega = Vec3(-1.81, 1.80, 2.81);
  double worst = 0.0;
  for (int i = 0; i < 5000; ++i) {
    RigidBodyState out;
    const Quat raw = rk4_step_raw(out, s, 0.0, [](double, const RigidBodyState&) { return ControlInput{}; }, p, 1e-3);
    worst = std::max(worst, std::abs(raw.norm() - 1.0));
    s = out;
    ASSERT_NEAR(s.X.quaternion().norm(), 1.0, 1e-15);
  }
  EXPECT_LT(worst, 1e-9);
}

// ---------------------------------------------------------------------------

TEST(CircleReference, Examples) {
  const FlatOutput a = circle_reference(0.0);
  EXPECT_TRUE(near_vec(a.p, Vec3(0, 3, 0), 0.0));
  EXPECT_TRUE(near_vec(a.v, Vec3(3, 0, 0), 0.0));
  const FlatOutput b = circle_reference(0.5 * std::numbers::pi);
  EXPECT_TRUE(near_vec(b.p, Vec3(3, 0, 0), 1e-15));
  EXPECT_TRUE(near_vec(b.v, Vec3(0, -3, 0), 1e-15));
}

TEST(CircleReference, DerivativeIdentities) {
  for (double t = -5.0; t < 20.0; t += 0.173) {
    const FlatOutput f = circle_reference(t);
    EXPECT_NEAR(f.a.dot(f.p), -9.0, 1e-12);
    const double eps = 1e-5;
    const FlatOutput fp = circle_reference(t + eps), fm = circle_reference(t - eps);
    EXPECT_TRUE(near_vec((fp.p - fm.p) / (2 * eps), f.v, 1e-8));
    EXPECT_TRUE(near_vec((fp.v - fm.v) / (2 * eps), f.a, 1e-8));
    EXPECT_TRUE(near_vec((fp.a - fm.a) / (2 * eps), f.jerk, 1e-8));
    EXPECT_TRUE(near_vec((fp.jerk - fm.jerk) / (2 * eps), f.snap, 1e-8));
  }
}

TEST(FlatToReference, HoverIsIdentity) {
  const InertialParams p = fixture_params();
  const FullReference r = flat_to_reference(hover_trajectory(Vec3(1, 2, 3)).sample(0.0), HeadingMode::Yaw, p);
  EXPECT_TRUE(same_element(r.X_r, Su2::identity(), 1e-15));
  EXPECT_LT(r.omega_r.norm(), 1e-15);
  EXPECT_LT(r.omega_r_dot.norm(), 1e-15);
  EXPECT_NEAR(r.f_r, p.m() * p.g(), 1e-15);
  EXPECT_LT(r.tau_r.norm(), 1e-15);
}

TEST(FlatToReference, CircleThrustIsConstant) {
  const InertialParams p = fixture_params();
  ReferenceStream refs(circle_trajectory(), p);
  for (double t = 0.0; t < 7.0; t += 0.1) {
    const FullReference r = refs.at(t);
    EXPECT_NEAR(r.f_r, 0.1 * std::sqrt(109.0), 1e-14);
    const Vec3 b3 = (r.a + p.g() * e3()).normalized();
    EXPECT_TRUE(near_vec(rotation_oracle(r.X_r).col(2), b3, 1e-12));
    // Heading along the velocity, projected onto the thrust plane.
    const Vec3 b1 = rotation_oracle(r.X_r).col(0);
    EXPECT_NEAR(b1.dot(r.v.normalized()), (r.v.normalized() - r.v.normalized().dot(b3) * b3).norm(), 1e-12);
  }
}

TEST(FlatToReference, RowsHoldPointwise) {
  const InertialParams p = fixture_params();
  const FlatTrajectory traj = circle_trajectory();
  const double eps = 1e-4;
  for (double t = 0.05; t < 6.3; t += 0.29) {
    const FullReference r = flat_to_reference(traj.sample(t), traj.heading, p);
    const FullReference rp = flat_to_reference(traj.sample(t + eps), traj.heading, p, r.X_r);
    const FullReference rm = flat_to_reference(traj.sample(t - eps), traj.heading, p, r.X_r);
    // m v' = f R e3 - m g e3
    EXPECT_TRUE(near_vec((rp.v - rm.v) / (2 * eps), r.f_r / p.m() * rotation_oracle(r.X_r).col(2) - p.g() * e3(), 1e-8));
    // X' = X [w/2]^
    const Quat qdot = (rp.X_r.quaternion() - rm.X_r.quaternion()) / (2 * eps);
    EXPECT_LT((qdot - 0.5 * detail::quat_mul(r.X_r.quaternion(), detail::pure(r.omega_r))).norm(), 1e-8);
    // J w' = S(J w) w + tau
    const Vec3 wdot = (rp.omega_r - rm.omega_r) / (2 * eps);
    EXPECT_TRUE(near_vec(wdot, r.omega_r_dot, 1e-8));
    EXPECT_TRUE(near_vec(p.J() * wdot, hat_so3(p.J() * r.omega_r) * r.omega_r + r.tau_r, 1e-8));
  }
}

TEST(FlatToReference, ForwardIntegrationReproducesCircle) {
  const InertialParams p = fixture_params();
  const FlatTrajectory traj = circle_trajectory();
  ReferenceStream refs(traj, p);
  const FullReference r0 = refs.at(0.0);
  RigidBodyState s;
  s.p = r0.p;
  s.v = r0.v;
  s.X = r0.X_r;
  s.omega = r0.omega_r;
  const InputFn u = [&](double t, const RigidBodyState&) {
    const FullReference r = refs.peek(t);
    return ControlInput{r.f_r, r.tau_r};
  };
  const double h = 1e-3;
  const long n = std::lround(2.0 * std::numbers::pi / h);
  double worst_p = 0.0, worst_x = 0.0;
  for (long i = 0; i < n; ++i) {
    s = rk4_step(s, i * h, u, p, h);
    const FullReference r = refs.at((i + 1) * h);
    worst_p = std::max(worst_p, (s.p - r.p).norm());
    worst_x = std::max(worst_x, dist_su2(s.X, r.X_r));
  }
  EXPECT_LT(worst_p, 1e-6);
  EXPECT_LT(worst_x, 1e-6);
}

TEST(FlatToReference, YawHeadingAndErrors) {
  const InertialParams p = fixture_params();
  FlatOutput f;
  f.psi = 0.7;
  f.psi_dot = 0.3;
  const FullReference r = flat_to_reference(f, HeadingMode::Yaw, p);
  EXPECT_TRUE(same_element(r.X_r, exp_su2(0.35 * e3()), 1e-15));
  EXPECT_TRUE(near_vec(r.omega_r, Vec3(0, 0, 0.3), 1e-15));
  f.a = -p.g() * e3();
  expect_error([&] { flat_to_reference(f, HeadingMode::Yaw, p); }, ErrorCode::DegenerateThrust);
  FlatOutput still;
  expect_error([&] { flat_to_reference(still, HeadingMode::Velocity, p); }, ErrorCode::DegenerateHeading);
}

TEST(FlatToReference, BoundOnForce) {
  const InertialParams p = fixture_params();
  EXPECT_NEAR(bound_B_f(circle_trajectory(), p, 15.0), 1.1 * 0.1 * std::sqrt(109.0), 1e-12);
  EXPECT_NEAR(bound_B_f(hover_trajectory(Vec3::Zero()), p, 1.0), 1.1, 1e-12);
}

// ---------------------------------------------------------------------------

TEST(SplineReference, TwoWaypoints) {
  const SplineReference s({Vec3(0, 0, 0), Vec3(1, 0, 0)}, 1.0);
  EXPECT_DOUBLE_EQ(s.duration(), 1.0);
  for (double t = 0.0; t < 1.0; t += 0.1) {
    EXPECT_TRUE(near_vec(s(t).v, e1(), 0.0));
    EXPECT_TRUE(near_vec(s(t).p, t * e1(), 1e-15));
  }
  EXPECT_TRUE(near_vec(s(2.0).p, e1(), 0.0));
  EXPECT_TRUE(s(2.0).v.isZero(0.0));
}

TEST(SplineReference, CornerJump) {
  const double v = 1.5;
  const SplineReference s({Vec3(0, 0, 0), Vec3(3, 0, 0), Vec3(3, 3, 0)}, v);
  const double tk = s.knot_times()[1];
  EXPECT_DOUBLE_EQ(tk, 2.0);
  EXPECT_NEAR((s(tk + 1e-9).v - s(tk - 1e-9).v).norm(), std::sqrt(2.0) * v, 1e-12);
}

TEST(SplineReference, CollinearIsContinuous) {
  const SplineReference s({Vec3(0, 0, 0), Vec3(1, 1, 0), Vec3(3, 3, 0)}, 2.0);
  Vec3 prev = s(0.0).v;
  for (double t = 0.0; t < s.duration(); t += 1e-3) {
    EXPECT_TRUE(near_vec(s(t).v, prev, 1e-12));
    prev = s(t).v;
  }
}

TEST(SplineReference, AlongPathYaw) {
  const SplineReference s({Vec3(0, 0, 0), Vec3(0, 2, 0), Vec3(0, 2, 1), Vec3(-1, 2, 1)}, 1.0, YawPlan::AlongPath);
  EXPECT_NEAR(s(0.5).psi, 0.5 * std::numbers::pi, 1e-15);
  EXPECT_NEAR(s(2.5).psi, 0.5 * std::numbers::pi, 1e-15);  // vertical leg keeps heading
  EXPECT_NEAR(s(3.5).psi, std::numbers::pi, 1e-15);
}

TEST(SplineReference, Errors) {
  expect_error([] { SplineReference({Vec3(0, 0, 0), Vec3(0, 0, 0)}, 1.0); }, ErrorCode::DegenerateSegment);
  expect_error([] { SplineReference({Vec3(0, 0, 0)}, 1.0); }, ErrorCode::DegenerateSegment);
  expect_error([] { SplineReference({Vec3(0, 0, 0), e1()}, 0.0); }, ErrorCode::ConfigError);
}

// ---------------------------------------------------------------------------

TEST(SampleRealization, Deterministic) {
  const RealizationSample a = sample_realization(42), b = sample_realization(42), c = sample_realization(43);
  EXPECT_EQ(a.J, b.J);
  EXPECT_EQ(a.initial.p, b.initial.p);
  EXPECT_EQ(a.initial.X.quaternion(), b.initial.X.quaternion());
  EXPECT_NE(a.J, c.J);
}

TEST(SampleRealization, InertiaSpectrum) {
  for (std::uint64_t seed = 0; seed < 2000; ++seed) {
    const RealizationSample r = sample_realization(seed);
    EXPECT_LT((r.J - r.J.transpose()).norm(), 1e-15);
    const Vec3 ev = Eigen::SelfAdjointEigenSolver<Mat3>(r.J).eigenvalues();
    EXPECT_NEAR(ev(0), 0.05, 1e-12);
    EXPECT_NEAR(ev(2), 0.1, 1e-12);
    EXPECT_NEAR(r.initial.X.quaternion().norm(), 1.0, 1e-12);
  }
}

TEST(SampleRealization, InitialStatistics) {
  const int n = 10000;
  Vec3 mp = Vec3::Zero(), mv = Vec3::Zero();
  Vec3 sq = Vec3::Zero();
  double q1 = 0.0;
  for (int i = 0; i < n; ++i) {
    const RealizationSample r = sample_realization(static_cast<std::uint64_t>(i) + 1000);
    mp += r.initial.p;
    mv += r.initial.v;
    sq += r.initial.omega.cwiseProduct(r.initial.omega);
    q1 += r.initial.X.quaternion()(0);
  }
  mp /= n;
  mv /= n;
  sq /= n;
  const double band = 3.0 / std::sqrt(double(n));
  EXPECT_TRUE(near_vec(mp, Vec3(0, 0, -2), band));
  EXPECT_TRUE(near_vec(mv, Vec3::Zero(), band * std::sqrt(5.0)));
  EXPECT_TRUE(near_vec(sq, Vec3(5, 5, 5), 0.3));
  EXPECT_NEAR(q1 / n, 0.0, 0.03);
}

TEST(PaperFixture, PrintedValues) {
  const RealizationSample f = paper_fixture();
  EXPECT_DOUBLE_EQ(f.J(0, 0), 0.08);
  EXPECT_DOUBLE_EQ(f.J(1, 2), 0.01);
  EXPECT_TRUE(near_vec(f.initial.omega, Vec3(-1.81, 1.80, 2.81), 0.0));
  EXPECT_TRUE(near_vec(f.initial.v, Vec3(-0.59, 0.76, -0.95), 0.0));
  EXPECT_TRUE(near_vec(f.initial.p, Vec3(0.08, -0.16, -1.63), 0.0));
  EXPECT_DOUBLE_EQ(f.m, 0.1);
  EXPECT_DOUBLE_EQ(f.g, 10.0);
}

TEST(PaperFixture, ProjectedAttitude) {
  const RealizationSample f = paper_fixture();
  const Mat3 R = rotation_oracle(f.initial.X);
  EXPECT_TRUE(is_rotation(R));
  EXPECT_GT(f.R_adjustment, 0.0);
  EXPECT_LT(f.R_adjustment, 0.02);
  EXPECT_NEAR((R - f.R_printed).norm(), f.R_adjustment, 1e-12);
  EXPECT_LT((R - f.R_printed).cwiseAbs().maxCoeff(), 0.01);
}
