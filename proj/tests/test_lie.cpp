#include "test_util.hpp"

using namespace su2track;
using namespace su2track::testing;

namespace {

const std::complex<double> I{0.0, 1.0};

CMat2 basis(int k) {
  CMat2 L = CMat2::Zero();
  if (k == 1) L << 0.0, I, I, 0.0;
  if (k == 2) L << 0.0, -1.0, 1.0, 0.0;
  if (k == 3) L << I, 0.0, 0.0, -I;
  return L;
}

}  // namespace

TEST(HatSo3, ZeroGivesZero) { EXPECT_TRUE(hat_so3(Vec3::Zero()).isZero(0.0)); }

TEST(HatSo3, FirstGenerator) {
  Mat3 L1 = Mat3::Zero();
  L1(2, 1) = 1.0;
  L1(1, 2) = -1.0;
  EXPECT_EQ(hat_so3(e1()), L1);
}

TEST(HatSo3, ActsAsCrossProduct) {
  EXPECT_TRUE(near_vec(hat_so3(Vec3(1, 2, 3)) * Vec3(4, 5, 6), Vec3(-3, 6, -3), 0.0));
}

TEST(VeeSo3, InvertsHat) {
  EXPECT_EQ(vee_so3(hat_so3(Vec3(1, 2, 3))), Vec3(1, 2, 3));
  EXPECT_EQ(vee_so3(Mat3::Zero()), Vec3::Zero());
  Mat3 L2 = Mat3::Zero();
  L2(0, 2) = 1.0;
  L2(2, 0) = -1.0;
  EXPECT_EQ(vee_so3(L2), e2());
}

TEST(VeeSo3, RejectsNonSkew) { expect_error([] { vee_so3(Mat3::Identity()); }, ErrorCode::NotSkew); }

TEST(HatSu2, Basis) {
  EXPECT_TRUE(hat_su2(Vec3::Zero()).isZero(0.0));
  EXPECT_TRUE(hat_su2(e1()).isApprox(basis(1)));
  EXPECT_TRUE(hat_su2(e3()).isApprox(basis(3)));
  const Vec3 w(0.3, -1.1, 2.0);
  EXPECT_TRUE(hat_su2(w).isApprox(w.x() * basis(1) + w.y() * basis(2) + w.z() * basis(3)));
}

TEST(VeeSu2, InvertsHat) {
  EXPECT_EQ(vee_su2(hat_su2(Vec3(1, 2, 3))), Vec3(1, 2, 3));
  EXPECT_EQ(vee_su2(basis(2)), e2());
  EXPECT_EQ(vee_su2(CMat2(2.0 * basis(3))), Vec3(0, 0, 2));
}

TEST(VeeSu2, RejectsOutsideAlgebra) {
  expect_error([] { vee_su2(CMat2::Identity()); }, ErrorCode::NotInAlgebra);
}

TEST(ExpSo3, Identity) { EXPECT_TRUE(exp_so3(Vec3::Zero()).isIdentity(0.0)); }

TEST(ExpSo3, QuarterTurnAboutX) {
  EXPECT_TRUE(near_vec(exp_so3(Vec3(M_PI / 2, 0, 0)) * e2(), e3(), 1e-15));
}

TEST(ExpSo3, MatchesSeries) {
  const Vec3 w(0.3, -0.2, 0.9);
  EXPECT_TRUE(near_mat(exp_so3(w), exp_series(hat_so3(w)), 1e-12));
}

TEST(ExpSo3, SmallAngleBranch) {
  for (double s : {1e-3, 1e-7, 1e-9, 1e-12}) {
    const Vec3 w = s * Vec3(0.3, -0.2, 0.9).normalized();
    EXPECT_TRUE(near_mat(exp_so3(w), exp_series(hat_so3(w)), 1e-15));
  }
}

TEST(ExpSu2, Identity) { EXPECT_TRUE(same_element(exp_su2(Vec3::Zero()), Su2::identity(), 0.0)); }

TEST(ExpSu2, HalfTurnAboutZ) {
  const Su2 X = exp_su2(0.5 * M_PI * e3());
  EXPECT_TRUE(same_element(X, Su2::from_quaternion(0, 0, 0, 1), 1e-15));
}

TEST(ExpSu2, CoversExpSo3) {
  const Vec3 w(0.3, -0.2, 0.9);
  EXPECT_TRUE(near_mat(embed_su2_to_so3(exp_su2(0.5 * w)), exp_series(hat_so3(w)), 1e-12));
}

TEST(ExpSu2, MatrixFormMatchesSeries) {
  const Vec3 w(0.7, 0.1, -0.4);
  const CMat2 K = hat_su2(w);
  CMat2 sum = CMat2::Identity(), term = CMat2::Identity();
  for (int n = 1; n < 30; ++n) {
    term = term * K / static_cast<double>(n);
    sum += term;
  }
  EXPECT_LT((exp_su2(w).matrix() - sum).norm(), 1e-13);
}

TEST(LogMaps, RoundTrip) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Su2 X = random_su2(rng);
    EXPECT_TRUE(same_element(exp_su2(log_su2(X)), X, 1e-12));
    const Mat3 R = X.rotation();
    EXPECT_TRUE(near_mat(exp_so3(log_so3(R)), R, 1e-11));
  }
}

TEST(EmbedQuat, Examples) {
  EXPECT_TRUE(embed_quat_to_su2(Quat(1, 0, 0, 0)).matrix().isApprox(CMat2::Identity()));
  EXPECT_TRUE(embed_quat_to_su2(Quat(0, 1, 0, 0)).matrix().isApprox(basis(1)));
  const double c = std::cos(M_PI / 4), s = std::sin(M_PI / 4);
  CMat2 expected;
  expected << std::exp(I * (M_PI / 4)), 0.0, 0.0, std::exp(-I * (M_PI / 4));
  EXPECT_LT((embed_quat_to_su2(Quat(c, 0, 0, s)).matrix() - expected).norm(), 1e-15);
}

TEST(EmbedQuat, NegationAndValidity) {
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const Su2 X = random_su2(rng);
    EXPECT_TRUE((embed_quat_to_su2(-X.quaternion()).matrix() + X.matrix()).isZero(1e-15));
    EXPECT_TRUE(X.is_valid());
  }
}

TEST(EmbedQuat, RejectsNonUnit) {
  expect_error([] { embed_quat_to_su2(Quat(1.0, 0.1, 0, 0)); }, ErrorCode::NotUnit);
}

TEST(EmbedSu2ToSo3, Examples) {
  EXPECT_TRUE(embed_su2_to_so3(Su2::identity()).isIdentity(0.0));
  const Su2 X = Su2::from_quaternion(std::cos(M_PI / 4), 0, 0, std::sin(M_PI / 4));
  EXPECT_TRUE(near_mat(embed_su2_to_so3(X), axis_angle_oracle(e3(), M_PI / 2), 1e-15));
}

TEST(EmbedSu2ToSo3, DoubleCoverProperty) {
  Rng rng(5);
  for (int i = 0; i < 10000; ++i) {
    const Su2 X = random_su2(rng);
    const Mat3 R = embed_su2_to_so3(X);
    EXPECT_TRUE(near_mat(R, embed_su2_to_so3(-X), 1e-12));
    EXPECT_TRUE(near_mat(R, rotation_oracle(X), 1e-12));
    EXPECT_TRUE(is_rotation(R));
  }
}

TEST(FromRotation, InvertsEmbedding) {
  Rng rng(6);
  for (int i = 0; i < 2000; ++i) {
    const Mat3 R = random_rotation(rng);
    const Su2 X = Su2::from_rotation(R);
    EXPECT_GE(X.q1(), 0.0);
    EXPECT_TRUE(near_mat(X.rotation(), R, 1e-12));
  }
  // Half turns exercise the non-trace branches.
  for (const Vec3& u : {e1(), e2(), e3(), Vec3(1, 1, 0).normalized()}) {
    const Mat3 R = axis_angle_oracle(u, M_PI);
    EXPECT_TRUE(near_mat(Su2::from_rotation(R).rotation(), R, 1e-12));
  }
}

TEST(RotateViaSu2, Examples) {
  EXPECT_TRUE(near_vec(rotate_via_su2(Su2::identity(), Vec3(1, 2, 3)), Vec3(1, 2, 3), 1e-15));
  EXPECT_TRUE(near_vec(rotate_via_su2(Su2::from_quaternion(0, 0, 0, 1), e1()), -e1(), 1e-15));
}

TEST(RotateViaSu2, AgreesWithMatrixAndPreservesNorm) {
  Rng rng(7);
  for (int i = 0; i < 10000; ++i) {
    const Su2 X = random_su2(rng);
    const Vec3 b = random_vec(rng, 2.0);
    const Vec3 a = rotate_via_su2(X, b);
    EXPECT_TRUE(near_vec(a, rotation_oracle(X) * b, 1e-12));
    EXPECT_NEAR(a.norm(), b.norm(), 1e-12);
  }
}

TEST(Composition, MatchesRotationProduct) {
  Rng rng(8);
  for (int i = 0; i < 1000; ++i) {
    const Su2 A = random_su2(rng), B = random_su2(rng);
    EXPECT_TRUE(near_mat((A * B).rotation(), A.rotation() * B.rotation(), 1e-12));
  }
}

TEST(Composition, StaysOnGroupWithoutRenormalization) {
  Rng rng(9);
  std::vector<Su2> pool;
  for (int i = 0; i < 64; ++i) pool.push_back(random_su2(rng));
  Su2 X;
  for (int i = 0; i < 1000000; ++i) X = Su2::compose_raw(X, pool[i % 64]);
  EXPECT_TRUE(X.is_valid(1e-9));
}

TEST(DistSo3, Examples) {
  Rng rng(10);
  const Mat3 R = random_rotation(rng);
  EXPECT_NEAR(dist_so3(R, R), 0.0, 1e-15);
  EXPECT_NEAR(dist_so3(R, R * axis_angle_oracle(e3(), M_PI)), 2.0, 1e-12);
  EXPECT_NEAR(dist_so3(Mat3::Identity(), exp_so3(0.5 * M_PI * e1())), 1.0, 1e-12);
}

TEST(DistSo3, Symmetric) {
  Rng rng(12);
  for (int i = 0; i < 100; ++i) {
    const Mat3 A = random_rotation(rng), B = random_rotation(rng);
    EXPECT_NEAR(dist_so3(A, B), dist_so3(B, A), 1e-14);
  }
}

TEST(DistSu2, Examples) {
  Rng rng(13);
  const Su2 X = random_su2(rng);
  EXPECT_NEAR(dist_su2(X, X), 0.0, 1e-15);
  EXPECT_NEAR(dist_su2(X, -X), 2.0, 1e-15);
  const Su2 Y = X * exp_su2(0.5 * M_PI * random_unit_vector(rng));
  EXPECT_NEAR(dist_su2(X, Y), 1.0, 1e-12);
}

TEST(DistSu2, HalfAngleFormula) {
  Rng rng(14);
  for (int i = 0; i < 1000; ++i) {
    const Su2 X1 = random_su2(rng);
    const double theta = uniform(rng, 0.0, 4.0 * M_PI);
    const Su2 X2 = X1 * exp_su2(0.5 * theta * random_unit_vector(rng));
    EXPECT_NEAR(dist_su2(X1, X2), 1.0 - std::cos(theta / 2.0), 1e-12);
    // Trace form evaluated directly.
    const std::complex<double> tr = (CMat2::Identity() - X1.matrix().adjoint() * X2.matrix()).trace();
    EXPECT_NEAR(std::abs(tr.imag()), 0.0, 1e-12);
    EXPECT_NEAR(dist_su2(X1, X2), 0.5 * tr.real(), 1e-12);
  }
}

TEST(DistSu2, NonNegativeNearIdentity) {
  Rng rng(15);
  for (int i = 0; i < 10000; ++i) {
    const Su2 X = random_su2(rng);
    const Su2 Y = X * exp_su2(uniform(rng, 0.0, 1e-7) * random_unit_vector(rng));
    EXPECT_GE(dist_su2(X, Y), 0.0);
  }
}

TEST(AttitudeErrorVector, Examples) {
  EXPECT_TRUE(attitude_error_vector(Su2::identity()).isZero(0.0));
  const Vec3 e = attitude_error_vector(exp_su2(0.25 * M_PI * e3()));
  EXPECT_TRUE(near_vec(e, Vec3(0, 0, 0.5 * std::sin(M_PI / 4)), 1e-15));
}

TEST(AttitudeErrorVector, VanishesAtMinusIdentity) {
  EXPECT_TRUE(attitude_error_vector(-Su2::identity()).isZero(0.0));
}

TEST(AttitudeErrorVector, ClosedFormNorm) {
  Rng rng(16);
  for (int i = 0; i < 1000; ++i) {
    const double theta = uniform(rng, 0.0, 2.0 * M_PI);
    const Vec3 u = random_unit_vector(rng);
    const Vec3 e = attitude_error_vector(exp_su2(0.5 * theta * u));
    EXPECT_TRUE(near_vec(e, 0.5 * std::sin(theta / 2.0) * u, 1e-12));
  }
}

// Distance and error-vector inequalities on random pairs.
TEST(GeometricBounds, DistanceAndErrorVectorSandwich) {
  Rng rng(17);
  for (int i = 0; i < 10000; ++i) {
    const Su2 X1 = random_su2(rng), X2 = random_su2(rng);
    const double g = dist_su2(X1, X2);
    const double theta = 2.0 * std::acos(std::clamp((X1.adjoint() * X2).q1(), -1.0, 1.0));
    const double s2 = std::pow(std::sin(theta / 2.0), 2);
    const double ex2 = attitude_error_vector(X1.adjoint() * X2).squaredNorm();
    const double phi = std::min(1.999, g + uniform(rng, 0.0, 2.0 - g));
    EXPECT_LE(0.5 * s2, g + 1e-12);
    EXPECT_LE(2.0 * ex2, g + 1e-12);
    if (g <= phi) {
      EXPECT_LE(g, s2 / (2.0 - phi) + 1e-12);
      EXPECT_LE(g, 4.0 * ex2 / (2.0 - phi) + 1e-12);
    }
  }
}

TEST(GeometricBounds, ThirdAxisAlignmentNearIdentity) {
  Rng rng(18);
  const double limit = 1.0 - 1.0 / std::sqrt(2.0);
  int checked = 0;
  for (int i = 0; i < 20000; ++i) {
    const Su2 Xd = random_su2(rng);
    const Su2 X = Xd * exp_su2(uniform(rng, 0.0, 0.5 * M_PI) * random_unit_vector(rng));
    const double g = dist_su2(Xd, X);
    const Vec3 bd3 = rotation_oracle(Xd).col(2), b3 = rotation_oracle(X).col(2);
    const double cos_t = bd3.dot(b3);
    if (g < limit) {
      ++checked;
      EXPECT_GT(cos_t, 0.0);
    }
    if (cos_t > 0.0) {
      const double sin2 = 1.0 - cos_t * cos_t;
      const double ex2 = attitude_error_vector(Xd.adjoint() * X).squaredNorm();
      EXPECT_LE(sin2, 16.0 * ex2 + 1e-12);
      EXPECT_LE(16.0 * ex2, 8.0 * g + 1e-12);
    }
  }
  EXPECT_GT(checked, 1000);
}

TEST(AxisAngle, RoundTrip) {
  Rng rng(19);
  for (int i = 0; i < 200; ++i) {
    const AxisAngle aa{random_unit_vector(rng), uniform(rng, 0.01, 2.0 * M_PI - 0.01)};
    const AxisAngle back = to_axis_angle(from_axis_angle(aa));
    EXPECT_TRUE(same_rotation(from_axis_angle(back), from_axis_angle(aa), 1e-12));
  }
}

TEST(ProjectToSo3, NearestRotation) {
  Rng rng(20);
  const Mat3 R = random_rotation(rng);
  Mat3 noisy = R;
  noisy(0, 1) += 1e-3;
  const Mat3 P = project_to_so3(noisy);
  EXPECT_TRUE(is_rotation(P, 1e-12));
  EXPECT_LT((P - R).norm(), 2e-3);
}
