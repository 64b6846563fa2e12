#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/Geometry>

#include "coprou/error.hpp"
#include "coprou/geometry.hpp"
#include "test_support.hpp"

namespace coprou {
namespace {

using testing::random_pose;
using testing::random_vec;

Mat4 matrix_inverse(const Mat4& m) { return m.inverse(); }

TEST(Se3Exp, ZeroIsIdentity) {
  EXPECT_EQ(se3_exp(Pose6::identity()), Mat4::Identity());
}

TEST(Se3Exp, QuarterTurnAboutZ) {
  Pose6 p;
  p.rotation = Vec3(0, 0, std::numbers::pi / 2);
  const Mat4 t = se3_exp(p);
  Mat3 expected;
  expected << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  EXPECT_LT((t.block<3, 3>(0, 0) - expected).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((t.block<3, 3>(0, 0) * Vec3::UnitX() - Vec3::UnitY()).norm(), 1e-12);
}

TEST(Se3Exp, InverseMatchesMatrixInverse) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const Pose6 p = random_pose(rng, 2.0, 3.0);
    const Mat4 prod = se3_exp(p) * se3_exp(inverse(p));
    EXPECT_LT((prod - Mat4::Identity()).cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_LT((se3_exp(inverse(p)) - matrix_inverse(se3_exp(p))).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(So3Exp, MatchesAngleAxis) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const Vec3 w = random_vec(rng, 3.0);
    const Mat3 expected = Eigen::AngleAxisd(w.norm(), w.normalized()).toRotationMatrix();
    EXPECT_LT((so3_exp(w) - expected).cwiseAbs().maxCoeff(), 1e-12);
  }
  for (double theta : {1e-3, 1e-6, 1e-7, 1e-9}) {
    const Vec3 w = Vec3(1, -2, 0.5).normalized() * theta;
    const Mat3 expected = Eigen::AngleAxisd(theta, w.normalized()).toRotationMatrix();
    EXPECT_LT((so3_exp(w) - expected).cwiseAbs().maxCoeff(), 1e-15) << theta;
  }
}

TEST(So3Exp, IsRotation) {
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    const Mat3 r = so3_exp(random_vec(rng, 4.0));
    EXPECT_LT((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_NEAR(r.determinant(), 1.0, 1e-12);
  }
}

TEST(So3Exp, DerivativesMatchFiniteDifferences) {
  std::mt19937_64 rng(11);
  std::vector<Vec3> points = {Vec3::Zero(), Vec3(1e-7, -2e-7, 5e-8), Vec3(3e-3, 1e-3, -2e-3),
                              Vec3(0.02, -0.01, 0.005)};
  for (int i = 0; i < 20; ++i) points.push_back(random_vec(rng, 2.0));
  for (const Vec3& w : points) {
    const auto d = so3_exp_derivatives(w);
    for (int k = 0; k < 3; ++k) {
      const double h = 1e-6;
      Vec3 wp = w, wm = w;
      wp[k] += h;
      wm[k] -= h;
      const Mat3 fd = (so3_exp(wp) - so3_exp(wm)) / (2 * h);
      EXPECT_LT((fd - d[k]).cwiseAbs().maxCoeff(), 1e-8) << "omega " << w.transpose() << " k " << k;
    }
  }
}

TEST(So3Exp, SmoothNearZeroAngle) {
  // At theta = 1e-7 the Taylor branch and the closed form meet.
  const Vec3 w = Vec3(0.3, -0.5, 0.8).normalized() * 1e-7;
  const auto d = so3_exp_derivatives(w);
  for (int k = 0; k < 3; ++k) {
    const double h = 1e-5;
    Vec3 wp = w, wm = w;
    wp[k] += h;
    wm[k] -= h;
    const Mat3 fd = (so3_exp(wp) - so3_exp(wm)) / (2 * h);
    EXPECT_LT((fd - d[k]).cwiseAbs().maxCoeff(), 1e-5);
  }
}

TEST(So3Log, InvertsExp) {
  std::mt19937_64 rng(13);
  for (int i = 0; i < 100; ++i) {
    Vec3 w = random_vec(rng, 1.0);
    if (w.norm() > 3.0) continue;
    EXPECT_LT((so3_log(so3_exp(w)) - w).norm(), 1e-10);
  }
  EXPECT_LT(so3_log(Mat3::Identity()).norm(), 1e-15);
}

TEST(Se3Log, RoundTrip) {
  std::mt19937_64 rng(17);
  for (int i = 0; i < 50; ++i) {
    const Pose6 p = random_pose(rng, 1.5, 4.0);
    const Pose6 q = se3_log(se3_exp(p));
    EXPECT_LT((q.rotation - p.rotation).norm(), 1e-10);
    EXPECT_LT((q.translation - p.translation).norm(), 1e-10);
  }
}

TEST(Compose, MatchesMatrixProduct) {
  std::mt19937_64 rng(19);
  for (int i = 0; i < 50; ++i) {
    const Pose6 a = random_pose(rng, 1.0, 2.0);
    const Pose6 b = random_pose(rng, 1.0, 2.0);
    EXPECT_LT((se3_exp(compose(a, b)) - se3_exp(a) * se3_exp(b)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(RotationAngle, RoundOffAndTinyAngles) {
  Mat3 r = Mat3::Identity() * (1.0 + 1e-12);
  EXPECT_EQ(rotation_angle(r), 0.0);
  Mat3 flip = Mat3::Identity();
  flip(0, 0) = -1.0 - 1e-12;
  flip(1, 1) = -1.0 - 1e-12;
  EXPECT_DOUBLE_EQ(rotation_angle(flip), std::numbers::pi);
  EXPECT_NEAR(rotation_angle(so3_exp(Vec3(0.0, 0.3, 0.4))), 0.5, 1e-12);
  EXPECT_NEAR(rotation_angle(so3_exp(Vec3(3e-10, 0.0, 4e-10))), 5e-10, 1e-16);
  EXPECT_NEAR(rotation_angle(so3_exp(Vec3(0.0, 3.1, 0.0))), 3.1, 1e-12);
}

TEST(Pose6, ParamsRoundTrip) {
  const std::array<double, 6> p{0.1, -0.2, 0.3, 1.0, 2.0, -3.0};
  EXPECT_EQ(Pose6::from_params(p).params(), p);
}

TEST(Intrinsics, Validate) {
  EXPECT_NO_THROW((CameraIntrinsics{100, 100, 50, 50}.validate()));
  EXPECT_THROW((CameraIntrinsics{0, 100, 50, 50}.validate()), Error);
  EXPECT_THROW((CameraIntrinsics{100, -1, 50, 50}.validate()), Error);
  const CameraIntrinsics k{120, 90, 31.5, 20.5};
  EXPECT_LT((k.matrix() * k.inverse_matrix() - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(ProjectPixel, IdentityKeepsPixel) {
  const CameraIntrinsics unit{1, 1, 0, 0};
  const auto p = project_pixel({3.25, -1.5}, 2.5, Pose6::identity(), unit);
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->pixel.u, 3.25);
  EXPECT_DOUBLE_EQ(p->pixel.v, -1.5);
  EXPECT_DOUBLE_EQ(p->depth, 2.5);

  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(0.0, 640.0);
  const CameraIntrinsics k{525, 520, 319.5, 239.5};
  for (int i = 0; i < 100; ++i) {
    const PixelCoord px{u(rng), u(rng) * 0.75};
    const auto q = project_pixel(px, 1.0 + u(rng) / 10, Pose6::identity(), k);
    ASSERT_TRUE(q);
    EXPECT_NEAR(q->pixel.u, px.u, 1e-12);
    EXPECT_NEAR(q->pixel.v, px.v, 1e-12);
  }
}

TEST(ProjectPixel, PureTranslation) {
  const CameraIntrinsics unit{1, 1, 0, 0};
  Pose6 t;
  t.translation = Vec3(1, 0, 0);
  const auto p = project_pixel({2.0, 3.0}, 2.0, t, unit);
  ASSERT_TRUE(p);
  EXPECT_DOUBLE_EQ(p->pixel.u, 2.5);
  EXPECT_DOUBLE_EQ(p->pixel.v, 3.0);
  EXPECT_DOUBLE_EQ(p->depth, 2.0);
}

TEST(ProjectPixel, MatchesMatrixChain) {
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const CameraIntrinsics k{200 + 400 * u(rng), 200 + 400 * u(rng), 300 * u(rng), 200 * u(rng)};
    const Pose6 pose = random_pose(rng, 0.2, 0.5);
    const PixelCoord px{640 * u(rng), 480 * u(rng)};
    const double depth = 2.0 + 10.0 * u(rng);

    Mat4 k4 = Mat4::Identity();
    k4.block<3, 3>(0, 0) = k.matrix();
    const Eigen::Vector4d hom(px.u * depth, px.v * depth, depth, 1.0);
    const Eigen::Vector4d q = k4 * se3_exp(pose) * k4.inverse() * hom;
    const auto p = project_pixel(px, depth, pose, k);
    ASSERT_TRUE(p);
    EXPECT_NEAR(p->pixel.u, q[0] / q[2], 1e-9);
    EXPECT_NEAR(p->pixel.v, q[1] / q[2], 1e-9);
    EXPECT_NEAR(p->depth, q[2], 1e-9);
  }
}

TEST(ProjectPixel, RoundTripThroughInverse) {
  std::mt19937_64 rng(31);
  const CameraIntrinsics k{500, 500, 320, 240};
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    const Pose6 pose = random_pose(rng, 0.1, 0.3);
    const PixelCoord px{640 * u(rng), 480 * u(rng)};
    const double depth = 3.0 + 5.0 * u(rng);
    const auto fwd = project_pixel(px, depth, pose, k);
    ASSERT_TRUE(fwd);
    const auto back = project_pixel(fwd->pixel, fwd->depth, inverse(pose), k);
    ASSERT_TRUE(back);
    EXPECT_NEAR(back->pixel.u, px.u, 1e-6);
    EXPECT_NEAR(back->pixel.v, px.v, 1e-6);
    EXPECT_NEAR(back->depth, depth, 1e-6);
  }
}

TEST(ProjectPixel, BehindCameraIsNotVisible) {
  const CameraIntrinsics unit{1, 1, 0, 0};
  Pose6 back;
  back.translation = Vec3(0, 0, -3);
  EXPECT_FALSE(project_pixel({0.1, 0.2}, 2.0, back, unit));
  back.translation = Vec3(0, 0, -2);
  EXPECT_FALSE(project_pixel({0.1, 0.2}, 2.0, back, unit));
}

TEST(ProjectPixel, RejectsNonPositiveDepth) {
  const CameraIntrinsics unit{1, 1, 0, 0};
  try {
    (void)project_pixel({0, 0}, 0.0, Pose6::identity(), unit);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonPositiveDepth);
  }
  EXPECT_THROW((void)project_pixel({0, 0}, -1.0, Pose6::identity(), unit), Error);
}

TEST(MotionJacobian, ForwardAndInverseMatchFiniteDifferences) {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 10; ++trial) {
    const Pose6 pose = random_pose(rng, 0.5, 1.0);
    const auto p = pose.params();
    for (bool inv : {false, true}) {
      const MotionJacobian m = inv ? MotionJacobian::inverse(pose) : MotionJacobian::forward(pose);
      const Mat4 expected = inv ? matrix_inverse(se3_exp(pose)) : se3_exp(pose);
      EXPECT_LT((m.rotation - expected.block<3, 3>(0, 0)).cwiseAbs().maxCoeff(), 1e-12);
      EXPECT_LT((m.translation - expected.block<3, 1>(0, 3)).norm(), 1e-12);
      for (int k = 0; k < 6; ++k) {
        const double h = 1e-6;
        auto pp = p, pm = p;
        pp[k] += h;
        pm[k] -= h;
        Mat4 tp = se3_exp(Pose6::from_params(pp));
        Mat4 tm = se3_exp(Pose6::from_params(pm));
        if (inv) {
          tp = matrix_inverse(tp);
          tm = matrix_inverse(tm);
        }
        const Mat4 fd = (tp - tm) / (2 * h);
        EXPECT_LT((fd.block<3, 3>(0, 0) - m.d_rotation[k]).cwiseAbs().maxCoeff(), 1e-8);
        EXPECT_LT((Vec3(fd.block<3, 1>(0, 3)) - m.d_translation[k]).norm(), 1e-8);
      }
    }
  }
}

}  // namespace
}  // namespace coprou
