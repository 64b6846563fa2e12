#include "coprou/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Geometry>
#include <Eigen/LU>

#include "coprou/error.hpp"

namespace coprou {

namespace {

constexpr double kTaylorAngle = 1e-6;
// The derivative coefficients lose precision to cancellation much earlier
// than the Rodrigues coefficients do.
constexpr double kTaylorAngleDerivative = 1e-2;

struct RodriguesCoefficients {
  double a;  // sin(t) / t
  double b;  // (1 - cos(t)) / t^2
};

RodriguesCoefficients rodrigues_coefficients(double theta) {
  if (theta < kTaylorAngle) {
    const double t2 = theta * theta;
    return {1.0 - t2 / 6.0, 0.5 - t2 / 24.0};
  }
  const double half_sin = std::sin(0.5 * theta);
  return {std::sin(theta) / theta, 2.0 * half_sin * half_sin / (theta * theta)};
}

}  // namespace

Mat3 CameraIntrinsics::matrix() const {
  Mat3 k;
  k << fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0;
  return k;
}

Mat3 CameraIntrinsics::inverse_matrix() const {
  Mat3 k;
  k << 1.0 / fx, 0.0, -cx / fx, 0.0, 1.0 / fy, -cy / fy, 0.0, 0.0, 1.0;
  return k;
}

void CameraIntrinsics::validate() const {
  require(std::isfinite(fx) && std::isfinite(fy) && std::isfinite(cx) && std::isfinite(cy),
          ErrorKind::kInvalidArgument, "intrinsics must be finite");
  require(fx > 0.0 && fy > 0.0, ErrorKind::kInvalidArgument,
          "focal lengths must be positive (fx=" + std::to_string(fx) +
              ", fy=" + std::to_string(fy) + ")");
}

Pose6 Pose6::from_params(std::span<const double, 6> p) {
  Pose6 pose;
  pose.rotation = Vec3(p[0], p[1], p[2]);
  pose.translation = Vec3(p[3], p[4], p[5]);
  return pose;
}

std::array<double, 6> Pose6::params() const {
  return {rotation.x(), rotation.y(), rotation.z(),
          translation.x(), translation.y(), translation.z()};
}

Mat3 skew(const Vec3& v) {
  Mat3 s;
  // clang-format off
  s <<  0.0,   -v.z(),  v.y(),
        v.z(),  0.0,   -v.x(),
       -v.y(),  v.x(),  0.0;
  // clang-format on
  return s;
}

Mat3 so3_exp(const Vec3& omega) {
  const double theta = omega.norm();
  const auto [a, b] = rodrigues_coefficients(theta);
  const Mat3 k = skew(omega);
  return Mat3::Identity() + a * k + b * k * k;
}

std::array<Mat3, 3> so3_exp_derivatives(const Vec3& omega) {
  const double theta = omega.norm();
  const auto [a, b] = rodrigues_coefficients(theta);

  // (dA/dt) / t and (dB/dt) / t.
  double da, db;
  if (theta < kTaylorAngleDerivative) {
    const double t2 = theta * theta;
    da = -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0;
    db = -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0;
  } else {
    const double t2 = theta * theta;
    da = (theta * std::cos(theta) - std::sin(theta)) / (t2 * theta);
    db = (theta * std::sin(theta) - 2.0 * (1.0 - std::cos(theta))) / (t2 * t2);
  }

  const Mat3 k = skew(omega);
  const Mat3 k2 = k * k;
  std::array<Mat3, 3> out;
  for (int i = 0; i < 3; ++i) {
    const Mat3 e = skew(Vec3::Unit(i));
    out[i] = da * omega[i] * k + a * e + db * omega[i] * k2 + b * (e * k + k * e);
  }
  return out;
}

Vec3 so3_log(const Mat3& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  return aa.angle() * aa.axis();
}

double rotation_angle(const Mat3& rotation) {
  // atan2 of sine and cosine parts: arccos of the trace alone loses about
  // half the digits near zero.
  const double c = 0.5 * (rotation.trace() - 1.0);
  const Vec3 axis(rotation(2, 1) - rotation(1, 2), rotation(0, 2) - rotation(2, 0),
                  rotation(1, 0) - rotation(0, 1));
  return std::atan2(0.5 * axis.norm(), c);
}

Mat4 se3_exp(const Pose6& pose) {
  Mat4 t = Mat4::Identity();
  t.topLeftCorner<3, 3>() = so3_exp(pose.rotation);
  t.topRightCorner<3, 1>() = pose.translation;
  return t;
}

Pose6 se3_log(const Mat4& transform) {
  Pose6 pose;
  pose.rotation = so3_log(transform.topLeftCorner<3, 3>());
  pose.translation = transform.topRightCorner<3, 1>();
  return pose;
}

Pose6 inverse(const Pose6& pose) {
  const Mat3 r = so3_exp(pose.rotation);
  Pose6 inv;
  inv.rotation = -pose.rotation;
  inv.translation = -(r.transpose() * pose.translation);
  return inv;
}

Pose6 compose(const Pose6& a, const Pose6& b) {
  const Mat3 ra = so3_exp(a.rotation);
  Pose6 out;
  out.rotation = so3_log(ra * so3_exp(b.rotation));
  out.translation = ra * b.translation + a.translation;
  return out;
}

std::optional<Projection> project_pixel(PixelCoord p, double depth, const Pose6& pose,
                                        const CameraIntrinsics& intrinsics) {
  require(depth > 0.0, ErrorKind::kNonPositiveDepth,
          "project_pixel requires a positive depth, got " + std::to_string(depth));
  const Vec3 point = so3_exp(pose.rotation) * (depth * intrinsics.ray(p.u, p.v)) + pose.translation;
  const double z = point.z();
  if (!(z > kMinProjectedDepth)) return std::nullopt;
  return Projection{{intrinsics.fx * point.x() / z + intrinsics.cx,
                     intrinsics.fy * point.y() / z + intrinsics.cy},
                    z};
}

MotionJacobian MotionJacobian::forward(const Pose6& pose) {
  MotionJacobian m;
  m.rotation = so3_exp(pose.rotation);
  m.translation = pose.translation;
  const auto dr = so3_exp_derivatives(pose.rotation);
  for (int k = 0; k < 6; ++k) {
    m.d_rotation[k] = k < 3 ? dr[k] : Mat3(Mat3::Zero());
    m.d_translation[k] = k < 3 ? Vec3(Vec3::Zero()) : Vec3(Vec3::Unit(k - 3));
  }
  return m;
}

MotionJacobian MotionJacobian::inverse(const Pose6& pose) {
  const MotionJacobian fwd = forward(pose);
  MotionJacobian m;
  m.rotation = fwd.rotation.transpose();
  m.translation = -(m.rotation * fwd.translation);
  for (int k = 0; k < 6; ++k) {
    m.d_rotation[k] = fwd.d_rotation[k].transpose();
    m.d_translation[k] =
        -(m.d_rotation[k] * fwd.translation) - m.rotation * fwd.d_translation[k];
  }
  return m;
}

}  // namespace coprou
