#pragma once

#include <array>
#include <optional>
#include <span>

#include <Eigen/Core>

namespace coprou {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

/// Pinhole intrinsics. Pixel centers sit at integer coordinates.
struct CameraIntrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  Mat3 matrix() const;
  Mat3 inverse_matrix() const;
  /// Back-projects a pixel to the ray with unit z.
  Vec3 ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }
  void validate() const;
};

/// Minimal rigid-motion parameters: axis-angle rotation (radians) followed by
/// a translation. The matrix form is [exp(rotation) | translation].
struct Pose6 {
  Vec3 rotation = Vec3::Zero();
  Vec3 translation = Vec3::Zero();

  static Pose6 identity() { return {}; }
  static Pose6 from_params(std::span<const double, 6> p);
  std::array<double, 6> params() const;
};

struct PixelCoord {
  double u = 0.0;
  double v = 0.0;
};

/// Points closer than this to the camera plane are treated as not visible.
inline constexpr double kMinProjectedDepth = 1e-6;

Mat3 skew(const Vec3& v);

/// Rodrigues formula, with a Taylor expansion below a rotation angle of 1e-6.
Mat3 so3_exp(const Vec3& omega);

/// Partial derivatives of so3_exp(omega) with respect to omega[0..2].
std::array<Mat3, 3> so3_exp_derivatives(const Vec3& omega);

Vec3 so3_log(const Mat3& rotation);

/// Rotation angle in [0, pi]. Equal to arccos((trace - 1) / 2), but accurate
/// for tiny angles.
double rotation_angle(const Mat3& rotation);

Mat4 se3_exp(const Pose6& pose);
Pose6 se3_log(const Mat4& transform);
Pose6 inverse(const Pose6& pose);
/// Parameters of se3_exp(a) * se3_exp(b).
Pose6 compose(const Pose6& a, const Pose6& b);

struct Projection {
  PixelCoord pixel;
  /// z of the transformed point before dehomogenization.
  double depth = 0.0;
};

/// Reprojects pixel p with the given depth through K * T * D * K^-1 * p.
/// Returns nullopt when the transformed point lies at or behind
/// kMinProjectedDepth; such pixels cannot be synthesized.
std::optional<Projection> project_pixel(PixelCoord p, double depth, const Pose6& pose,
                                        const CameraIntrinsics& intrinsics);

/// A rigid motion together with its derivatives with respect to the six pose
/// parameters it was built from.
struct MotionJacobian {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
  std::array<Mat3, 6> d_rotation{};
  std::array<Vec3, 6> d_translation{};

  /// se3_exp(pose), differentiated with respect to pose.
  static MotionJacobian forward(const Pose6& pose);
  /// se3_exp(pose)^-1, still differentiated with respect to pose.
  static MotionJacobian inverse(const Pose6& pose);
};

}  // namespace coprou
