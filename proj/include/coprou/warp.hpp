#pragma once

#include <array>
#include <optional>
#include <vector>

#include "coprou/field.hpp"
#include "coprou/geometry.hpp"

namespace coprou {

/// The four grid neighbours of a continuous coordinate and its fractional
/// offsets inside that cell. Weights are tl, tr, bl, br.
struct BilinearStencil {
  int x0 = 0;
  int y0 = 0;
  int x1 = 0;
  int y1 = 0;
  double fx = 0.0;
  double fy = 0.0;

  std::array<double, 4> weights() const {
    return {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
  }
};

/// nullopt when any neighbour would fall outside a width x height grid.
std::optional<BilinearStencil> bilinear_stencil(int width, int height, PixelCoord q);

double interpolate(const ScalarField& f, const BilinearStencil& s, int c = 0);
/// Partial derivatives of the interpolant with respect to u and v.
double interpolate_du(const ScalarField& f, const BilinearStencil& s, int c = 0);
double interpolate_dv(const ScalarField& f, const BilinearStencil& s, int c = 0);
/// Adjoint of interpolate: adds value * w^i to the four neighbours.
void scatter(ScalarField& adjoint, const BilinearStencil& s, int c, double value);

struct BilinearSample {
  std::vector<double> value;
  std::vector<double> d_du;
  std::vector<double> d_dv;
};

/// Per-channel bilinear interpolation at q. nullopt is the out-of-bounds
/// flag: the pixel that asked for this sample must leave the valid set.
std::optional<BilinearSample> bilinear_sample(const ScalarField& f, PixelCoord q);

/// Reprojection of one target pixel into the reference view.
struct PixelWarp {
  bool in_front = false;
  bool valid = false;
  double u = 0.0;
  double v = 0.0;
  /// Projected depth, z before dehomogenization.
  double z = 0.0;
  Vec3 ray = Vec3::Zero();
  /// Transformed 3D point in the reference camera frame.
  Vec3 point = Vec3::Zero();
  BilinearStencil stencil;
};

/// Reprojects every pixel of a target depth map (row-major order).
std::vector<PixelWarp> compute_pixel_warps(const ScalarField& depth_tgt, const Mat3& rotation,
                                           const Vec3& translation,
                                           const CameraIntrinsics& intrinsics);

/// d(u, v, z) / d(point) for a warped pixel that lies in front of the camera.
Mat3 projection_jacobian(const PixelWarp& warp, const CameraIntrinsics& intrinsics);

struct SynthesizedViews {
  ScalarField image;
  ScalarField depth;
  ScalarField sigma;
  /// Depth of each target point seen from the reference camera.
  ScalarField projected_depth;
  ValidityMask mask;
};

/// Inverse-warps the reference image, depth and uncertainty into the target
/// view. Pixels outside the mask hold 0 in image, depth and sigma.
SynthesizedViews synthesize_views(const ScalarField& image_ref, const ScalarField& depth_ref,
                                  const ScalarField& sigma_ref, const ScalarField& depth_tgt,
                                  const Pose6& pose, const CameraIntrinsics& intrinsics);

SynthesizedViews synthesize_views(const ScalarField& image_ref, const ScalarField& depth_ref,
                                  const ScalarField& sigma_ref, const ScalarField& depth_tgt,
                                  const MotionJacobian& motion,
                                  const CameraIntrinsics& intrinsics);

/// Derivatives of synthesize_views outputs with respect to the six pose
/// parameters. Channel c * 6 + k holds d(output channel c) / d(pose[k]); zero
/// outside the validity mask.
struct SynthesisJacobian {
  ScalarField image;
  ScalarField depth;
  ScalarField sigma;
  ScalarField projected_depth;
};

SynthesisJacobian synthesis_pose_jacobian(const ScalarField& image_ref,
                                          const ScalarField& depth_ref,
                                          const ScalarField& sigma_ref,
                                          const ScalarField& depth_tgt, const Pose6& pose,
                                          const CameraIntrinsics& intrinsics);

}  // namespace coprou
