#include "coprou/warp.hpp"

#include <cmath>

#include "coprou/error.hpp"

namespace coprou {

namespace {

// Round-off from reprojection can land an on-grid border pixel a few ulps
// outside the image.
constexpr double kBorderSnap = 1e-9;

double snap_to_range(double value, double hi) {
  if (value < 0.0 && value > -kBorderSnap) return 0.0;
  if (value > hi && value < hi + kBorderSnap) return hi;
  return value;
}

}  // namespace

std::optional<BilinearStencil> bilinear_stencil(int width, int height, PixelCoord q) {
  q.u = snap_to_range(q.u, width - 1.0);
  q.v = snap_to_range(q.v, height - 1.0);
  // Negated comparisons also reject NaN.
  if (!(q.u >= 0.0 && q.u <= width - 1.0 && q.v >= 0.0 && q.v <= height - 1.0)) {
    return std::nullopt;
  }
  BilinearStencil s;
  s.x0 = std::min(static_cast<int>(std::floor(q.u)), std::max(width - 2, 0));
  s.y0 = std::min(static_cast<int>(std::floor(q.v)), std::max(height - 2, 0));
  s.x1 = std::min(s.x0 + 1, width - 1);
  s.y1 = std::min(s.y0 + 1, height - 1);
  s.fx = q.u - s.x0;
  s.fy = q.v - s.y0;
  return s;
}

double interpolate(const ScalarField& f, const BilinearStencil& s, int c) {
  const auto w = s.weights();
  return w[0] * f.at(s.x0, s.y0, c) + w[1] * f.at(s.x1, s.y0, c) +
         w[2] * f.at(s.x0, s.y1, c) + w[3] * f.at(s.x1, s.y1, c);
}

double interpolate_du(const ScalarField& f, const BilinearStencil& s, int c) {
  if (s.x1 == s.x0) return 0.0;
  return (1.0 - s.fy) * (f.at(s.x1, s.y0, c) - f.at(s.x0, s.y0, c)) +
         s.fy * (f.at(s.x1, s.y1, c) - f.at(s.x0, s.y1, c));
}

double interpolate_dv(const ScalarField& f, const BilinearStencil& s, int c) {
  if (s.y1 == s.y0) return 0.0;
  return (1.0 - s.fx) * (f.at(s.x0, s.y1, c) - f.at(s.x0, s.y0, c)) +
         s.fx * (f.at(s.x1, s.y1, c) - f.at(s.x1, s.y0, c));
}

void scatter(ScalarField& adjoint, const BilinearStencil& s, int c, double value) {
  const auto w = s.weights();
  adjoint.at(s.x0, s.y0, c) += w[0] * value;
  adjoint.at(s.x1, s.y0, c) += w[1] * value;
  adjoint.at(s.x0, s.y1, c) += w[2] * value;
  adjoint.at(s.x1, s.y1, c) += w[3] * value;
}

std::optional<BilinearSample> bilinear_sample(const ScalarField& f, PixelCoord q) {
  const auto s = bilinear_stencil(f.width(), f.height(), q);
  if (!s) return std::nullopt;
  BilinearSample out;
  out.value.resize(f.channels());
  out.d_du.resize(f.channels());
  out.d_dv.resize(f.channels());
  for (int c = 0; c < f.channels(); ++c) {
    out.value[c] = interpolate(f, *s, c);
    out.d_du[c] = interpolate_du(f, *s, c);
    out.d_dv[c] = interpolate_dv(f, *s, c);
  }
  return out;
}

std::vector<PixelWarp> compute_pixel_warps(const ScalarField& depth_tgt, const Mat3& rotation,
                                           const Vec3& translation,
                                           const CameraIntrinsics& intrinsics) {
  const int w = depth_tgt.width();
  const int h = depth_tgt.height();
  std::vector<PixelWarp> warps(static_cast<std::size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      PixelWarp& pw = warps[static_cast<std::size_t>(y) * w + x];
      const double depth = depth_tgt.at(x, y);
      require(depth > 0.0, ErrorKind::kNonPositiveDepth,
              "target depth must be strictly positive");
      pw.ray = intrinsics.ray(x, y);
      pw.point = rotation * (depth * pw.ray) + translation;
      pw.z = pw.point.z();
      pw.in_front = pw.z > kMinProjectedDepth;
      if (!pw.in_front) continue;
      pw.u = intrinsics.fx * pw.point.x() / pw.z + intrinsics.cx;
      pw.v = intrinsics.fy * pw.point.y() / pw.z + intrinsics.cy;
      if (const auto s = bilinear_stencil(w, h, {pw.u, pw.v})) {
        pw.stencil = *s;
        pw.valid = true;
      }
    }
  }
  return warps;
}

Mat3 projection_jacobian(const PixelWarp& warp, const CameraIntrinsics& intrinsics) {
  const double iz = 1.0 / warp.z;
  const Vec3& p = warp.point;
  Mat3 j;
  // clang-format off
  j << intrinsics.fx * iz, 0.0, -intrinsics.fx * p.x() * iz * iz,
       0.0, intrinsics.fy * iz, -intrinsics.fy * p.y() * iz * iz,
       0.0, 0.0, 1.0;
  // clang-format on
  return j;
}

namespace {

void check_synthesis_inputs(const ScalarField& image_ref, const ScalarField& depth_ref,
                            const ScalarField& sigma_ref, const ScalarField& depth_tgt) {
  require_same_grid(image_ref, depth_tgt, "synthesize_views(image_ref, depth_tgt)");
  require_same_grid(depth_ref, depth_tgt, "synthesize_views(depth_ref, depth_tgt)");
  require_same_grid(sigma_ref, depth_tgt, "synthesize_views(sigma_ref, depth_tgt)");
  require(depth_ref.channels() == 1 && sigma_ref.channels() == 1 && depth_tgt.channels() == 1,
          ErrorKind::kDimensionMismatch, "depth and sigma fields must have one channel");
}

}  // namespace

SynthesizedViews synthesize_views(const ScalarField& image_ref, const ScalarField& depth_ref,
                                  const ScalarField& sigma_ref, const ScalarField& depth_tgt,
                                  const MotionJacobian& motion,
                                  const CameraIntrinsics& intrinsics) {
  check_synthesis_inputs(image_ref, depth_ref, sigma_ref, depth_tgt);
  intrinsics.validate();
  const int w = depth_tgt.width();
  const int h = depth_tgt.height();
  const auto warps = compute_pixel_warps(depth_tgt, motion.rotation, motion.translation, intrinsics);

  SynthesizedViews out{ScalarField(w, h, image_ref.channels()), ScalarField(w, h),
                       ScalarField(w, h), ScalarField(w, h), ValidityMask(w, h)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const PixelWarp& pw = warps[static_cast<std::size_t>(y) * w + x];
      if (pw.in_front) out.projected_depth.at(x, y) = pw.z;
      if (!pw.valid) continue;
      out.mask.set(x, y, true);
      for (int c = 0; c < image_ref.channels(); ++c) {
        out.image.at(x, y, c) = interpolate(image_ref, pw.stencil, c);
      }
      out.depth.at(x, y) = interpolate(depth_ref, pw.stencil);
      out.sigma.at(x, y) = interpolate(sigma_ref, pw.stencil);
    }
  }
  return out;
}

SynthesizedViews synthesize_views(const ScalarField& image_ref, const ScalarField& depth_ref,
                                  const ScalarField& sigma_ref, const ScalarField& depth_tgt,
                                  const Pose6& pose, const CameraIntrinsics& intrinsics) {
  return synthesize_views(image_ref, depth_ref, sigma_ref, depth_tgt,
                          MotionJacobian::forward(pose), intrinsics);
}

SynthesisJacobian synthesis_pose_jacobian(const ScalarField& image_ref,
                                          const ScalarField& depth_ref,
                                          const ScalarField& sigma_ref,
                                          const ScalarField& depth_tgt, const Pose6& pose,
                                          const CameraIntrinsics& intrinsics) {
  check_synthesis_inputs(image_ref, depth_ref, sigma_ref, depth_tgt);
  intrinsics.validate();
  const int w = depth_tgt.width();
  const int h = depth_tgt.height();
  const int nc = image_ref.channels();
  const MotionJacobian motion = MotionJacobian::forward(pose);
  const auto warps = compute_pixel_warps(depth_tgt, motion.rotation, motion.translation, intrinsics);

  SynthesisJacobian out{ScalarField(w, h, nc * 6), ScalarField(w, h, 6), ScalarField(w, h, 6),
                        ScalarField(w, h, 6)};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const PixelWarp& pw = warps[static_cast<std::size_t>(y) * w + x];
      if (!pw.valid) continue;
      const Mat3 jp = projection_jacobian(pw, intrinsics);
      const Vec3 camera_point = pw.ray * depth_tgt.at(x, y);
      for (int k = 0; k < 6; ++k) {
        const Vec3 dpoint = motion.d_rotation[k] * camera_point + motion.d_translation[k];
        const Vec3 duvz = jp * dpoint;
        for (int c = 0; c < nc; ++c) {
          out.image.at(x, y, c * 6 + k) = interpolate_du(image_ref, pw.stencil, c) * duvz[0] +
                                          interpolate_dv(image_ref, pw.stencil, c) * duvz[1];
        }
        out.depth.at(x, y, k) = interpolate_du(depth_ref, pw.stencil) * duvz[0] +
                                interpolate_dv(depth_ref, pw.stencil) * duvz[1];
        out.sigma.at(x, y, k) = interpolate_du(sigma_ref, pw.stencil) * duvz[0] +
                                interpolate_dv(sigma_ref, pw.stencil) * duvz[1];
        out.projected_depth.at(x, y, k) = duvz[2];
      }
    }
  }
  return out;
}

}  // namespace coprou
