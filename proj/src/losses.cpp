#include "coprou/losses.hpp"

#include <cmath>
#include <string>

#include "coprou/error.hpp"

namespace coprou {

namespace {

void require_mask_matches(const ValidityMask& mask, const ScalarField& f, const char* what) {
  require(mask.matches(f), ErrorKind::kDimensionMismatch,
          std::string(what) + ": mask dimensions differ");
}

struct SmoothnessPixel {
  double weight_x = 0.0;
  double weight_y = 0.0;
  double grad_x = 0.0;
  double grad_y = 0.0;
  bool has_x = false;
  bool has_y = false;

  double inner() const { return weight_x * grad_x + weight_y * grad_y; }
};

SmoothnessPixel smoothness_pixel(const ScalarField& depth, const ScalarField& image, int x, int y) {
  SmoothnessPixel s;
  const int nc = image.channels();
  if (x + 1 < depth.width()) {
    double g = 0.0;
    for (int c = 0; c < nc; ++c) g += std::abs(image.at(x + 1, y, c) - image.at(x, y, c));
    s.has_x = true;
    s.weight_x = std::exp(-g / nc);
    s.grad_x = depth.at(x + 1, y) - depth.at(x, y);
  }
  if (y + 1 < depth.height()) {
    double g = 0.0;
    for (int c = 0; c < nc; ++c) g += std::abs(image.at(x, y + 1, c) - image.at(x, y, c));
    s.has_y = true;
    s.weight_y = std::exp(-g / nc);
    s.grad_y = depth.at(x, y + 1) - depth.at(x, y);
  }
  return s;
}

// Adds scale * d(smoothness_loss)/d(depth) to `out`.
void smoothness_depth_gradient(const ScalarField& depth, const ScalarField& image, double scale,
                               ScalarField& out) {
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const SmoothnessPixel s = smoothness_pixel(depth, image, x, y);
      const double g = 2.0 * s.inner() * scale;
      if (s.has_x) {
        out.at(x + 1, y) += g * s.weight_x;
        out.at(x, y) -= g * s.weight_x;
      }
      if (s.has_y) {
        out.at(x, y + 1) += g * s.weight_y;
        out.at(x, y) -= g * s.weight_y;
      }
    }
  }
}

}  // namespace

void LossWeights::validate() const {
  require(photometric >= 0.0 && geometric >= 0.0 && smoothness >= 0.0,
          ErrorKind::kInvalidArgument, "loss weights must be nonnegative");
}

void ObjectiveConfig::validate() const {
  weights.validate();
  residual.validate();
  require(sigma_floor > 0.0, ErrorKind::kInvalidArgument, "sigma floor must be positive");
}

LossTerm photometric_loss(const ScalarField& residual, const ScalarField& sigma_eff,
                          const ValidityMask& mask) {
  require_same_shape(residual, sigma_eff, "photometric_loss");
  require_mask_matches(mask, residual, "photometric_loss");
  LossTerm out{0.0, ScalarField(residual.width(), residual.height())};
  std::size_t n = 0;
  double sum = 0.0;
  for (int y = 0; y < residual.height(); ++y) {
    for (int x = 0; x < residual.width(); ++x) {
      if (!mask.at(x, y)) continue;
      const double s = sigma_eff.at(x, y);
      require(s > 0.0, ErrorKind::kNonPositiveSigma, "effective sigma must be positive");
      const double term = residual.at(x, y) / s + std::log(s);
      out.map.at(x, y) = term;
      sum += term;
      ++n;
    }
  }
  require(n > 0, ErrorKind::kEmptyValidSet, "photometric_loss: no valid pixel");
  out.value = sum / static_cast<double>(n);
  return out;
}

LossTerm geometry_consistency_loss(const ScalarField& depth_syn, const ScalarField& depth_proj,
                                   const ValidityMask& mask) {
  require_same_shape(depth_syn, depth_proj, "geometry_consistency_loss");
  require_mask_matches(mask, depth_syn, "geometry_consistency_loss");
  LossTerm out{0.0, ScalarField(depth_syn.width(), depth_syn.height())};
  std::size_t n = 0;
  double sum = 0.0;
  for (int y = 0; y < depth_syn.height(); ++y) {
    for (int x = 0; x < depth_syn.width(); ++x) {
      if (!mask.at(x, y)) continue;
      const double a = depth_syn.at(x, y);
      const double b = depth_proj.at(x, y);
      require(a > 0.0 && b > 0.0, ErrorKind::kNonPositiveDepth,
              "geometry_consistency_loss: depths must be positive on masked pixels");
      const double term = std::abs(a - b) / (a + b);
      out.map.at(x, y) = term;
      sum += term;
      ++n;
    }
  }
  require(n > 0, ErrorKind::kEmptyValidSet, "geometry_consistency_loss: no valid pixel");
  out.value = sum / static_cast<double>(n);
  return out;
}

LossTerm smoothness_loss(const ScalarField& depth, const ScalarField& image) {
  require_same_grid(depth, image, "smoothness_loss");
  require(depth.channels() == 1, ErrorKind::kDimensionMismatch,
          "smoothness_loss expects a single-channel depth");
  LossTerm out{0.0, ScalarField(depth.width(), depth.height())};
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      const double inner = smoothness_pixel(depth, image, x, y).inner();
      out.map.at(x, y) = inner * inner;
      out.value += inner * inner;
    }
  }
  return out;
}

ValidityMask auto_mask(const ScalarField& image_tgt, const ScalarField& image_syn,
                       const ScalarField& image_ref) {
  require_same_shape(image_tgt, image_syn, "auto_mask(tgt, syn)");
  require_same_shape(image_tgt, image_ref, "auto_mask(tgt, ref)");
  ValidityMask mask(image_tgt.width(), image_tgt.height());
  for (int y = 0; y < image_tgt.height(); ++y) {
    for (int x = 0; x < image_tgt.width(); ++x) {
      double warped = 0.0, identity = 0.0;
      for (int c = 0; c < image_tgt.channels(); ++c) {
        warped += std::abs(image_tgt.at(x, y, c) - image_syn.at(x, y, c));
        identity += std::abs(image_tgt.at(x, y, c) - image_ref.at(x, y, c));
      }
      mask.set(x, y, warped < identity);
    }
  }
  return mask;
}

LossBreakdown total_objective(const PairFields& f, const Pose6& pose,
                              const CameraIntrinsics& intrinsics, const ObjectiveConfig& config,
                              ObjectiveGradient* gradient, PoseDirection direction) {
  config.validate();
  intrinsics.validate();
  require_same_shape(f.image_tgt, f.image_ref, "total_objective(images)");
  require_same_grid(f.image_tgt, f.depth_tgt, "total_objective(depth_tgt)");
  require_same_shape(f.depth_tgt, f.sigma_tgt, "total_objective(sigma_tgt)");

  const MotionJacobian motion = direction == PoseDirection::kForward
                                    ? MotionJacobian::forward(pose)
                                    : MotionJacobian::inverse(pose);

  LossBreakdown out;
  out.synthesized =
      synthesize_views(f.image_ref, f.depth_ref, f.sigma_ref, f.depth_tgt, motion, intrinsics);
  const SynthesizedViews& syn = out.synthesized;
  const ValidityMask& valid = syn.mask;

  out.residual = residual_map(f.image_tgt, syn.image, config.residual, &valid);
  out.sigma_eff = effective_sigma(f.sigma_tgt, syn.sigma, config.mode, config.sigma_floor, &valid);
  out.auto_mask = auto_mask(f.image_tgt, syn.image, f.image_ref);
  out.loss_mask = config.use_auto_mask ? (valid & out.auto_mask) : valid;
  out.valid_count = out.loss_mask.count();

  LossTerm photo = photometric_loss(out.residual, out.sigma_eff, out.loss_mask);
  LossTerm geo = geometry_consistency_loss(syn.depth, syn.projected_depth, out.loss_mask);
  LossTerm smooth = smoothness_loss(f.depth_tgt, f.image_tgt);
  if (config.smooth_reference) {
    const LossTerm ref_smooth = smoothness_loss(f.depth_ref, f.image_ref);
    smooth.value += ref_smooth.value;
    auto dst = smooth.map.data();
    auto src = ref_smooth.map.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
  }

  const LossWeights& w = config.weights;
  out.photometric = photo.value;
  out.geometric = geo.value;
  out.smoothness = smooth.value;
  out.total = w.photometric * photo.value + w.geometric * geo.value + w.smoothness * smooth.value;
  out.photometric_map = std::move(photo.map);
  out.geometric_map = std::move(geo.map);
  out.smoothness_map = std::move(smooth.map);
  if (gradient == nullptr) return out;

  // Reverse pass.
  const int width = f.depth_tgt.width();
  const int height = f.depth_tgt.height();
  const double inv_n = 1.0 / static_cast<double>(out.valid_count);
  ObjectiveGradient& g = *gradient;
  g.pose.fill(0.0);
  g.sigma_tgt = ScalarField(width, height);
  g.sigma_ref = ScalarField(width, height);
  g.depth_tgt = ScalarField(width, height);
  g.depth_ref = ScalarField(width, height);

  ScalarField residual_adj(width, height);
  ScalarField sigma_syn_adj(width, height);
  ScalarField depth_syn_adj(width, height);
  ScalarField proj_depth_adj(width, height);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      if (!out.loss_mask.at(x, y)) continue;
      const double r = out.residual.at(x, y);
      const double sigma = out.sigma_eff.at(x, y);
      residual_adj.at(x, y) = w.photometric * inv_n / sigma;
      const double sigma_adj = w.photometric * inv_n * (1.0 / sigma - r / (sigma * sigma));
      const double st = f.sigma_tgt.at(x, y);
      if (config.mode == UncertaintyMode::kCombined) {
        const double ss = syn.sigma.at(x, y);
        const double raw = std::hypot(st, ss);
        if (raw > config.sigma_floor) {
          g.sigma_tgt.at(x, y) += sigma_adj * st / raw;
          sigma_syn_adj.at(x, y) = sigma_adj * ss / raw;
        }
      } else if (st > config.sigma_floor) {
        g.sigma_tgt.at(x, y) += sigma_adj;
      }

      const double a = syn.depth.at(x, y);
      const double b = syn.projected_depth.at(x, y);
      const double sum = a + b;
      const double diff = a - b;
      const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
      const double ratio = std::abs(diff) / (sum * sum);
      depth_syn_adj.at(x, y) = w.geometric * inv_n * (sign / sum - ratio);
      proj_depth_adj.at(x, y) = w.geometric * inv_n * (-sign / sum - ratio);
    }
  }

  const ScalarField image_syn_adj =
      residual_map_vjp(f.image_tgt, syn.image, config.residual, &valid, residual_adj);

  const auto warps =
      compute_pixel_warps(f.depth_tgt, motion.rotation, motion.translation, intrinsics);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const PixelWarp& pw = warps[static_cast<std::size_t>(y) * width + x];
      if (!pw.valid) continue;
      const BilinearStencil& st = pw.stencil;
      double du = 0.0, dv = 0.0;
      for (int c = 0; c < f.image_ref.channels(); ++c) {
        const double gi = image_syn_adj.at(x, y, c);
        if (gi == 0.0) continue;
        du += gi * interpolate_du(f.image_ref, st, c);
        dv += gi * interpolate_dv(f.image_ref, st, c);
      }
      const double gs = sigma_syn_adj.at(x, y);
      const double gd = depth_syn_adj.at(x, y);
      du += gs * interpolate_du(f.sigma_ref, st) + gd * interpolate_du(f.depth_ref, st);
      dv += gs * interpolate_dv(f.sigma_ref, st) + gd * interpolate_dv(f.depth_ref, st);
      if (gs != 0.0) scatter(g.sigma_ref, st, 0, gs);
      if (gd != 0.0) scatter(g.depth_ref, st, 0, gd);

      const Vec3 uvz_adj(du, dv, proj_depth_adj.at(x, y));
      if (uvz_adj.isZero(0.0)) continue;
      const Vec3 point_adj = projection_jacobian(pw, intrinsics).transpose() * uvz_adj;
      const Vec3 camera_point = f.depth_tgt.at(x, y) * pw.ray;
      for (int k = 0; k < 6; ++k) {
        g.pose[k] += point_adj.dot(motion.d_rotation[k] * camera_point + motion.d_translation[k]);
      }
      g.depth_tgt.at(x, y) += point_adj.dot(motion.rotation * pw.ray);
    }
  }

  smoothness_depth_gradient(f.depth_tgt, f.image_tgt, w.smoothness, g.depth_tgt);
  if (config.smooth_reference) {
    smoothness_depth_gradient(f.depth_ref, f.image_ref, w.smoothness, g.depth_ref);
  }
  return out;
}

}  // namespace coprou
