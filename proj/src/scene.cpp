#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "coprou/error.hpp"
#include "coprou/synthopt.hpp"
#include "coprou/warp.hpp"

namespace coprou {

namespace {

constexpr double kMinSceneDepth = 0.1;
constexpr double kMaxSceneDepth = 100.0;

Vec3 random_unit(std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(n(rng), n(rng), n(rng));
  } while (v.norm() < 1e-6);
  return v.normalized();
}

/// Smooth band-limited texture: squashed sum of random plane waves.
class WaveTexture {
 public:
  WaveTexture(std::mt19937_64& rng, int components, double wavelength, int dims) {
    std::uniform_real_distribution<double> scale(0.7, 2.0);
    std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int i = 0; i < components; ++i) {
      Vec3 dir(n(rng), n(rng), dims == 3 ? n(rng) : 0.0);
      if (dir.norm() < 1e-9) dir = Vec3::UnitX();
      const double k = 2.0 * std::numbers::pi / (wavelength * scale(rng));
      waves_.push_back({dir.normalized() * k, phase(rng)});
    }
    amplitude_ = 1.0 / std::sqrt(static_cast<double>(std::max(components, 1)));
  }

  double operator()(const Vec3& p) const {
    double s = 0.0;
    for (const Wave& w : waves_) s += std::sin(w.k.dot(p) + w.phase);
    return 0.5 + 0.4 * std::tanh(1.2 * amplitude_ * s);
  }

 private:
  struct Wave {
    Vec3 k;
    double phase;
  };
  std::vector<Wave> waves_;
  double amplitude_ = 1.0;
};

/// Plane n . X = d in target-camera coordinates.
struct Plane {
  Vec3 normal;
  double offset;
};

struct SurfaceHit {
  double depth;  // along a ray with unit z in the viewing camera
  Vec3 point_tgt;
};

// Intersects the ray through (u, v) of the camera related to the target frame
// by X_cam = R * X_tgt + t.
std::optional<SurfaceHit> intersect(const Plane& plane, const CameraIntrinsics& k, const Mat3& r,
                                    const Vec3& t, double u, double v) {
  const Vec3 origin = -(r.transpose() * t);
  const Vec3 dir = r.transpose() * k.ray(u, v);
  const double denom = plane.normal.dot(dir);
  if (std::abs(denom) < 1e-12) return std::nullopt;
  const double s = (plane.offset - plane.normal.dot(origin)) / denom;
  if (!(s > 0.0)) return std::nullopt;
  return SurfaceHit{s, origin + s * dir};
}

}  // namespace

SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  require(spec.width >= 16 && spec.height >= 16, ErrorKind::kDegenerateSpec,
          "scene must be at least 16x16");
  require(spec.mean_depth >= kMinSceneDepth && spec.mean_depth <= kMaxSceneDepth,
          ErrorKind::kDegenerateSpec, "mean depth outside [0.1, 100]");
  require(spec.rotation_deg >= 0.0 && spec.translation_fraction >= 0.0 &&
              spec.texture_wavelength_px > 0.0 && spec.focal_scale > 0.0 &&
              spec.texture_components > 0,
          ErrorKind::kDegenerateSpec, "scene parameters must be nonnegative");

  std::mt19937_64 rng(seed);
  SyntheticScene scene;
  const int w = spec.width;
  const int h = spec.height;
  const double focal = spec.focal_scale * w;
  scene.intrinsics = {focal, focal, 0.5 * (w - 1), 0.5 * (h - 1)};

  scene.true_pose.rotation = random_unit(rng) * (spec.rotation_deg * std::numbers::pi / 180.0);
  scene.true_pose.translation = random_unit(rng) * (spec.translation_fraction * spec.mean_depth);

  std::uniform_real_distribution<double> tilt(-0.25, 0.25);
  const Plane plane{Vec3(-tilt(rng), -spec.slant, 1.0), spec.mean_depth};
  const WaveTexture texture(rng, spec.texture_components,
                            spec.texture_wavelength_px * spec.mean_depth / focal, 3);

  const Mat3 r_ref = so3_exp(scene.true_pose.rotation);
  const Vec3 t_ref = scene.true_pose.translation;

  scene.depth_tgt = ScalarField(w, h);
  scene.depth_ref = ScalarField(w, h);
  scene.image_ref = ScalarField(w, h);
  ScalarField analytic_tgt(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto hit_tgt = intersect(plane, scene.intrinsics, Mat3::Identity(), Vec3::Zero(), x, y);
      const auto hit_ref = intersect(plane, scene.intrinsics, r_ref, t_ref, x, y);
      require(hit_tgt && hit_ref, ErrorKind::kDegenerateSpec, "camera ray misses the surface");
      require(hit_tgt->depth >= kMinSceneDepth && hit_tgt->depth <= kMaxSceneDepth &&
                  hit_ref->depth >= kMinSceneDepth && hit_ref->depth <= kMaxSceneDepth,
              ErrorKind::kDegenerateSpec, "surface depth leaves [0.1, 100]");
      scene.depth_tgt.at(x, y) = hit_tgt->depth;
      scene.depth_ref.at(x, y) = hit_ref->depth;
      scene.image_ref.at(x, y) = texture(hit_ref->point_tgt);
      analytic_tgt.at(x, y) = texture(hit_tgt->point_tgt);
    }
  }

  const ScalarField unit_sigma(w, h, 1, 1.0);
  const SynthesizedViews warped = synthesize_views(scene.image_ref, scene.depth_ref, unit_sigma,
                                                   scene.depth_tgt, scene.true_pose,
                                                   scene.intrinsics);
  require(warped.mask.count() * 2 >= static_cast<std::size_t>(w) * h, ErrorKind::kDegenerateSpec,
          "motion too large: fewer than half of the pixels are co-visible");
  scene.image_tgt = analytic_tgt;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (warped.mask.at(x, y)) scene.image_tgt.at(x, y) = warped.image.at(x, y);
    }
  }
  scene.dynamic_mask_gt = ValidityMask(w, h);
  return scene;
}

SyntheticScene inject_dynamic_object(SyntheticScene scene, const DynamicObjectSpec& object) {
  const int w = scene.image_tgt.width();
  const int h = scene.image_tgt.height();
  const double dx = object.motion[0];
  const double dy = object.motion[1];
  const auto fits = [&](double x0, double y0) {
    return x0 >= 0.0 && y0 >= 0.0 && x0 + object.width <= w && y0 + object.height <= h;
  };
  require(object.width > 0 && object.height > 0, ErrorKind::kOutOfBounds,
          "object must have a positive size");
  require(fits(object.x, object.y) && fits(object.x + dx, object.y + dy), ErrorKind::kOutOfBounds,
          "dynamic object leaves the image in one of the frames");

  std::mt19937_64 rng(object.texture_seed);
  const WaveTexture texture(rng, 12, 6.0, 2);
  const auto inside = [&](double px, double py, double x0, double y0) {
    return px >= x0 && px < x0 + object.width && py >= y0 && py < y0 + object.height;
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool in_tgt = inside(x, y, object.x, object.y);
      const bool in_ref = inside(x, y, object.x + dx, object.y + dy);
      for (int c = 0; c < scene.image_tgt.channels(); ++c) {
        if (in_tgt) scene.image_tgt.at(x, y, c) = texture(Vec3(x - object.x, y - object.y, 0.0));
        if (in_ref) {
          scene.image_ref.at(x, y, c) =
              texture(Vec3(x - object.x - dx, y - object.y - dy, 0.0));
        }
      }
      if (in_tgt || in_ref) scene.dynamic_mask_gt.set(x, y, true);
    }
  }
  return scene;
}

DynamicObjectSpec place_dynamic_object(const SyntheticScene& scene, double area_fraction,
                                       std::array<double, 2> motion, std::uint64_t seed) {
  const int w = scene.image_tgt.width();
  const int h = scene.image_tgt.height();
  require(area_fraction > 0.0 && area_fraction < 1.0, ErrorKind::kInvalidArgument,
          "object area fraction must lie in (0, 1)");
  const int side = std::max(1, static_cast<int>(std::lround(std::sqrt(area_fraction * w * h))));
  const int span_x = w - side - static_cast<int>(std::ceil(std::abs(motion[0])));
  const int span_y = h - side - static_cast<int>(std::ceil(std::abs(motion[1])));
  require(span_x >= 0 && span_y >= 0, ErrorKind::kOutOfBounds,
          "object and its motion do not fit in the image");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> px(0, span_x);
  std::uniform_int_distribution<int> py(0, span_y);
  DynamicObjectSpec spec;
  spec.width = side;
  spec.height = side;
  spec.x = px(rng) + (motion[0] < 0.0 ? static_cast<int>(std::ceil(-motion[0])) : 0);
  spec.y = py(rng) + (motion[1] < 0.0 ? static_cast<int>(std::ceil(-motion[1])) : 0);
  spec.texture_seed = rng();
  spec.motion = motion;
  return spec;
}

SyntheticScene make_toy_scene(std::uint64_t seed, const SceneSpec& spec, double dynamic_fraction,
                              double object_motion_px) {
  require(dynamic_fraction >= 0.0 && dynamic_fraction < 1.0, ErrorKind::kInvalidArgument,
          "dynamic fraction must lie in [0, 1)");
  SyntheticScene scene = generate_scene(seed, spec);
  if (dynamic_fraction == 0.0) return scene;
  const DynamicObjectSpec object = place_dynamic_object(
      scene, dynamic_fraction, {object_motion_px, 0.0}, seed ^ 0x9e3779b97f4a7c15ULL);
  return inject_dynamic_object(std::move(scene), object);
}

}  // namespace coprou
