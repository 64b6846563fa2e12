#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "coprou/field.hpp"
#include "coprou/geometry.hpp"
#include "coprou/losses.hpp"

namespace coprou {

/// Parameters of a synthetic two-view scene: a textured plane seen by a
/// pinhole camera before and after a small rigid motion.
struct SceneSpec {
  int width = 64;
  int height = 64;
  /// Rotation angle of the ground-truth motion; the axis is drawn from the seed.
  double rotation_deg = 0.8;
  /// Translation length as a fraction of mean_depth; the direction is drawn
  /// from the seed.
  double translation_fraction = 0.02;
  /// Depth of the plane along the principal ray.
  double mean_depth = 5.0;
  /// Depth gradient of the plane along the image y axis. Non-zero slant
  /// separates rotation from translation.
  double slant = 0.6;
  /// Nominal texture wavelength in pixels at mean_depth.
  double texture_wavelength_px = 8.0;
  int texture_components = 24;
  /// fx = fy = focal_scale * width.
  double focal_scale = 1.0;
};

struct SyntheticScene {
  CameraIntrinsics intrinsics;
  /// Target-to-reference motion.
  Pose6 true_pose;
  ScalarField depth_tgt;
  ScalarField depth_ref;
  ScalarField image_tgt;
  ScalarField image_ref;
  /// Pixels covered by an injected moving object in either frame.
  ValidityMask dynamic_mask_gt;
};

/// Deterministic in (seed, spec). The reference image is rendered from the
/// analytic surface texture; the target image is the reference inverse-warped
/// through the true pose and target depth, with the analytic texture filling
/// pixels that are not co-visible.
SyntheticScene generate_scene(std::uint64_t seed, const SceneSpec& spec);

/// A textured rectangle that moves by `motion` pixels between the target and
/// the reference frame while the depth maps stay unchanged.
struct DynamicObjectSpec {
  /// Top-left corner in the target frame.
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;
  std::uint64_t texture_seed = 0;
  /// Offset of the object in the reference frame, in pixels.
  std::array<double, 2> motion{0.0, 0.0};
};

SyntheticScene inject_dynamic_object(SyntheticScene scene, const DynamicObjectSpec& object);

/// A square object covering about `area_fraction` of the image, placed from
/// `seed` so that it stays inside both frames.
DynamicObjectSpec place_dynamic_object(const SyntheticScene& scene, double area_fraction,
                                       std::array<double, 2> motion, std::uint64_t seed);

/// generate_scene(seed, spec) plus, when dynamic_fraction > 0, an object of
/// that area moving object_motion_px pixels along x. Object placement and
/// texture are derived from `seed`.
SyntheticScene make_toy_scene(std::uint64_t seed, const SceneSpec& spec, double dynamic_fraction,
                              double object_motion_px);

/// Free parameters of the toy problem. Uncertainties are
/// sigma = floor + exp(clamp(log_sigma)).
struct OptimState {
  Pose6 pose;
  ScalarField log_sigma_tgt;
  ScalarField log_sigma_ref;
  /// Only used in joint-depth mode: depth = exp(log_depth).
  ScalarField log_depth_tgt;
  ScalarField log_depth_ref;
  int step = 0;
  std::vector<double> loss_history;
};

struct Schedule {
  int steps = 400;
  double lr_rotation = 2e-3;
  double lr_translation = 4e-3;
  double lr_log_sigma = 0.1;
  double lr_log_depth = 5e-3;
  /// Learning rates decay geometrically to this fraction at the last step.
  double final_lr_fraction = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Consecutive iterations with an empty auto-mask before giving up.
  int empty_mask_patience = 3;

  void validate() const;
};

struct OptimizeOptions {
  ObjectiveConfig objective;
  /// Also add the role-swapped pairing (reference as target, inverse pose).
  /// The scene holds a single reference frame, so the default is one pairing.
  bool bidirectional = false;
  /// Average instead of sum the two pairings.
  bool average_pairs = false;
  /// Optimize depth maps as well; otherwise depth stays at ground truth.
  bool joint_depth = false;
  double initial_sigma = 0.1;
  double log_sigma_min = -14.0;
  double log_sigma_max = 1.0;
  Schedule schedule;

  void validate() const;
};

/// Identity pose, uniform initial uncertainty, depth at ground truth.
OptimState initial_state(const SyntheticScene& scene, const OptimizeOptions& options);

ScalarField sigma_from_log(const ScalarField& log_sigma, const OptimizeOptions& options);

struct ObjectiveEvaluation {
  double loss = 0.0;
  std::array<double, 6> pose_gradient{};
  ScalarField log_sigma_tgt_gradient;
  ScalarField log_sigma_ref_gradient;
  ScalarField log_depth_tgt_gradient;
  ScalarField log_depth_ref_gradient;
  /// Breakdown of the target->reference pairing.
  LossBreakdown forward;
};

/// Summed (or averaged) total objective over the enabled pairings, with
/// gradients with respect to every free parameter of `state`.
ObjectiveEvaluation evaluate_objective(const SyntheticScene& scene, const OptimState& state,
                                       const OptimizeOptions& options, bool with_gradient);

struct PoseError {
  double rotation_deg = 0.0;
  /// |t_est - t_true| / |t_true|; absolute when the true translation is zero.
  double translation_relative = 0.0;
};

PoseError pose_error(const Pose6& estimate, const Pose6& truth);

struct SigmaStats {
  std::size_t count = 0;
  double median = 0.0;
  double mean = 0.0;
};

struct OptimReport {
  PoseError error;
  double final_loss = 0.0;
  std::vector<double> loss_history;
  /// Effective sigma of the forward pairing over valid pixels, split by the
  /// dynamic ground-truth mask.
  SigmaStats sigma_dynamic;
  SigmaStats sigma_static;
  /// Iterations whose gradient was taken without the auto-mask because it
  /// rejected every pixel.
  int relaxed_steps = 0;
  ScalarField sigma_eff;
  ScalarField residual;
};

struct OptimResult {
  OptimState state;
  OptimReport report;
};

/// Adam on pose and log-uncertainties (and log-depth in joint mode). Returns
/// the best evaluated iterate.
OptimResult optimize(const SyntheticScene& scene, OptimState init, const OptimizeOptions& options);

}  // namespace coprou
