#pragma once

#include <array>
#include <cstddef>

#include "coprou/field.hpp"
#include "coprou/geometry.hpp"
#include "coprou/photometric.hpp"
#include "coprou/uncertainty.hpp"
#include "coprou/warp.hpp"

namespace coprou {

struct LossWeights {
  double photometric = 1.0;
  double geometric = 0.5;
  double smoothness = 0.1;

  void validate() const;
};

/// A scalar loss and the per-pixel terms it aggregates.
struct LossTerm {
  double value = 0.0;
  ScalarField map;
};

/// Mean of r / sigma_eff + log(sigma_eff) over the masked pixels. Throws
/// EmptyValidSet when the mask is empty.
LossTerm photometric_loss(const ScalarField& residual, const ScalarField& sigma_eff,
                          const ValidityMask& mask);

/// Mean of |D_syn - D_proj| / (D_syn + D_proj) over the masked pixels.
LossTerm geometry_consistency_loss(const ScalarField& depth_syn, const ScalarField& depth_proj,
                                   const ValidityMask& mask);

/// Edge-aware smoothness, summed over all pixels:
///   (exp(-|dI/dx|) dD/dx + exp(-|dI/dy|) dD/dy)^2
/// with forward differences (zero on the last column / row) and the image
/// gradient averaged over channels.
LossTerm smoothness_loss(const ScalarField& depth, const ScalarField& image);

/// 1 where the synthesized image explains the target strictly better than the
/// unwarped reference does (channel-summed L1).
ValidityMask auto_mask(const ScalarField& image_tgt, const ScalarField& image_syn,
                       const ScalarField& image_ref);

/// The fields of one (target, reference) frame pair.
struct PairFields {
  const ScalarField& image_tgt;
  const ScalarField& image_ref;
  const ScalarField& depth_tgt;
  const ScalarField& depth_ref;
  const ScalarField& sigma_tgt;
  const ScalarField& sigma_ref;
};

struct ObjectiveConfig {
  LossWeights weights;
  UncertaintyMode mode = UncertaintyMode::kCombined;
  ResidualConfig residual;
  double sigma_floor = kDefaultSigmaFloor;
  /// Also add the smoothness of the reference depth against the reference image.
  bool smooth_reference = true;
  bool use_auto_mask = true;

  void validate() const;
};

/// Whether the pair is warped with se3_exp(pose) or its inverse. Gradients
/// are always taken with respect to `pose` itself.
enum class PoseDirection { kForward, kInverse };

struct LossBreakdown {
  double photometric = 0.0;
  double geometric = 0.0;
  double smoothness = 0.0;
  double total = 0.0;
  /// Pixels that are both validly projected and kept by the auto-mask.
  std::size_t valid_count = 0;

  ScalarField photometric_map;
  ScalarField geometric_map;
  ScalarField smoothness_map;
  ScalarField residual;
  ScalarField sigma_eff;
  SynthesizedViews synthesized;
  ValidityMask auto_mask;
  ValidityMask loss_mask;
};

/// d(total) with respect to the pose parameters and to every input
/// uncertainty and depth value.
struct ObjectiveGradient {
  std::array<double, 6> pose{};
  ScalarField sigma_tgt;
  ScalarField sigma_ref;
  ScalarField depth_tgt;
  ScalarField depth_ref;
};

/// total = w_p * L_P + w_g * L_Geo + w_s * L_S, where the photometric and
/// geometric means run over pixels in both the validity mask and the
/// auto-mask. When `gradient` is non-null it is filled by reverse-mode
/// differentiation of the same computation.
LossBreakdown total_objective(const PairFields& fields, const Pose6& pose,
                              const CameraIntrinsics& intrinsics, const ObjectiveConfig& config,
                              ObjectiveGradient* gradient = nullptr,
                              PoseDirection direction = PoseDirection::kForward);

}  // namespace coprou
