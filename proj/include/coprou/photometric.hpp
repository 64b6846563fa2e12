#pragma once

#include "coprou/field.hpp"

namespace coprou {

/// Weights of the SSIM + L1 photometric residual.
struct ResidualConfig {
  double alpha = 0.85;
  double c1 = 0.0009;
  double c2 = 0.0001;
  /// Side of the square box window used for local statistics. Odd.
  int window = 3;

  void validate() const;
};

/// Per-pixel SSIM with box-window statistics. Windows are clipped to the grid
/// and, when `support` is given, to the pixels it marks; pixels outside the
/// support report 1. Multi-channel inputs are averaged after per-channel SSIM,
/// so the result always has one channel.
ScalarField ssim_map(const ScalarField& a, const ScalarField& b, const ResidualConfig& cfg,
                     const ValidityMask* support = nullptr);

/// r = alpha / 2 * (1 - SSIM) + (1 - alpha) * |I_tgt - I_syn|, with the L1 term
/// averaged over channels. Pixels outside `support` get r = 0.
ScalarField residual_map(const ScalarField& image_tgt, const ScalarField& image_syn,
                         const ResidualConfig& cfg, const ValidityMask* support = nullptr);

/// Vector-Jacobian product of residual_map with respect to image_syn: given
/// dL/dr per pixel, returns dL/d(image_syn) with the channels of image_syn.
ScalarField residual_map_vjp(const ScalarField& image_tgt, const ScalarField& image_syn,
                             const ResidualConfig& cfg, const ValidityMask* support,
                             const ScalarField& residual_adjoint);

}  // namespace coprou
