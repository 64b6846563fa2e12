#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "coprou/field.hpp"

namespace coprou {

enum class UncertaintyMode {
  /// sigma_eff = sqrt(sigma_tgt^2 + sigma_syn^2).
  kCombined,
  /// sigma_eff = sigma_tgt; the synthesized uncertainty is ignored.
  kSingleTarget,
};

inline constexpr double kDefaultSigmaFloor = 1e-3;

/// Pointwise effective scale, clamped below at `floor`.
double effective_sigma(double sigma_tgt, double sigma_syn, UncertaintyMode mode, double floor);

/// Effective scale map. Where `support` is given, pixels outside it use the
/// target uncertainty alone and their synthesized value is not inspected.
ScalarField effective_sigma(const ScalarField& sigma_tgt, const ScalarField& sigma_syn,
                            UncertaintyMode mode, double floor = kDefaultSigmaFloor,
                            const ValidityMask* support = nullptr);

/// Laplace negative log-likelihood without its constant: r / sigma + log(sigma).
ScalarField laplace_nll_map(const ScalarField& residual, const ScalarField& sigma_eff);

/// Two independent Laplace variables A ~ L(mu1, sigma1), B ~ L(mu2, sigma2);
/// the functions below describe R = A - B.
struct LaplacePair {
  double mu1 = 0.0;
  double mu2 = 0.0;
  double sigma1 = 1.0;
  double sigma2 = 1.0;
};

double laplace_density(double x, double mu, double sigma);

/// Closed-form density of R. Uses the sigma1 == sigma2 limit when the scales
/// agree to 1e-8 relative.
double laplace_diff_density(const LaplacePair& pair, double r);

struct NumericMoments {
  double mass = 0.0;
  double mean = 0.0;
  double variance = 0.0;
};

struct LaplaceDiffMoments {
  double mean = 0.0;
  double variance = 0.0;
  /// Quadrature of laplace_diff_density; filled only in check mode.
  std::optional<NumericMoments> numeric;
};

LaplaceDiffMoments laplace_diff_moments(const LaplacePair& pair, bool check = false);

/// Adaptive Simpson quadrature with an absolute tolerance.
double integrate_adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                                  double abs_tol = 1e-9, int max_depth = 60);

struct OracleRow {
  double sigma1 = 0.0;
  double sigma2 = 0.0;
  double delta = 0.0;
  double closed_variance = 0.0;
  double numeric_variance = 0.0;
  double relative_error = 0.0;
  double mass = 0.0;
};

/// Closed-form vs quadrature variance for every sigma1 != sigma2 drawn from
/// `sigmas` and every location offset in `deltas`.
std::vector<OracleRow> laplace_oracle_table(std::span<const double> sigmas,
                                            std::span<const double> deltas);

}  // namespace coprou
