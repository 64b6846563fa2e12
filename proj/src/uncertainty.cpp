#include "coprou/uncertainty.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "coprou/error.hpp"

namespace coprou {

namespace {

constexpr double kEqualScaleTolerance = 1e-8;
// Laplace tails at this many scales are below e^-60.
constexpr double kTailScales = 60.0;

double simpson_step(const std::function<double(double)>& f, double a, double b, double fa,
                    double fm, double fb, double whole, double tol, int depth) {
  const double m = 0.5 * (a + b);
  const double lm = 0.5 * (a + m);
  const double rm = 0.5 * (m + b);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
  const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
         simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

}  // namespace

double effective_sigma(double sigma_tgt, double sigma_syn, UncertaintyMode mode, double floor) {
  const double s = mode == UncertaintyMode::kCombined ? std::hypot(sigma_tgt, sigma_syn) : sigma_tgt;
  return std::max(s, floor);
}

ScalarField effective_sigma(const ScalarField& sigma_tgt, const ScalarField& sigma_syn,
                            UncertaintyMode mode, double floor, const ValidityMask* support) {
  require(floor > 0.0, ErrorKind::kInvalidArgument, "sigma floor must be positive");
  require_same_shape(sigma_tgt, sigma_syn, "effective_sigma");
  require(sigma_tgt.channels() == 1, ErrorKind::kDimensionMismatch,
          "effective_sigma expects single-channel fields");
  if (support != nullptr) {
    require(support->matches(sigma_tgt), ErrorKind::kDimensionMismatch,
            "effective_sigma: support mask dimensions differ");
  }
  ScalarField out(sigma_tgt.width(), sigma_tgt.height());
  for (int y = 0; y < out.height(); ++y) {
    for (int x = 0; x < out.width(); ++x) {
      const double st = sigma_tgt.at(x, y);
      require(st > 0.0, ErrorKind::kNonPositiveInput, "target uncertainty must be positive");
      const bool use_syn =
          mode == UncertaintyMode::kCombined && (support == nullptr || support->at(x, y));
      if (!use_syn) {
        out.at(x, y) = std::max(st, floor);
        continue;
      }
      const double ss = sigma_syn.at(x, y);
      require(ss > 0.0, ErrorKind::kNonPositiveInput, "synthesized uncertainty must be positive");
      out.at(x, y) = effective_sigma(st, ss, mode, floor);
    }
  }
  return out;
}

ScalarField laplace_nll_map(const ScalarField& residual, const ScalarField& sigma_eff) {
  require_same_shape(residual, sigma_eff, "laplace_nll_map");
  ScalarField out(residual.width(), residual.height(), residual.channels());
  auto r = residual.data();
  auto s = sigma_eff.data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) {
    require(s[i] > 0.0, ErrorKind::kNonPositiveSigma, "effective sigma must be positive");
    o[i] = r[i] / s[i] + std::log(s[i]);
  }
  return out;
}

double laplace_density(double x, double mu, double sigma) {
  return std::exp(-std::abs(x - mu) / sigma) / (2.0 * sigma);
}

double laplace_diff_density(const LaplacePair& pair, double r) {
  require(pair.sigma1 > 0.0 && pair.sigma2 > 0.0, ErrorKind::kNonPositiveSigma,
          "Laplace scales must be positive");
  const double c = std::abs(r - (pair.mu1 - pair.mu2));
  const double s1 = pair.sigma1;
  const double s2 = pair.sigma2;
  if (std::abs(s1 - s2) <= kEqualScaleTolerance * std::max(s1, s2)) {
    const double s = 0.5 * (s1 + s2);
    return (1.0 + c / s) * std::exp(-c / s) / (4.0 * s);
  }
  return (s2 * std::exp(-c / s2) - s1 * std::exp(-c / s1)) / (2.0 * (s2 * s2 - s1 * s1));
}

double integrate_adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                                  double abs_tol, int max_depth) {
  const double fa = f(a);
  const double fb = f(b);
  const double fm = f(0.5 * (a + b));
  const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
  return simpson_step(f, a, b, fa, fm, fb, whole, abs_tol, max_depth);
}

LaplaceDiffMoments laplace_diff_moments(const LaplacePair& pair, bool check) {
  LaplaceDiffMoments out;
  out.mean = pair.mu1 - pair.mu2;
  out.variance = 2.0 * (pair.sigma1 * pair.sigma1 + pair.sigma2 * pair.sigma2);
  if (!check) return out;

  const double center = out.mean;
  const double half_width = kTailScales * std::max(pair.sigma1, pair.sigma2);
  // Split at the cusp so each half is smooth.
  auto integrate = [&](const std::function<double(double)>& g) {
    return integrate_adaptive_simpson(g, center - half_width, center) +
           integrate_adaptive_simpson(g, center, center + half_width);
  };
  NumericMoments m;
  m.mass = integrate([&](double r) { return laplace_diff_density(pair, r); });
  const double offset =
      integrate([&](double r) { return (r - center) * laplace_diff_density(pair, r); });
  m.mean = center + offset;
  const double second = integrate(
      [&](double r) { return (r - center) * (r - center) * laplace_diff_density(pair, r); });
  m.variance = second - offset * offset;
  out.numeric = m;
  return out;
}

std::vector<OracleRow> laplace_oracle_table(std::span<const double> sigmas,
                                            std::span<const double> deltas) {
  std::vector<OracleRow> rows;
  for (double delta : deltas) {
    for (double s1 : sigmas) {
      for (double s2 : sigmas) {
        if (s1 == s2) continue;
        const LaplacePair pair{delta, 0.0, s1, s2};
        const auto moments = laplace_diff_moments(pair, true);
        OracleRow row;
        row.sigma1 = s1;
        row.sigma2 = s2;
        row.delta = delta;
        row.closed_variance = moments.variance;
        row.numeric_variance = moments.numeric->variance;
        row.relative_error =
            std::abs(row.numeric_variance - row.closed_variance) / row.closed_variance;
        row.mass = moments.numeric->mass;
        rows.push_back(row);
      }
    }
  }
  return rows;
}

}  // namespace coprou
