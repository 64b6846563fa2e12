#include "coprou/photometric.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "coprou/error.hpp"

namespace coprou {

namespace {

struct WindowStats {
  double n = 0.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  double var_a = 0.0;
  double var_b = 0.0;
  double cov = 0.0;
};

struct Window {
  int x0, x1, y0, y1;
};

Window clip_window(int x, int y, int half, int w, int h) {
  return {std::max(x - half, 0), std::min(x + half, w - 1), std::max(y - half, 0),
          std::min(y + half, h - 1)};
}

bool in_support(const ValidityMask* support, int x, int y) {
  return support == nullptr || support->at(x, y);
}

// Two-pass population statistics over the clipped, supported window.
WindowStats window_stats(const ScalarField& a, const ScalarField& b, int c, const Window& win,
                         const ValidityMask* support) {
  WindowStats s;
  double sum_a = 0.0, sum_b = 0.0;
  for (int y = win.y0; y <= win.y1; ++y) {
    for (int x = win.x0; x <= win.x1; ++x) {
      if (!in_support(support, x, y)) continue;
      s.n += 1.0;
      sum_a += a.at(x, y, c);
      sum_b += b.at(x, y, c);
    }
  }
  s.mean_a = sum_a / s.n;
  s.mean_b = sum_b / s.n;
  for (int y = win.y0; y <= win.y1; ++y) {
    for (int x = win.x0; x <= win.x1; ++x) {
      if (!in_support(support, x, y)) continue;
      const double da = a.at(x, y, c) - s.mean_a;
      const double db = b.at(x, y, c) - s.mean_b;
      s.var_a += da * da;
      s.var_b += db * db;
      s.cov += da * db;
    }
  }
  s.var_a /= s.n;
  s.var_b /= s.n;
  s.cov /= s.n;
  return s;
}

double ssim_from_stats(const WindowStats& s, const ResidualConfig& cfg) {
  const double num = (2.0 * s.mean_a * s.mean_b + cfg.c1) * (2.0 * s.cov + cfg.c2);
  const double den = (s.mean_a * s.mean_a + s.mean_b * s.mean_b + cfg.c1) *
                     (s.var_a + s.var_b + cfg.c2);
  return num / den;
}

void check_pair(const ScalarField& a, const ScalarField& b, const ValidityMask* support,
                const char* what) {
  require_same_shape(a, b, what);
  if (support != nullptr) {
    require(support->matches(a), ErrorKind::kDimensionMismatch,
            std::string(what) + ": support mask dimensions differ");
  }
}

}  // namespace

void ResidualConfig::validate() const {
  require(alpha >= 0.0 && alpha <= 1.0, ErrorKind::kInvalidArgument,
          "alpha must lie in [0, 1], got " + std::to_string(alpha));
  require(c1 > 0.0 && c2 > 0.0, ErrorKind::kInvalidArgument, "SSIM constants must be positive");
  require(window > 0 && window % 2 == 1, ErrorKind::kInvalidArgument,
          "SSIM window must be odd and positive, got " + std::to_string(window));
}

ScalarField ssim_map(const ScalarField& a, const ScalarField& b, const ResidualConfig& cfg,
                     const ValidityMask* support) {
  cfg.validate();
  check_pair(a, b, support, "ssim_map");
  const int w = a.width();
  const int h = a.height();
  const int half = cfg.window / 2;
  ScalarField out(w, h, 1, 1.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!in_support(support, x, y)) continue;
      const Window win = clip_window(x, y, half, w, h);
      double acc = 0.0;
      for (int c = 0; c < a.channels(); ++c) {
        acc += ssim_from_stats(window_stats(a, b, c, win, support), cfg);
      }
      out.at(x, y) = acc / a.channels();
    }
  }
  return out;
}

ScalarField residual_map(const ScalarField& image_tgt, const ScalarField& image_syn,
                         const ResidualConfig& cfg, const ValidityMask* support) {
  const ScalarField ssim = ssim_map(image_tgt, image_syn, cfg, support);
  const int w = image_tgt.width();
  const int h = image_tgt.height();
  const int nc = image_tgt.channels();
  ScalarField out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!in_support(support, x, y)) continue;
      double l1 = 0.0;
      for (int c = 0; c < nc; ++c) l1 += std::abs(image_tgt.at(x, y, c) - image_syn.at(x, y, c));
      out.at(x, y) = 0.5 * cfg.alpha * (1.0 - ssim.at(x, y)) + (1.0 - cfg.alpha) * l1 / nc;
    }
  }
  return out;
}

ScalarField residual_map_vjp(const ScalarField& image_tgt, const ScalarField& image_syn,
                             const ResidualConfig& cfg, const ValidityMask* support,
                             const ScalarField& residual_adjoint) {
  cfg.validate();
  check_pair(image_tgt, image_syn, support, "residual_map_vjp");
  require_same_grid(image_tgt, residual_adjoint, "residual_map_vjp(adjoint)");
  const int w = image_tgt.width();
  const int h = image_tgt.height();
  const int nc = image_tgt.channels();
  const int half = cfg.window / 2;
  const double inv_nc = 1.0 / nc;

  ScalarField grad(w, h, nc);
  // d(SSIM_p)/d(b_q) = coef_const + coef_b * b_q + coef_a * a_q for every q in
  // the window of p; the three coefficients are gathered per p first.
  ScalarField coef(w, h, 3);
  for (int c = 0; c < nc; ++c) {
    std::fill(coef.data().begin(), coef.data().end(), 0.0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!in_support(support, x, y)) continue;
        const double g = residual_adjoint.at(x, y);
        if (g == 0.0) continue;
        const WindowStats s = window_stats(image_tgt, image_syn, c, clip_window(x, y, half, w, h),
                                           support);
        const double a1 = 2.0 * s.mean_a * s.mean_b + cfg.c1;
        const double a2 = 2.0 * s.cov + cfg.c2;
        const double b1 = s.mean_a * s.mean_a + s.mean_b * s.mean_b + cfg.c1;
        const double b2 = s.var_a + s.var_b + cfg.c2;
        const double ssim = a1 * a2 / (b1 * b2);
        const double d_mean = 2.0 * s.mean_a * a2 / (b1 * b2) - ssim * 2.0 * s.mean_b / b1;
        const double d_var = -ssim / b2;
        const double d_cov = 2.0 * a1 / (b1 * b2);
        const double gs = -0.5 * cfg.alpha * g * inv_nc / s.n;
        coef.at(x, y, 0) = gs * (d_mean - 2.0 * d_var * s.mean_b - d_cov * s.mean_a);
        coef.at(x, y, 1) = gs * 2.0 * d_var;
        coef.at(x, y, 2) = gs * d_cov;
      }
    }
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!in_support(support, x, y)) continue;
        const Window win = clip_window(x, y, half, w, h);
        double k0 = 0.0, kb = 0.0, ka = 0.0;
        for (int py = win.y0; py <= win.y1; ++py) {
          for (int px = win.x0; px <= win.x1; ++px) {
            k0 += coef.at(px, py, 0);
            kb += coef.at(px, py, 1);
            ka += coef.at(px, py, 2);
          }
        }
        const double diff = image_syn.at(x, y, c) - image_tgt.at(x, y, c);
        const double sign = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        grad.at(x, y, c) = k0 + kb * image_syn.at(x, y, c) + ka * image_tgt.at(x, y, c) +
                           (1.0 - cfg.alpha) * inv_nc * residual_adjoint.at(x, y) * sign;
      }
    }
  }
  return grad;
}

}  // namespace coprou
