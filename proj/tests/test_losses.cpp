#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <string>

#include "coprou/error.hpp"
#include "coprou/losses.hpp"
#include "test_support.hpp"

namespace coprou {
namespace {

using testing::random_field;
using testing::random_mask;
using testing::smooth_pair;
using testing::SmoothPair;

PairFields fields_of(const SmoothPair& s) {
  return {s.image_tgt, s.image_ref, s.depth_tgt, s.depth_ref, s.sigma_tgt, s.sigma_ref};
}

TEST(PhotometricLoss, Examples) {
  ValidityMask one(3, 3);
  one.set(1, 2, true);
  EXPECT_EQ(photometric_loss(ScalarField(3, 3, 1, 1.0), ScalarField(3, 3, 1, 1.0), one).value, 1.0);
  const ValidityMask all(3, 3, true);
  EXPECT_EQ(photometric_loss(ScalarField(3, 3), ScalarField(3, 3, 1, 1.0), all).value, 0.0);
  try {
    (void)photometric_loss(ScalarField(3, 3), ScalarField(3, 3, 1, 1.0), ValidityMask(3, 3));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyValidSet);
  }
}

TEST(PhotometricLoss, MatchesLoop) {
  std::mt19937_64 rng(1);
  const ScalarField r = random_field(rng, 13, 11);
  const ScalarField s = random_field(rng, 13, 11, 1, 0.01, 2.0);
  const ValidityMask m = random_mask(rng, 13, 11, 0.6);
  double sum = 0;
  int n = 0;
  for (int y = 0; y < 11; ++y) {
    for (int x = 0; x < 13; ++x) {
      if (!m.at(x, y)) continue;
      sum += r.at(x, y) / s.at(x, y) + std::log(s.at(x, y));
      ++n;
    }
  }
  const LossTerm t = photometric_loss(r, s, m);
  EXPECT_NEAR(t.value, sum / n, 1e-12);
  for (int y = 0; y < 11; ++y) {
    for (int x = 0; x < 13; ++x) {
      if (!m.at(x, y)) EXPECT_EQ(t.map.at(x, y), 0.0);
    }
  }
}

TEST(GeometricLoss, Examples) {
  const ValidityMask all(2, 2, true);
  std::mt19937_64 rng(2);
  const ScalarField d = random_field(rng, 2, 2, 1, 0.5, 3.0);
  EXPECT_EQ(geometry_consistency_loss(d, d, all).value, 0.0);
  ValidityMask one(2, 2);
  one.set(0, 1, true);
  EXPECT_EQ(geometry_consistency_loss(ScalarField(2, 2, 1, 1.0), ScalarField(2, 2, 1, 3.0), one).value,
            0.5);
  EXPECT_THROW((void)geometry_consistency_loss(d, d, ValidityMask(2, 2)), Error);
  ScalarField bad = d;
  bad.at(0, 1) = -1.0;
  try {
    (void)geometry_consistency_loss(bad, d, one);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonPositiveDepth);
  }
}

TEST(GeometricLoss, MatchesLoop) {
  std::mt19937_64 rng(3);
  const ScalarField a = random_field(rng, 9, 8, 1, 0.1, 100.0);
  const ScalarField b = random_field(rng, 9, 8, 1, 0.1, 100.0);
  const ValidityMask m = random_mask(rng, 9, 8, 0.5);
  double sum = 0;
  int n = 0;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 9; ++x) {
      if (!m.at(x, y)) continue;
      const double t = std::abs(a.at(x, y) - b.at(x, y)) / (a.at(x, y) + b.at(x, y));
      EXPECT_GE(t, 0.0);
      EXPECT_LT(t, 1.0);
      sum += t;
      ++n;
    }
  }
  EXPECT_NEAR(geometry_consistency_loss(a, b, m).value, sum / n, 1e-12);
}

TEST(SmoothnessLoss, ConstantDepthIsZero) {
  std::mt19937_64 rng(4);
  EXPECT_EQ(smoothness_loss(ScalarField(8, 6, 1, 3.0), random_field(rng, 8, 6, 3)).value, 0.0);
}

TEST(SmoothnessLoss, RampOnFlatImage) {
  const int w = 7, h = 5;
  ScalarField d(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) d.at(x, y) = x;
  }
  const LossTerm t = smoothness_loss(d, ScalarField(w, h, 3, 0.4));
  EXPECT_DOUBLE_EQ(t.value, (w - 1) * h);
  EXPECT_EQ(t.map.at(w - 1, 2), 0.0);
  EXPECT_EQ(t.map.at(3, h - 1), 1.0);
}

TEST(SmoothnessLoss, MatchesLoop) {
  std::mt19937_64 rng(5);
  const int w = 10, h = 8;
  const ScalarField d = random_field(rng, w, h, 1, 1.0, 5.0);
  const ScalarField im = random_field(rng, w, h, 3);
  double total = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double term = 0;
      if (x + 1 < w) {
        double g = 0;
        for (int c = 0; c < 3; ++c) g += std::abs(im.at(x + 1, y, c) - im.at(x, y, c));
        term += std::exp(-g / 3) * (d.at(x + 1, y) - d.at(x, y));
      }
      if (y + 1 < h) {
        double g = 0;
        for (int c = 0; c < 3; ++c) g += std::abs(im.at(x, y + 1, c) - im.at(x, y, c));
        term += std::exp(-g / 3) * (d.at(x, y + 1) - d.at(x, y));
      }
      total += term * term;
    }
  }
  EXPECT_NEAR(smoothness_loss(d, im).value, total, 1e-12);
  EXPECT_THROW((void)smoothness_loss(d, ScalarField(w, h + 1)), Error);
}

TEST(AutoMask, Examples) {
  std::mt19937_64 rng(6);
  const ScalarField tgt = random_field(rng, 6, 6, 3);
  ScalarField ref = tgt;
  ref.at(2, 3, 1) += 0.1;
  ref.at(5, 0, 0) -= 0.2;
  const ValidityMask m = auto_mask(tgt, tgt, ref);
  EXPECT_EQ(m.count(), 2u);
  EXPECT_TRUE(m.at(2, 3));
  EXPECT_TRUE(m.at(5, 0));
  const ScalarField other = random_field(rng, 6, 6, 3);
  EXPECT_EQ(auto_mask(tgt, other, other).count(), 0u);
}

TEST(AutoMask, MatchesLoop) {
  std::mt19937_64 rng(7);
  const ScalarField a = random_field(rng, 9, 7, 2);
  const ScalarField b = random_field(rng, 9, 7, 2);
  const ScalarField c = random_field(rng, 9, 7, 2);
  const ValidityMask m = auto_mask(a, b, c);
  for (int y = 0; y < 7; ++y) {
    for (int x = 0; x < 9; ++x) {
      double warped = 0, identity = 0;
      for (int k = 0; k < 2; ++k) {
        warped += std::abs(a.at(x, y, k) - b.at(x, y, k));
        identity += std::abs(a.at(x, y, k) - c.at(x, y, k));
      }
      EXPECT_EQ(m.at(x, y), warped < identity);
    }
  }
}

// Single-loop reimplementation of the objective: projection, bilinear
// sampling, SSIM restricted to the valid set, effective sigma, auto-mask and
// the three terms, written without the library's intermediate fields.
double fused_objective(const PairFields& f, const Pose6& pose, const CameraIntrinsics& k,
                       const ObjectiveConfig& cfg) {
  const int w = f.image_tgt.width(), h = f.image_tgt.height(), nc = f.image_tgt.channels();
  const Mat4 t = se3_exp(pose);
  std::vector<int> valid(w * h, 0);
  std::vector<double> syn(w * h * nc), syn_sigma(w * h), syn_depth(w * h), proj(w * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d = f.depth_tgt.at(x, y);
      const Vec3 p = t.block<3, 3>(0, 0) * Vec3((x - k.cx) / k.fx * d, (y - k.cy) / k.fy * d, d) +
                     t.block<3, 1>(0, 3);
      if (p.z() <= 1e-6) continue;
      const double u = k.fx * p.x() / p.z() + k.cx, v = k.fy * p.y() / p.z() + k.cy;
      if (!(u >= 0 && u <= w - 1 && v >= 0 && v <= h - 1)) continue;
      const int x0 = std::min(int(u), w - 2), y0 = std::min(int(v), h - 2);
      const double a = u - x0, b = v - y0;
      const auto bil = [&](const ScalarField& g, int c) {
        return (1 - a) * (1 - b) * g.at(x0, y0, c) + a * (1 - b) * g.at(x0 + 1, y0, c) +
               (1 - a) * b * g.at(x0, y0 + 1, c) + a * b * g.at(x0 + 1, y0 + 1, c);
      };
      const int i = y * w + x;
      valid[i] = 1;
      for (int c = 0; c < nc; ++c) syn[i * nc + c] = bil(f.image_ref, c);
      syn_sigma[i] = bil(f.sigma_ref, 0);
      syn_depth[i] = bil(f.depth_ref, 0);
      proj[i] = p.z();
    }
  }
  double photo = 0, geo = 0;
  int n = 0;
  const int r = cfg.residual.window / 2;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int i = y * w + x;
      if (!valid[i]) continue;
      double warped = 0, identity = 0, l1 = 0, ssim = 0;
      for (int c = 0; c < nc; ++c) {
        const double tv = f.image_tgt.at(x, y, c);
        warped += std::abs(tv - syn[i * nc + c]);
        identity += std::abs(tv - f.image_ref.at(x, y, c));
        l1 += std::abs(tv - syn[i * nc + c]);
        double cnt = 0, sa = 0, sb = 0;
        for (int yy = std::max(y - r, 0); yy <= std::min(y + r, h - 1); ++yy) {
          for (int xx = std::max(x - r, 0); xx <= std::min(x + r, w - 1); ++xx) {
            if (!valid[yy * w + xx]) continue;
            cnt += 1;
            sa += f.image_tgt.at(xx, yy, c);
            sb += syn[(yy * w + xx) * nc + c];
          }
        }
        const double ma = sa / cnt, mb = sb / cnt;
        double va = 0, vb = 0, cov = 0;
        for (int yy = std::max(y - r, 0); yy <= std::min(y + r, h - 1); ++yy) {
          for (int xx = std::max(x - r, 0); xx <= std::min(x + r, w - 1); ++xx) {
            if (!valid[yy * w + xx]) continue;
            const double da = f.image_tgt.at(xx, yy, c) - ma, db = syn[(yy * w + xx) * nc + c] - mb;
            va += da * da / cnt;
            vb += db * db / cnt;
            cov += da * db / cnt;
          }
        }
        const ResidualConfig& rc = cfg.residual;
        ssim += (2 * ma * mb + rc.c1) * (2 * cov + rc.c2) /
                ((ma * ma + mb * mb + rc.c1) * (va + vb + rc.c2)) / nc;
      }
      if (cfg.use_auto_mask && !(warped < identity)) continue;
      const double res = cfg.residual.alpha / 2 * (1 - ssim) + (1 - cfg.residual.alpha) * l1 / nc;
      const double st = f.sigma_tgt.at(x, y);
      const double se = std::max(
          cfg.mode == UncertaintyMode::kCombined ? std::sqrt(st * st + syn_sigma[i] * syn_sigma[i]) : st,
          cfg.sigma_floor);
      photo += res / se + std::log(se);
      geo += std::abs(syn_depth[i] - proj[i]) / (syn_depth[i] + proj[i]);
      ++n;
    }
  }
  double smooth = 0;
  const auto add_smooth = [&](const ScalarField& d, const ScalarField& im) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        double term = 0;
        for (int axis = 0; axis < 2; ++axis) {
          const int x1 = x + (axis == 0), y1 = y + (axis == 1);
          if (x1 >= w || y1 >= h) continue;
          double g = 0;
          for (int c = 0; c < nc; ++c) g += std::abs(im.at(x1, y1, c) - im.at(x, y, c)) / nc;
          term += std::exp(-g) * (d.at(x1, y1) - d.at(x, y));
        }
        smooth += term * term;
      }
    }
  };
  add_smooth(f.depth_tgt, f.image_tgt);
  if (cfg.smooth_reference) add_smooth(f.depth_ref, f.image_ref);
  const LossWeights& lw = cfg.weights;
  return lw.photometric * photo / n + lw.geometric * geo / n + lw.smoothness * smooth;
}

TEST(TotalObjective, MatchesFusedLoop) {
  std::mt19937_64 rng(8);
  const int w = 18, h = 14;
  const CameraIntrinsics k{18, 18, 8.5, 6.5};
  for (int trial = 0; trial < 4; ++trial) {
    const ScalarField image_ref = random_field(rng, w, h, 3);
    const ScalarField image_tgt = random_field(rng, w, h, 3);
    const ScalarField depth_tgt = random_field(rng, w, h, 1, 2.0, 3.0);
    const ScalarField depth_ref = random_field(rng, w, h, 1, 2.0, 3.0);
    const ScalarField sigma_tgt = random_field(rng, w, h, 1, 0.0005, 0.3);
    const ScalarField sigma_ref = random_field(rng, w, h, 1, 0.0005, 0.3);
    const PairFields f{image_tgt, image_ref, depth_tgt, depth_ref, sigma_tgt, sigma_ref};
    const Pose6 pose = testing::random_pose(rng, 0.05, 0.2);
    for (auto mode : {UncertaintyMode::kCombined, UncertaintyMode::kSingleTarget}) {
      ObjectiveConfig cfg;
      cfg.mode = mode;
      cfg.smooth_reference = trial % 2 == 0;
      cfg.use_auto_mask = trial != 3;
      const LossBreakdown b = total_objective(f, pose, k, cfg);
      EXPECT_NEAR(b.total, fused_objective(f, pose, k, cfg), 1e-9);
      EXPECT_DOUBLE_EQ(b.total, cfg.weights.photometric * b.photometric +
                                    cfg.weights.geometric * b.geometric +
                                    cfg.weights.smoothness * b.smoothness);
    }
  }
}

TEST(TotalObjective, PerfectPoseOnStaticScene) {
  // Fronto-parallel plane, translation of exactly two pixels: the synthesized
  // image reproduces the target wherever it is defined.
  const int w = 16, h = 12;
  const double z = 3.0;
  const CameraIntrinsics k{16, 16, 7.5, 5.5};
  const ScalarField texture = testing::smooth_texture(w + 2, h);
  ScalarField ref(w, h), tgt(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      ref.at(x, y) = texture.at(x, y);
      tgt.at(x, y) = texture.at(std::min(x + 2, w - 1), y);
    }
  }
  const ScalarField depth(w, h, 1, z);
  const double floor = kDefaultSigmaFloor;
  const ScalarField sigma(w, h, 1, floor / std::sqrt(2.0) * (1 - 1e-12));
  Pose6 pose;
  pose.translation = Vec3(2.0 * z / k.fx, 0, 0);
  const LossBreakdown b = total_objective({tgt, ref, depth, depth, sigma, sigma}, pose, k, {});
  EXPECT_EQ(b.valid_count, static_cast<std::size_t>((w - 2) * h));
  EXPECT_NEAR(b.photometric, std::log(floor), 1e-9);
  EXPECT_NEAR(b.geometric, 0.0, 1e-15);
  EXPECT_EQ(b.smoothness, 0.0);
}

TEST(TotalObjective, WeightZeroing) {
  const SmoothPair s = smooth_pair(16);
  ObjectiveConfig cfg;
  cfg.weights = {0.0, 0.0, 1.0};
  const LossBreakdown b = total_objective(fields_of(s), s.pose, s.intrinsics, cfg);
  EXPECT_EQ(b.total, b.smoothness);
  EXPECT_GT(b.smoothness, 0.0);
}

TEST(TotalObjective, Deterministic) {
  const SmoothPair s = smooth_pair(20, 3);
  const LossBreakdown a = total_objective(fields_of(s), s.pose, s.intrinsics, {});
  const LossBreakdown b = total_objective(fields_of(s), s.pose, s.intrinsics, {});
  EXPECT_EQ(a.total, b.total);
  EXPECT_EQ(a.photometric_map, b.photometric_map);
}

TEST(TotalObjective, EmptyValidSetIsAnError) {
  std::mt19937_64 rng(9);
  const ScalarField im = random_field(rng, 8, 8);
  const ScalarField d(8, 8, 1, 2.0), s(8, 8, 1, 0.1);
  const CameraIntrinsics k{8, 8, 3.5, 3.5};
  try {
    (void)total_objective({im, im, d, d, s, s}, Pose6::identity(), k, {});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyValidSet);
  }
  ObjectiveConfig no_mask;
  no_mask.use_auto_mask = false;
  EXPECT_NO_THROW((void)total_objective({im, im, d, d, s, s}, Pose6::identity(), k, no_mask));
}

struct GradientCase {
  UncertaintyMode mode;
  PoseDirection direction;
  int channels;
};

class TotalObjectiveGradient : public ::testing::TestWithParam<GradientCase> {};

TEST_P(TotalObjectiveGradient, MatchesFiniteDifferences) {
  const GradientCase gc = GetParam();
  SmoothPair s = smooth_pair(20, gc.channels);
  ObjectiveConfig cfg;
  cfg.mode = gc.mode;
  const Pose6 pose = gc.direction == PoseDirection::kForward ? s.pose : inverse(s.pose);
  const auto eval = [&](const Pose6& p) {
    return total_objective(fields_of(s), p, s.intrinsics, cfg, nullptr, gc.direction).total;
  };
  ObjectiveGradient g;
  const LossBreakdown base = total_objective(fields_of(s), pose, s.intrinsics, cfg, &g, gc.direction);
  ASSERT_GT(base.valid_count, 300u);

  const auto params = pose.params();
  for (int k = 0; k < 6; ++k) {
    const double h = 1e-6;
    auto pp = params, pm = params;
    pp[k] += h;
    pm[k] -= h;
    const double fd = (eval(Pose6::from_params(pp)) - eval(Pose6::from_params(pm))) / (2 * h);
    EXPECT_LT(testing::relative_error(g.pose[k], fd), 1e-4) << "pose " << k << " " << g.pose[k] << " " << fd;
  }

  std::mt19937_64 rng(10);
  std::uniform_int_distribution<int> px(1, 18);
  const auto check_field = [&](ScalarField& field, const ScalarField& grad, const char* name) {
    for (int i = 0; i < 12; ++i) {
      const int x = px(rng), y = px(rng);
      const double h = 1e-6 * std::max(1.0, std::abs(field.at(x, y)));
      const double orig = field.at(x, y);
      field.at(x, y) = orig + h;
      const double fp = eval(pose);
      field.at(x, y) = orig - h;
      const double fm = eval(pose);
      field.at(x, y) = orig;
      const double fd = (fp - fm) / (2 * h);
      EXPECT_LT(std::abs(grad.at(x, y) - fd), 1e-4 * std::max(std::abs(fd), 1e-3))
          << name << " at " << x << "," << y;
    }
  };
  check_field(s.sigma_tgt, g.sigma_tgt, "sigma_tgt");
  check_field(s.sigma_ref, g.sigma_ref, "sigma_ref");
  check_field(s.depth_tgt, g.depth_tgt, "depth_tgt");
  check_field(s.depth_ref, g.depth_ref, "depth_ref");
}

INSTANTIATE_TEST_SUITE_P(
    Modes, TotalObjectiveGradient,
    ::testing::Values(GradientCase{UncertaintyMode::kCombined, PoseDirection::kForward, 1},
                      GradientCase{UncertaintyMode::kSingleTarget, PoseDirection::kForward, 1},
                      GradientCase{UncertaintyMode::kCombined, PoseDirection::kInverse, 1},
                      GradientCase{UncertaintyMode::kCombined, PoseDirection::kForward, 3}),
    [](const ::testing::TestParamInfo<GradientCase>& info) {
      std::string name = info.param.mode == UncertaintyMode::kCombined ? "Combined" : "Single";
      name += info.param.direction == PoseDirection::kForward ? "Forward" : "Inverse";
      return name + std::to_string(info.param.channels) + "ch";
    });

}  // namespace
}  // namespace coprou
