#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "coprou/geometry.hpp"

namespace coprou {

/// Camera-to-world rigid motions, associated with other trajectories by index.
struct Trajectory {
  std::vector<Mat4> poses;
  std::vector<int> frame_indices;

  static Trajectory from_poses(std::vector<Mat4> poses);
  std::size_t size() const { return poses.size(); }
  Vec3 position(std::size_t i) const { return poses[i].block<3, 1>(0, 3); }
  /// Throws InvalidArgument unless every rotation block is orthonormal with
  /// det +1 (to 1e-6) and the bottom row is (0, 0, 0, 1).
  void validate() const;
};

/// x -> scale * rotation * x + translation.
struct SimilarityTransform {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * rotation * x + translation; }
  /// Moves a camera-to-world pose: the camera centre is mapped by the
  /// similarity and its orientation by the rotation.
  Mat4 apply(const Mat4& pose) const;
  Trajectory apply(const Trajectory& t) const;
};

/// Least-squares similarity taking pred positions onto gt positions.
/// Throws DegenerateGeometry when the gt positions are collinear or
/// coincident, since the rotation is then not unique.
SimilarityTransform align_7dof(const Trajectory& pred, const Trajectory& gt);

/// Same fit, but accepts collinear gt positions (any optimal rotation is
/// returned; the residual is still minimal). Throws DegenerateGeometry only
/// when the pred positions coincide.
SimilarityTransform align_7dof_tolerant(const Trajectory& pred, const Trajectory& gt);

/// Position RMSE after 7-DoF alignment.
double ate(const Trajectory& pred, const Trajectory& gt);

struct KittiErrors {
  /// Mean translation drift, percent.
  double t_err = 0.0;
  /// Mean rotation drift, degrees per 100 m.
  double r_err = 0.0;
  std::size_t segments = 0;
};

struct KittiOptions {
  /// Segment lengths in gt path units.
  std::vector<double> distances = {100, 200, 300, 400, 500, 600, 700, 800};
  /// Start frames are taken every `stride` frames. The benchmark devkit uses 10.
  int stride = 1;
  bool align = true;
};

/// Lengths from `distances` for which gt has at least one segment.
std::vector<double> usable_distances(const Trajectory& gt, std::span<const double> distances);

/// Throws TrajectoryTooShort, listing the usable lengths, when some
/// requested length has no segment.
KittiErrors kitti_relative_errors(const Trajectory& pred, const Trajectory& gt,
                                  const KittiOptions& options = {});

struct RpeResult {
  double trans = 0.0;
  /// Degrees.
  double rot = 0.0;
  std::size_t pairs = 0;
};

/// RMSE of the relative-motion error over frame pairs (i, i + interval).
RpeResult rpe(const Trajectory& pred, const Trajectory& gt, int interval = 1, bool align = true);

/// Twelve reals per line: the row-major top 3x4 block of each pose.
Trajectory read_kitti_poses(std::istream& in);
Trajectory read_kitti_poses(const std::filesystem::path& path);
/// Shortest round-trip decimal form, so reading back is exact.
void write_kitti_poses(std::ostream& out, const Trajectory& t);
void write_kitti_poses(const std::filesystem::path& path, const Trajectory& t);

struct MetricRow {
  std::string metric;
  double value = 0.0;
  std::string unit;
};

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double v);

}  // namespace coprou
