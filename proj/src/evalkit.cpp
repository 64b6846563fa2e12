#include "coprou/evalkit.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <optional>
#include <ostream>
#include <sstream>

#include <Eigen/Geometry>
#include <Eigen/SVD>

#include "coprou/error.hpp"

namespace coprou {

namespace {

constexpr double kOrthonormalTol = 1e-6;
constexpr double kCollinearTol = 1e-9;

Eigen::Matrix3Xd positions(const Trajectory& t) {
  Eigen::Matrix3Xd p(3, static_cast<Eigen::Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) p.col(static_cast<Eigen::Index>(i)) = t.position(i);
  return p;
}

void require_pair(const Trajectory& pred, const Trajectory& gt, std::size_t min_len) {
  require(pred.size() == gt.size(), ErrorKind::kDimensionMismatch,
          "trajectories have different lengths (" + std::to_string(pred.size()) + " vs " +
              std::to_string(gt.size()) + ")");
  require(gt.size() >= min_len, ErrorKind::kTrajectoryTooShort,
          "need at least " + std::to_string(min_len) + " poses, got " + std::to_string(gt.size()));
  pred.validate();
  gt.validate();
}

SimilarityTransform fit(const Trajectory& pred, const Trajectory& gt) {
  const Eigen::Matrix3Xd src = positions(pred);
  const Eigen::Matrix3Xd dst = positions(gt);
  const Eigen::Matrix3Xd centred = src.colwise() - src.rowwise().mean();
  require(centred.squaredNorm() > 0.0, ErrorKind::kDegenerateGeometry,
          "predicted positions coincide; scale is undefined");
  // Exact identity instead of a round-off perturbed one.
  if (src == dst) return {};
  const Mat4 m = Eigen::umeyama(src, dst, true);
  SimilarityTransform s;
  const Mat3 sr = m.block<3, 3>(0, 0);
  s.scale = std::cbrt(sr.determinant());
  require(s.scale > 0.0 && std::isfinite(s.scale), ErrorKind::kDegenerateGeometry,
          "alignment produced a non-positive scale");
  s.rotation = sr / s.scale;
  s.translation = m.block<3, 1>(0, 3);
  return s;
}

Mat4 inverse_rigid(const Mat4& m) {
  Mat4 out = Mat4::Identity();
  const Mat3 rt = m.block<3, 3>(0, 0).transpose();
  out.block<3, 3>(0, 0) = rt;
  out.block<3, 1>(0, 3) = -rt * m.block<3, 1>(0, 3);
  return out;
}

double angle_of(const Mat4& m) { return rotation_angle(m.block<3, 3>(0, 0)); }

std::vector<double> path_distances(const Trajectory& gt) {
  std::vector<double> dist(gt.size(), 0.0);
  for (std::size_t i = 1; i < gt.size(); ++i) {
    dist[i] = dist[i - 1] + (gt.position(i) - gt.position(i - 1)).norm();
  }
  return dist;
}

// First frame whose accumulated distance exceeds dist[first] + len.
std::optional<std::size_t> segment_end(const std::vector<double>& dist, std::size_t first,
                                       double len) {
  for (std::size_t i = first; i < dist.size(); ++i) {
    if (dist[i] > dist[first] + len) return i;
  }
  return std::nullopt;
}

std::string join(std::span<const double> v) {
  std::string s;
  for (double d : v) s += (s.empty() ? "" : ", ") + format_double(d);
  return s.empty() ? "none" : s;
}

}  // namespace

Trajectory Trajectory::from_poses(std::vector<Mat4> poses) {
  Trajectory t;
  t.poses = std::move(poses);
  t.frame_indices.resize(t.poses.size());
  for (std::size_t i = 0; i < t.poses.size(); ++i) t.frame_indices[i] = static_cast<int>(i);
  return t;
}

void Trajectory::validate() const {
  require(frame_indices.empty() || frame_indices.size() == poses.size(),
          ErrorKind::kDimensionMismatch, "frame index count differs from pose count");
  for (std::size_t i = 0; i < poses.size(); ++i) {
    const Mat4& p = poses[i];
    const Mat3 r = p.block<3, 3>(0, 0);
    const double ortho = (r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff();
    const bool ok = p.allFinite() && ortho <= kOrthonormalTol && r.determinant() > 0.0 &&
                    p.row(3).isApprox(Eigen::RowVector4d(0, 0, 0, 1), 0.0);
    require(ok, ErrorKind::kInvalidArgument,
            "pose " + std::to_string(i) + " is not a rigid motion");
  }
}

Mat4 SimilarityTransform::apply(const Mat4& pose) const {
  Mat4 out = Mat4::Identity();
  out.block<3, 3>(0, 0) = rotation * pose.block<3, 3>(0, 0);
  out.block<3, 1>(0, 3) = apply(Vec3(pose.block<3, 1>(0, 3)));
  return out;
}

Trajectory SimilarityTransform::apply(const Trajectory& t) const {
  Trajectory out = t;
  for (Mat4& p : out.poses) p = apply(p);
  return out;
}

SimilarityTransform align_7dof(const Trajectory& pred, const Trajectory& gt) {
  require_pair(pred, gt, 3);
  const Eigen::Matrix3Xd g = positions(gt);
  const Eigen::Matrix3Xd centred = g.colwise() - g.rowwise().mean();
  const Vec3 sv = Eigen::JacobiSVD<Eigen::Matrix3Xd>(centred).singularValues();
  require(sv[0] > 0.0 && sv[1] > kCollinearTol * sv[0], ErrorKind::kDegenerateGeometry,
          "ground-truth positions are collinear; rotation is not unique "
          "(fall back to scale-only alignment)");
  return fit(pred, gt);
}

SimilarityTransform align_7dof_tolerant(const Trajectory& pred, const Trajectory& gt) {
  require_pair(pred, gt, 2);
  return fit(pred, gt);
}

double ate(const Trajectory& pred, const Trajectory& gt) {
  const SimilarityTransform s = align_7dof_tolerant(pred, gt);
  double sum = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    sum += (s.apply(pred.position(i)) - gt.position(i)).squaredNorm();
  }
  return std::sqrt(sum / static_cast<double>(gt.size()));
}

std::vector<double> usable_distances(const Trajectory& gt, std::span<const double> distances) {
  const std::vector<double> dist = path_distances(gt);
  std::vector<double> out;
  for (double len : distances) {
    if (!dist.empty() && segment_end(dist, 0, len)) out.push_back(len);
  }
  return out;
}

KittiErrors kitti_relative_errors(const Trajectory& pred, const Trajectory& gt,
                                  const KittiOptions& options) {
  require(!options.distances.empty(), ErrorKind::kInvalidArgument, "no segment lengths given");
  require(options.stride >= 1, ErrorKind::kInvalidArgument, "stride must be at least 1");
  for (double d : options.distances) {
    require(d > 0.0 && std::isfinite(d), ErrorKind::kInvalidArgument,
            "segment lengths must be positive");
  }
  require_pair(pred, gt, 2);
  const std::vector<double> usable = usable_distances(gt, options.distances);
  require(usable.size() == options.distances.size(), ErrorKind::kTrajectoryTooShort,
          "ground-truth path is too short for the requested lengths; usable lengths: " +
              join(usable));

  const Trajectory aligned = options.align ? align_7dof_tolerant(pred, gt).apply(pred) : pred;
  const std::vector<double> dist = path_distances(gt);
  double t_sum = 0.0;
  double r_sum = 0.0;
  KittiErrors e;
  for (std::size_t first = 0; first < gt.size(); first += static_cast<std::size_t>(options.stride)) {
    for (double len : options.distances) {
      const auto last = segment_end(dist, first, len);
      if (!last) continue;
      const Mat4 delta_gt = inverse_rigid(gt.poses[first]) * gt.poses[*last];
      const Mat4 delta_pred = inverse_rigid(aligned.poses[first]) * aligned.poses[*last];
      const Mat4 err = inverse_rigid(delta_pred) * delta_gt;
      t_sum += err.block<3, 1>(0, 3).norm() / len;
      r_sum += angle_of(err) / len;
      ++e.segments;
    }
  }
  e.t_err = 100.0 * t_sum / static_cast<double>(e.segments);
  e.r_err = 100.0 * (180.0 / std::numbers::pi) * r_sum / static_cast<double>(e.segments);
  return e;
}

RpeResult rpe(const Trajectory& pred, const Trajectory& gt, int interval, bool align) {
  require(interval >= 1, ErrorKind::kInvalidArgument, "interval must be at least 1");
  require_pair(pred, gt, 2);
  require(gt.size() > static_cast<std::size_t>(interval), ErrorKind::kTrajectoryTooShort,
          "trajectory of " + std::to_string(gt.size()) + " poses is too short for interval " +
              std::to_string(interval));
  const Trajectory aligned = align ? align_7dof_tolerant(pred, gt).apply(pred) : pred;
  const std::size_t step = static_cast<std::size_t>(interval);
  double t_sum = 0.0;
  double r_sum = 0.0;
  RpeResult r;
  for (std::size_t i = 0; i + step < gt.size(); ++i) {
    const Mat4 rel_gt = inverse_rigid(gt.poses[i]) * gt.poses[i + step];
    const Mat4 rel_pred = inverse_rigid(aligned.poses[i]) * aligned.poses[i + step];
    const Mat4 err = inverse_rigid(rel_gt) * rel_pred;
    t_sum += err.block<3, 1>(0, 3).squaredNorm();
    const double a = angle_of(err);
    r_sum += a * a;
    ++r.pairs;
  }
  r.trans = std::sqrt(t_sum / static_cast<double>(r.pairs));
  r.rot = std::sqrt(r_sum / static_cast<double>(r.pairs)) * 180.0 / std::numbers::pi;
  return r;
}

Trajectory read_kitti_poses(std::istream& in) {
  std::vector<Mat4> poses;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream tokens(line);
    std::string tok;
    std::array<double, 12> v{};
    int n = 0;
    while (tokens >> tok) {
      require(n < 12, ErrorKind::kIo,
              "line " + std::to_string(line_no) + ": more than 12 values");
      const auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v[n]);
      require(ec == std::errc() && ptr == tok.data() + tok.size(), ErrorKind::kIo,
              "line " + std::to_string(line_no) + ": cannot parse '" + tok + "'");
      ++n;
    }
    if (n == 0) continue;
    require(n == 12, ErrorKind::kIo,
            "line " + std::to_string(line_no) + ": expected 12 values, got " + std::to_string(n));
    Mat4 m = Mat4::Identity();
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) m(r, c) = v[r * 4 + c];
    }
    poses.push_back(m);
  }
  require(!in.bad(), ErrorKind::kIo, "read error");
  return Trajectory::from_poses(std::move(poses));
}

Trajectory read_kitti_poses(const std::filesystem::path& path) {
  std::ifstream in(path);
  require(in.good(), ErrorKind::kIo, "cannot open " + path.string());
  return read_kitti_poses(in);
}

void write_kitti_poses(std::ostream& out, const Trajectory& t) {
  for (const Mat4& m : t.poses) {
    for (int r = 0; r < 3; ++r) {
      for (int c = 0; c < 4; ++c) {
        out << format_double(m(r, c)) << (r == 2 && c == 3 ? '\n' : ' ');
      }
    }
  }
}

void write_kitti_poses(const std::filesystem::path& path, const Trajectory& t) {
  std::ofstream out(path);
  require(out.good(), ErrorKind::kIo, "cannot write " + path.string());
  write_kitti_poses(out, t);
  require(out.good(), ErrorKind::kIo, "write failed for " + path.string());
}

void write_metrics_csv(std::ostream& out, std::span<const MetricRow> rows) {
  out << "metric,value,unit\n";
  for (const MetricRow& r : rows) out << r.metric << ',' << format_double(r.value) << ',' << r.unit << '\n';
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), ptr);
}

}  // namespace coprou
