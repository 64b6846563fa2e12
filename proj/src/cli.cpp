#include "coprou/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include "coprou/error.hpp"
#include "coprou/evalkit.hpp"
#include "coprou/losses.hpp"
#include "coprou/synthopt.hpp"
#include "coprou/uncertainty.hpp"

namespace coprou {

namespace fs = std::filesystem;

ScalarField disparity_to_depth(const ScalarField& x, double a, double b) {
  require(std::isfinite(a) && std::isfinite(b), ErrorKind::kInvalidArgument,
          "depth-range coefficients must be finite");
  ScalarField depth(x.width(), x.height(), x.channels());
  for (std::size_t i = 0; i < depth.data().size(); ++i) {
    const double denom = a * x.data()[i] + b;
    require(denom > 0.0, ErrorKind::kNonPositiveDenominator,
            "a*x + b = " + format_double(denom) + " at sample " + std::to_string(i));
    depth.data()[i] = 1.0 / denom;
  }
  return depth;
}

namespace {

struct CommonLoss {
  double alpha = 0.85;
  double c1 = 0.0009;
  double c2 = 0.0001;
  double w_p = 1.0;
  double w_g = 0.5;
  double w_s = 0.1;
  double sigma_floor = kDefaultSigmaFloor;
  std::string mode = "combined";
  bool no_auto_mask = false;
  bool no_smooth_reference = false;

  void add_to(CLI::App* app) {
    app->add_option("--alpha", alpha, "SSIM weight in the photometric residual")->capture_default_str();
    app->add_option("--c1", c1, "SSIM stabilizer C1")->capture_default_str();
    app->add_option("--c2", c2, "SSIM stabilizer C2")->capture_default_str();
    app->add_option("--w-p", w_p, "photometric loss weight")->capture_default_str();
    app->add_option("--w-g", w_g, "geometric loss weight")->capture_default_str();
    app->add_option("--w-s", w_s, "smoothness loss weight")->capture_default_str();
    app->add_option("--sigma-floor", sigma_floor, "lower bound on the effective sigma")
        ->capture_default_str();
    app->add_option("--mode", mode, "uncertainty mode")
        ->check(CLI::IsMember({"combined", "single"}))
        ->capture_default_str();
    app->add_flag("--no-auto-mask", no_auto_mask, "keep every valid pixel");
    app->add_flag("--no-smooth-reference", no_smooth_reference,
                  "smooth only the target depth");
  }

  ObjectiveConfig config() const {
    ObjectiveConfig c;
    c.residual.alpha = alpha;
    c.residual.c1 = c1;
    c.residual.c2 = c2;
    c.weights = {w_p, w_g, w_s};
    c.sigma_floor = sigma_floor;
    c.mode = mode == "single" ? UncertaintyMode::kSingleTarget : UncertaintyMode::kCombined;
    c.use_auto_mask = !no_auto_mask;
    c.smooth_reference = !no_smooth_reference;
    c.validate();
    return c;
  }
};

struct SceneFlags {
  std::uint64_t seed = 1;
  SceneSpec spec;
  double dynamic = 0.0;
  double object_motion = 5.0;

  void add_to(CLI::App* app) {
    app->add_option("--seed", seed, "scene seed")->capture_default_str();
    app->add_option("--width", spec.width)->capture_default_str();
    app->add_option("--height", spec.height)->capture_default_str();
    app->add_option("--rotation-deg", spec.rotation_deg, "true rotation angle")
        ->capture_default_str();
    app->add_option("--translation-fraction", spec.translation_fraction,
                    "true translation as a fraction of the mean depth")
        ->capture_default_str();
    app->add_option("--mean-depth", spec.mean_depth)->capture_default_str();
    app->add_option("--slant", spec.slant, "depth gradient of the plane")->capture_default_str();
    app->add_option("--texture-wavelength", spec.texture_wavelength_px, "pixels")
        ->capture_default_str();
    app->add_option("--focal-scale", spec.focal_scale, "focal length / width")
        ->capture_default_str();
    app->add_option("--dynamic", dynamic, "area fraction of the moving object (0 = none)")
        ->capture_default_str();
    app->add_option("--object-motion", object_motion, "object displacement in pixels")
        ->capture_default_str();
  }

  SyntheticScene make() const { return make_toy_scene(seed, spec, dynamic, object_motion); }
};

struct EvalFlags {
  std::string pred;
  std::string gt;
  std::string out;
  int interval = 1;
  int stride = 1;
  std::vector<double> distances = KittiOptions{}.distances;
  bool no_align = false;
};

struct ToyTrainFlags {
  SceneFlags scene;
  CommonLoss loss;
  Schedule schedule;
  double initial_sigma = 0.1;
  bool bidirectional = false;
  bool average_pairs = false;
  bool joint_depth = false;
  std::string out;
  std::string dump_dir;
};

struct LossMapFlags {
  CommonLoss loss;
  std::string image_tgt, image_ref, depth_tgt, depth_ref, sigma_tgt, sigma_ref;
  double sigma = 0.1;
  std::vector<double> pose;
  std::optional<double> fx, fy, cx, cy;
  bool disparity = false;
  double disp_a = kDefaultDisparityA;
  double disp_b = kDefaultDisparityB;
  std::string out_dir;
  bool header = false;
};

struct OracleFlags {
  std::vector<double> sigmas = {0.1, 0.5, 1.0, 2.0, 5.0};
  std::vector<double> deltas = {0.0, 1.0};
};

struct SynthFlags {
  SceneFlags scene;
  std::string out_dir;
};

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  require(f.good(), ErrorKind::kIo, "cannot write " + path.string());
  return f;
}

void run_eval(const EvalFlags& f, std::ostream& out, std::ostream& err) {
  const Trajectory pred = read_kitti_poses(fs::path(f.pred));
  const Trajectory gt = read_kitti_poses(fs::path(f.gt));
  std::vector<MetricRow> rows;
  rows.push_back({"ate", ate(pred, gt), "m"});

  KittiOptions kitti;
  kitti.stride = f.stride;
  kitti.align = !f.no_align;
  kitti.distances = usable_distances(gt, f.distances);
  if (kitti.distances.size() < f.distances.size()) {
    err << "warning: trajectory too short for some segment lengths; using "
        << kitti.distances.size() << " of " << f.distances.size() << '\n';
  }
  if (!kitti.distances.empty()) {
    const KittiErrors k = kitti_relative_errors(pred, gt, kitti);
    rows.push_back({"t_err", k.t_err, "%"});
    rows.push_back({"r_err", k.r_err, "deg/100m"});
  } else {
    err << "warning: no usable segment length; t_err and r_err omitted\n";
  }
  const RpeResult r = rpe(pred, gt, f.interval, !f.no_align);
  rows.push_back({"rpe_trans", r.trans, "m"});
  rows.push_back({"rpe_rot", r.rot, "deg"});

  if (f.out.empty()) {
    write_metrics_csv(out, rows);
  } else {
    std::ofstream file = open_out(f.out);
    write_metrics_csv(file, rows);
  }
}

void write_toy_csv(std::ostream& o, const OptimResult& r, const SyntheticScene& scene) {
  o << "section,name,value\n";
  for (std::size_t i = 0; i < r.report.loss_history.size(); ++i) {
    o << "iter," << i << ',' << format_double(r.report.loss_history[i]) << '\n';
  }
  const auto row = [&](const char* section, const std::string& name, double v) {
    o << section << ',' << name << ',' << format_double(v) << '\n';
  };
  row("final", "loss", r.report.final_loss);
  row("final", "rotation_error_deg", r.report.error.rotation_deg);
  row("final", "translation_error_rel", r.report.error.translation_relative);
  row("final", "relaxed_steps", r.report.relaxed_steps);
  const auto est = r.state.pose.params();
  const auto truth = scene.true_pose.params();
  for (int k = 0; k < 6; ++k) row("pose", "estimate_" + std::to_string(k), est[k]);
  for (int k = 0; k < 6; ++k) row("pose", "truth_" + std::to_string(k), truth[k]);
  const auto stats = [&](const std::string& prefix, const SigmaStats& s) {
    row("sigma", prefix + "_count", static_cast<double>(s.count));
    row("sigma", prefix + "_median", s.median);
    row("sigma", prefix + "_mean", s.mean);
  };
  stats("dynamic", r.report.sigma_dynamic);
  stats("static", r.report.sigma_static);
}

void run_toy_train(const ToyTrainFlags& f, std::ostream& out) {
  OptimizeOptions options;
  options.objective = f.loss.config();
  options.schedule = f.schedule;
  options.initial_sigma = f.initial_sigma;
  options.bidirectional = f.bidirectional;
  options.average_pairs = f.average_pairs;
  options.joint_depth = f.joint_depth;
  options.validate();

  const SyntheticScene scene = f.scene.make();
  const OptimResult result = optimize(scene, initial_state(scene, options), options);

  if (f.out.empty()) {
    write_toy_csv(out, result, scene);
  } else {
    std::ofstream file = open_out(f.out);
    write_toy_csv(file, result, scene);
  }
  if (!f.dump_dir.empty()) {
    const fs::path dir(f.dump_dir);
    fs::create_directories(dir);
    result.report.sigma_eff.write(dir / "sigma_eff.sfld");
    result.report.residual.write(dir / "residual.sfld");
    scene.dynamic_mask_gt.to_field().write(dir / "dynamic_mask.sfld");
  }
}

void run_loss_map(const LossMapFlags& f, std::ostream& out) {
  const ObjectiveConfig config = f.loss.config();
  require(f.pose.size() == 6, ErrorKind::kInvalidArgument, "--pose takes 6 numbers");
  require(f.sigma > 0.0, ErrorKind::kNonPositiveSigma, "--sigma must be positive");

  const ScalarField image_tgt = ScalarField::read(f.image_tgt);
  const ScalarField image_ref = ScalarField::read(f.image_ref);
  ScalarField depth_tgt = ScalarField::read(f.depth_tgt);
  ScalarField depth_ref = ScalarField::read(f.depth_ref);
  if (f.disparity) {
    depth_tgt = disparity_to_depth(depth_tgt, f.disp_a, f.disp_b);
    depth_ref = disparity_to_depth(depth_ref, f.disp_a, f.disp_b);
  }
  const int w = image_tgt.width();
  const int h = image_tgt.height();
  const ScalarField sigma_tgt =
      f.sigma_tgt.empty() ? ScalarField(w, h, 1, f.sigma) : ScalarField::read(f.sigma_tgt);
  const ScalarField sigma_ref =
      f.sigma_ref.empty() ? ScalarField(w, h, 1, f.sigma) : ScalarField::read(f.sigma_ref);
  const CameraIntrinsics k{f.fx.value_or(w), f.fy.value_or(w), f.cx.value_or(0.5 * (w - 1)),
                           f.cy.value_or(0.5 * (h - 1))};
  const Pose6 pose = Pose6::from_params(std::span<const double, 6>(f.pose.data(), 6));

  const PairFields fields{image_tgt, image_ref, depth_tgt, depth_ref, sigma_tgt, sigma_ref};
  const LossBreakdown b = total_objective(fields, pose, k, config);

  if (f.header) out << "photometric,geometric,smoothness,total,valid_pixels\n";
  out << format_double(b.photometric) << ',' << format_double(b.geometric) << ','
      << format_double(b.smoothness) << ',' << format_double(b.total) << ',' << b.valid_count
      << '\n';
  if (!f.out_dir.empty()) {
    const fs::path dir(f.out_dir);
    fs::create_directories(dir);
    b.photometric_map.write(dir / "photometric.sfld");
    b.geometric_map.write(dir / "geometric.sfld");
    b.smoothness_map.write(dir / "smoothness.sfld");
    b.residual.write(dir / "residual.sfld");
    b.sigma_eff.write(dir / "sigma_eff.sfld");
    b.loss_mask.to_field().write(dir / "loss_mask.sfld");
  }
}

void run_oracle(const OracleFlags& f, std::ostream& out) {
  const std::vector<OracleRow> table = laplace_oracle_table(f.sigmas, f.deltas);
  out << "sigma1,sigma2,delta,closed_var,numeric_var,rel_error,mass\n";
  double max_rel = 0.0;
  double max_mass = 0.0;
  for (const OracleRow& r : table) {
    out << format_double(r.sigma1) << ',' << format_double(r.sigma2) << ','
        << format_double(r.delta) << ',' << format_double(r.closed_variance) << ','
        << format_double(r.numeric_variance) << ',' << format_double(r.relative_error) << ','
        << format_double(r.mass) << '\n';
    max_rel = std::max(max_rel, r.relative_error);
    max_mass = std::max(max_mass, std::abs(r.mass - 1.0));
  }
  out << "max_rel_error," << format_double(max_rel) << '\n';
  out << "max_mass_error," << format_double(max_mass) << '\n';
}

void run_synth(const SynthFlags& f, std::ostream& out) {
  require(!f.out_dir.empty(), ErrorKind::kInvalidArgument, "--out-dir is required");
  const SyntheticScene scene = f.scene.make();
  const fs::path dir(f.out_dir);
  fs::create_directories(dir);
  scene.image_tgt.write(dir / "image_tgt.sfld");
  scene.image_ref.write(dir / "image_ref.sfld");
  scene.depth_tgt.write(dir / "depth_tgt.sfld");
  scene.depth_ref.write(dir / "depth_ref.sfld");
  scene.dynamic_mask_gt.to_field().write(dir / "dynamic_mask.sfld");

  std::ofstream meta = open_out(dir / "scene.csv");
  for (std::ostream* o : {static_cast<std::ostream*>(&meta), &out}) {
    *o << "name,value\n";
    const CameraIntrinsics& k = scene.intrinsics;
    *o << "fx," << format_double(k.fx) << "\nfy," << format_double(k.fy) << "\ncx,"
       << format_double(k.cx) << "\ncy," << format_double(k.cy) << '\n';
    const auto p = scene.true_pose.params();
    for (int i = 0; i < 6; ++i) *o << "pose_" << i << ',' << format_double(p[i]) << '\n';
  }
}

}  // namespace

int run(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Uncertainty-weighted view-synthesis losses, toy pose optimization and "
               "trajectory metrics"};
  app.set_config("--config", "", "INI/TOML file with option defaults (flags override it)");
  app.require_subcommand(1);

  EvalFlags eval;
  auto* eval_cmd = app.add_subcommand("eval", "trajectory metrics for two KITTI pose files");
  eval_cmd->add_option("--pred", eval.pred, "predicted poses")->required();
  eval_cmd->add_option("--gt", eval.gt, "ground-truth poses")->required();
  eval_cmd->add_option("--out", eval.out, "CSV path (default stdout)");
  eval_cmd->add_option("--interval", eval.interval, "RPE frame interval")->capture_default_str();
  eval_cmd->add_option("--stride", eval.stride, "KITTI start-frame stride")->capture_default_str();
  eval_cmd->add_option("--distances", eval.distances, "KITTI segment lengths")
      ->capture_default_str();
  eval_cmd->add_flag("--no-align", eval.no_align, "skip 7-DoF alignment for t_err/r_err/RPE");

  ToyTrainFlags toy;
  auto* toy_cmd = app.add_subcommand("toy-train", "optimize pose and uncertainty on a toy scene");
  toy.scene.add_to(toy_cmd);
  toy.loss.add_to(toy_cmd);
  Schedule& s = toy.schedule;
  toy_cmd->add_option("--steps", s.steps)->capture_default_str();
  toy_cmd->add_option("--lr-rotation", s.lr_rotation)->capture_default_str();
  toy_cmd->add_option("--lr-translation", s.lr_translation)->capture_default_str();
  toy_cmd->add_option("--lr-log-sigma", s.lr_log_sigma)->capture_default_str();
  toy_cmd->add_option("--lr-log-depth", s.lr_log_depth)->capture_default_str();
  toy_cmd->add_option("--final-lr-fraction", s.final_lr_fraction)->capture_default_str();
  toy_cmd->add_option("--empty-mask-patience", s.empty_mask_patience)->capture_default_str();
  toy_cmd->add_option("--initial-sigma", toy.initial_sigma)->capture_default_str();
  toy_cmd->add_flag("--bidirectional", toy.bidirectional,
                    "add the role-swapped pairing (reference as target)");
  toy_cmd->add_flag("--average-pairs", toy.average_pairs, "average the two pairings");
  toy_cmd->add_flag("--joint-depth", toy.joint_depth, "optimize log-depth as well");
  toy_cmd->add_option("--out", toy.out, "CSV path (default stdout)");
  toy_cmd->add_option("--dump-dir", toy.dump_dir, "write sigma/residual maps here");

  LossMapFlags lm;
  auto* lm_cmd = app.add_subcommand("loss-map", "evaluate the objective on supplied fields");
  lm.loss.add_to(lm_cmd);
  lm_cmd->add_option("--image-tgt", lm.image_tgt)->required()->check(CLI::ExistingFile);
  lm_cmd->add_option("--image-ref", lm.image_ref)->required()->check(CLI::ExistingFile);
  lm_cmd->add_option("--depth-tgt", lm.depth_tgt)->required()->check(CLI::ExistingFile);
  lm_cmd->add_option("--depth-ref", lm.depth_ref)->required()->check(CLI::ExistingFile);
  lm_cmd->add_option("--sigma-tgt", lm.sigma_tgt)->check(CLI::ExistingFile);
  lm_cmd->add_option("--sigma-ref", lm.sigma_ref)->check(CLI::ExistingFile);
  lm_cmd->add_option("--sigma", lm.sigma, "constant sigma when no map is given")
      ->capture_default_str();
  lm_cmd->add_option("--pose", lm.pose, "rx ry rz tx ty tz")->expected(6)->required();
  lm_cmd->add_option("--fx", lm.fx, "default: width");
  lm_cmd->add_option("--fy", lm.fy, "default: width");
  lm_cmd->add_option("--cx", lm.cx, "default: (width - 1) / 2");
  lm_cmd->add_option("--cy", lm.cy, "default: (height - 1) / 2");
  lm_cmd->add_flag("--disparity", lm.disparity, "depth inputs hold x in [0, 1]");
  lm_cmd->add_option("--disp-a", lm.disp_a)->capture_default_str();
  lm_cmd->add_option("--disp-b", lm.disp_b)->capture_default_str();
  lm_cmd->add_option("--out-dir", lm.out_dir, "write per-term maps here");
  lm_cmd->add_flag("--header", lm.header, "print a CSV header line");

  OracleFlags oracle;
  auto* oracle_cmd = app.add_subcommand("oracle-check", "closed-form vs numeric variance table");
  oracle_cmd->add_option("--sigmas", oracle.sigmas)->capture_default_str();
  oracle_cmd->add_option("--deltas", oracle.deltas)->capture_default_str();

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "write a synthetic scene to files");
  synth.scene.add_to(synth_cmd);
  synth_cmd->add_option("--out-dir", synth.out_dir)->required();

  std::vector<const char*> argv{"coprou"};
  for (const std::string& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: Usage: " << e.what() << '\n';
    return 2;
  }

  try {
    for (CLI::App* sub : app.get_subcommands()) {
      err << "# " << sub->get_name() << " configuration\n" << sub->config_to_str(true, false);
      if (sub == eval_cmd) run_eval(eval, out, err);
      if (sub == toy_cmd) run_toy_train(toy, out);
      if (sub == lm_cmd) run_loss_map(lm, out);
      if (sub == oracle_cmd) run_oracle(oracle, out);
      if (sub == synth_cmd) run_synth(synth, out);
    }
  } catch (const Error& e) {
    err << "error: " << error_kind_name(e.kind()) << ": " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace coprou
