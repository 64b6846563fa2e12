#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <string>

#include "coprou/error.hpp"
#include "coprou/synthopt.hpp"

namespace coprou {

namespace {

const double kLogDepthMin = std::log(0.1);
const double kLogDepthMax = std::log(100.0);

ScalarField map_exp(const ScalarField& log_field, double lo, double hi, double offset) {
  ScalarField out(log_field.width(), log_field.height());
  auto src = log_field.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = offset + std::exp(std::clamp(src[i], lo, hi));
  return out;
}

ScalarField log_field(const ScalarField& f) {
  ScalarField out(f.width(), f.height());
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] = std::log(f.data()[i]);
  return out;
}

// d/d(log x) of a function of x = offset + exp(log x): multiply by exp(log x).
void chain_exp(ScalarField& grad, const ScalarField& value_grad, const ScalarField& log_field,
               double lo, double hi, double scale) {
  auto g = grad.data();
  auto vg = value_grad.data();
  auto l = log_field.data();
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += scale * vg[i] * std::exp(std::clamp(l[i], lo, hi));
}

class Adam {
 public:
  Adam(std::size_t n, const Schedule& s) : m_(n, 0.0), v_(n, 0.0), s_(s) {}

  void begin_step() {
    ++t_;
    c1_ = 1.0 - std::pow(s_.beta1, t_);
    c2_ = 1.0 - std::pow(s_.beta2, t_);
  }

  // Updates params[0..n) with gradients grads[0..n) at learning rate lr.
  void update(std::span<double> params, std::span<const double> grads, std::size_t offset,
              double lr) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const std::size_t j = offset + i;
      const double g = grads[i];
      m_[j] = s_.beta1 * m_[j] + (1.0 - s_.beta1) * g;
      v_[j] = s_.beta2 * v_[j] + (1.0 - s_.beta2) * g * g;
      params[i] -= lr * (m_[j] / c1_) / (std::sqrt(v_[j] / c2_) + s_.epsilon);
    }
  }

 private:
  std::vector<double> m_;
  std::vector<double> v_;
  Schedule s_;
  int t_ = 0;
  double c1_ = 1.0;
  double c2_ = 1.0;
};

void clamp_field(ScalarField& f, double lo, double hi) {
  for (double& v : f.data()) v = std::clamp(v, lo, hi);
}

SigmaStats sigma_stats(std::vector<double> values) {
  SigmaStats s;
  s.count = values.size();
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const std::size_t mid = values.size() / 2;
  s.median = values.size() % 2 == 1 ? values[mid] : 0.5 * (values[mid - 1] + values[mid]);
  return s;
}

}  // namespace

void Schedule::validate() const {
  require(steps >= 0, ErrorKind::kInvalidArgument, "step count must be nonnegative");
  require(lr_rotation >= 0.0 && lr_translation >= 0.0 && lr_log_sigma >= 0.0 &&
              lr_log_depth >= 0.0,
          ErrorKind::kInvalidArgument, "learning rates must be nonnegative");
  require(final_lr_fraction > 0.0 && final_lr_fraction <= 1.0, ErrorKind::kInvalidArgument,
          "final learning-rate fraction must lie in (0, 1]");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0 && epsilon > 0.0,
          ErrorKind::kInvalidArgument, "invalid Adam constants");
  require(empty_mask_patience >= 0, ErrorKind::kInvalidArgument,
          "empty-mask patience must be nonnegative");
}

void OptimizeOptions::validate() const {
  objective.validate();
  schedule.validate();
  require(initial_sigma > 0.0, ErrorKind::kInvalidArgument, "initial sigma must be positive");
  require(log_sigma_min < log_sigma_max, ErrorKind::kInvalidArgument,
          "log-sigma range is empty");
}

ScalarField sigma_from_log(const ScalarField& log_sigma, const OptimizeOptions& options) {
  return map_exp(log_sigma, options.log_sigma_min, options.log_sigma_max,
                 options.objective.sigma_floor);
}

OptimState initial_state(const SyntheticScene& scene, const OptimizeOptions& options) {
  options.validate();
  const int w = scene.image_tgt.width();
  const int h = scene.image_tgt.height();
  const double excess = options.initial_sigma - options.objective.sigma_floor;
  require(excess > 0.0, ErrorKind::kInvalidArgument, "initial sigma must exceed the floor");
  const double l0 = std::clamp(std::log(excess), options.log_sigma_min, options.log_sigma_max);
  OptimState s;
  s.log_sigma_tgt = ScalarField(w, h, 1, l0);
  s.log_sigma_ref = ScalarField(w, h, 1, l0);
  if (options.joint_depth) {
    s.log_depth_tgt = log_field(scene.depth_tgt);
    s.log_depth_ref = log_field(scene.depth_ref);
  }
  return s;
}

ObjectiveEvaluation evaluate_objective(const SyntheticScene& scene, const OptimState& state,
                                       const OptimizeOptions& options, bool with_gradient) {
  const ScalarField sigma_tgt = sigma_from_log(state.log_sigma_tgt, options);
  const ScalarField sigma_ref = sigma_from_log(state.log_sigma_ref, options);
  ScalarField depth_tgt_storage, depth_ref_storage;
  if (options.joint_depth) {
    depth_tgt_storage = map_exp(state.log_depth_tgt, kLogDepthMin, kLogDepthMax, 0.0);
    depth_ref_storage = map_exp(state.log_depth_ref, kLogDepthMin, kLogDepthMax, 0.0);
  }
  const ScalarField& depth_tgt = options.joint_depth ? depth_tgt_storage : scene.depth_tgt;
  const ScalarField& depth_ref = options.joint_depth ? depth_ref_storage : scene.depth_ref;

  const double pair_scale = options.bidirectional && options.average_pairs ? 0.5 : 1.0;
  const int w = sigma_tgt.width();
  const int h = sigma_tgt.height();

  ObjectiveEvaluation ev;
  if (with_gradient) {
    ev.log_sigma_tgt_gradient = ScalarField(w, h);
    ev.log_sigma_ref_gradient = ScalarField(w, h);
    if (options.joint_depth) {
      ev.log_depth_tgt_gradient = ScalarField(w, h);
      ev.log_depth_ref_gradient = ScalarField(w, h);
    }
  }

  // Accumulates one pairing; `swapped` marks the reference->target pairing.
  const auto accumulate = [&](const LossBreakdown& b, const ObjectiveGradient& g, bool swapped) {
    ev.loss += pair_scale * b.total;
    if (!with_gradient) return;
    for (int k = 0; k < 6; ++k) ev.pose_gradient[k] += pair_scale * g.pose[k];
    ScalarField& gs_tgt = swapped ? ev.log_sigma_ref_gradient : ev.log_sigma_tgt_gradient;
    ScalarField& gs_ref = swapped ? ev.log_sigma_tgt_gradient : ev.log_sigma_ref_gradient;
    const ScalarField& ls_tgt = swapped ? state.log_sigma_ref : state.log_sigma_tgt;
    const ScalarField& ls_ref = swapped ? state.log_sigma_tgt : state.log_sigma_ref;
    chain_exp(gs_tgt, g.sigma_tgt, ls_tgt, options.log_sigma_min, options.log_sigma_max,
              pair_scale);
    chain_exp(gs_ref, g.sigma_ref, ls_ref, options.log_sigma_min, options.log_sigma_max,
              pair_scale);
    if (options.joint_depth) {
      ScalarField& gd_tgt = swapped ? ev.log_depth_ref_gradient : ev.log_depth_tgt_gradient;
      ScalarField& gd_ref = swapped ? ev.log_depth_tgt_gradient : ev.log_depth_ref_gradient;
      const ScalarField& ld_tgt = swapped ? state.log_depth_ref : state.log_depth_tgt;
      const ScalarField& ld_ref = swapped ? state.log_depth_tgt : state.log_depth_ref;
      chain_exp(gd_tgt, g.depth_tgt, ld_tgt, kLogDepthMin, kLogDepthMax, pair_scale);
      chain_exp(gd_ref, g.depth_ref, ld_ref, kLogDepthMin, kLogDepthMax, pair_scale);
    }
  };

  ObjectiveGradient grad;
  ObjectiveGradient* grad_ptr = with_gradient ? &grad : nullptr;
  const PairFields forward{scene.image_tgt, scene.image_ref, depth_tgt,
                           depth_ref,       sigma_tgt,       sigma_ref};
  ev.forward = total_objective(forward, state.pose, scene.intrinsics, options.objective, grad_ptr,
                               PoseDirection::kForward);
  accumulate(ev.forward, grad, false);
  if (options.bidirectional) {
    const PairFields backward{scene.image_ref, scene.image_tgt, depth_ref,
                              depth_tgt,       sigma_ref,       sigma_tgt};
    const LossBreakdown b = total_objective(backward, state.pose, scene.intrinsics,
                                            options.objective, grad_ptr, PoseDirection::kInverse);
    accumulate(b, grad, true);
  }
  return ev;
}

PoseError pose_error(const Pose6& estimate, const Pose6& truth) {
  const Mat3 r_err = so3_exp(estimate.rotation).transpose() * so3_exp(truth.rotation);
  PoseError e;
  e.rotation_deg = rotation_angle(r_err) * 180.0 / std::numbers::pi;
  const double t_norm = truth.translation.norm();
  const double diff = (estimate.translation - truth.translation).norm();
  e.translation_relative = t_norm > 0.0 ? diff / t_norm : diff;
  return e;
}

OptimResult optimize(const SyntheticScene& scene, OptimState init, const OptimizeOptions& options) {
  options.validate();
  const Schedule& sched = options.schedule;
  require(init.log_sigma_tgt.same_grid(scene.image_tgt) &&
              init.log_sigma_ref.same_grid(scene.image_tgt),
          ErrorKind::kDimensionMismatch, "optimizer state does not match the scene");
  if (options.joint_depth) {
    require(init.log_depth_tgt.same_grid(scene.image_tgt) &&
                init.log_depth_ref.same_grid(scene.image_tgt),
            ErrorKind::kDimensionMismatch, "joint-depth mode needs log-depth fields");
  }

  OptimizeOptions relaxed = options;
  relaxed.objective.use_auto_mask = false;

  OptimState state = std::move(init);
  const std::size_t npix = state.log_sigma_tgt.data().size();
  const std::size_t nparams = 6 + 2 * npix + (options.joint_depth ? 2 * npix : 0);
  Adam adam(nparams, sched);

  OptimReport report;
  OptimState best;
  double best_loss = std::numeric_limits<double>::infinity();
  int consecutive_empty = 0;
  const auto consider = [&](const OptimState& s, double loss) {
    if (loss < best_loss) {
      best_loss = loss;
      best = s;
    }
  };

  for (int it = 0; it < sched.steps; ++it) {
    ObjectiveEvaluation ev;
    bool was_relaxed = false;
    try {
      ev = evaluate_objective(scene, state, options, true);
      consecutive_empty = 0;
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kEmptyValidSet) throw;
      if (++consecutive_empty > sched.empty_mask_patience) {
        throw Error(ErrorKind::kEmptyValidSet,
                    "auto-mask rejected every pixel for " + std::to_string(consecutive_empty) +
                        " consecutive iterations (step " + std::to_string(it) + ")");
      }
      ev = evaluate_objective(scene, state, relaxed, true);
      was_relaxed = true;
      ++report.relaxed_steps;
    }
    if (!std::isfinite(ev.loss)) {
      std::ostringstream msg;
      msg << "non-finite loss at step " << it << " (pose rotation " << state.pose.rotation.transpose()
          << ", translation " << state.pose.translation.transpose() << ")";
      throw Error(ErrorKind::kNonFiniteLoss, msg.str());
    }
    if (!was_relaxed) consider(state, ev.loss);
    state.loss_history.push_back(ev.loss);

    const double decay =
        sched.steps > 1 ? std::pow(sched.final_lr_fraction, static_cast<double>(it) / (sched.steps - 1))
                        : 1.0;
    adam.begin_step();
    auto pose = state.pose.params();
    const auto& pg = ev.pose_gradient;
    adam.update(std::span(pose).first(3), std::span(pg).first(3), 0, sched.lr_rotation * decay);
    adam.update(std::span(pose).last(3), std::span(pg).last(3), 3, sched.lr_translation * decay);
    state.pose = Pose6::from_params(pose);
    adam.update(state.log_sigma_tgt.data(), ev.log_sigma_tgt_gradient.data(), 6,
                sched.lr_log_sigma * decay);
    adam.update(state.log_sigma_ref.data(), ev.log_sigma_ref_gradient.data(), 6 + npix,
                sched.lr_log_sigma * decay);
    clamp_field(state.log_sigma_tgt, options.log_sigma_min, options.log_sigma_max);
    clamp_field(state.log_sigma_ref, options.log_sigma_min, options.log_sigma_max);
    if (options.joint_depth) {
      adam.update(state.log_depth_tgt.data(), ev.log_depth_tgt_gradient.data(), 6 + 2 * npix,
                  sched.lr_log_depth * decay);
      adam.update(state.log_depth_ref.data(), ev.log_depth_ref_gradient.data(), 6 + 3 * npix,
                  sched.lr_log_depth * decay);
      clamp_field(state.log_depth_tgt, kLogDepthMin, kLogDepthMax);
      clamp_field(state.log_depth_ref, kLogDepthMin, kLogDepthMax);
    }
    ++state.step;
  }

  try {
    consider(state, evaluate_objective(scene, state, options, false).loss);
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kEmptyValidSet || !std::isfinite(best_loss)) throw;
  }

  OptimResult result;
  result.state = std::move(best);
  result.state.step = state.step;
  result.state.loss_history = state.loss_history;

  const ObjectiveEvaluation final_eval = evaluate_objective(scene, result.state, options, false);
  report.final_loss = final_eval.loss;
  report.loss_history = state.loss_history;
  report.error = pose_error(result.state.pose, scene.true_pose);
  report.sigma_eff = final_eval.forward.sigma_eff;
  report.residual = final_eval.forward.residual;
  std::vector<double> dynamic_sigma, static_sigma;
  const ValidityMask& valid = final_eval.forward.synthesized.mask;
  for (int y = 0; y < valid.height(); ++y) {
    for (int x = 0; x < valid.width(); ++x) {
      if (!valid.at(x, y)) continue;
      (scene.dynamic_mask_gt.at(x, y) ? dynamic_sigma : static_sigma)
          .push_back(report.sigma_eff.at(x, y));
    }
  }
  report.sigma_dynamic = sigma_stats(std::move(dynamic_sigma));
  report.sigma_static = sigma_stats(std::move(static_sigma));
  result.report = std::move(report);
  return result;
}

}  // namespace coprou
