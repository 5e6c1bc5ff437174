#include "teledex/solver.hpp"

#include "teledex/errors.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace teledex {

namespace {

struct FingerPose {
  const FingerChain* chain = nullptr;
  std::vector<RigidTransform> frames;
};

// Per-finger frames for every finger the model has, computed once per evaluation.
std::vector<FingerPose> pose_fingers(const HandModel& model, const JointVector& theta) {
  std::vector<FingerPose> poses;
  poses.reserve(model.fingers().size());
  for (const auto& f : model.fingers()) {
    poses.push_back({&f, finger_frames(f, theta)});
  }
  return poses;
}

const FingerPose& pose_of(const std::vector<FingerPose>& poses, int slot) {
  for (const auto& p : poses) {
    if (p.chain->slot == slot) return p;
  }
  throw MissingError("no finger " + std::string(finger_name(slot)) + " on model");
}

// Position of a keypoint and, optionally, its 3 x dof Jacobian block.
Vec3 keypoint_state(const FingerPose& pose, int point, Eigen::Ref<Eigen::MatrixXd> jac,
                    bool want_jacobian) {
  const auto& kp = pose.chain->keypoints[static_cast<std::size_t>(point)];
  const Vec3 position = pose.frames[kp.link].apply(kp.offset);
  if (want_jacobian) {
    jac.setZero();
    for (std::size_t k = 0; k <= kp.link; ++k) {
      const Vec3 axis = pose.frames[k].rotation * pose.chain->joints[k].axis;
      jac.col(static_cast<Eigen::Index>(pose.chain->first_joint + k)) =
          axis.cross(position - pose.frames[k].translation);
    }
  }
  return position;
}

}  // namespace

RetargetProblem::RetargetProblem(const HandModel& model, const CalibrationProfile& profile,
                                 const RetargetConfig& config, const HumanHandFrame& frame,
                                 const JointVector& theta_prev)
    : RetargetProblem(model, profile, config, frame, transform_keypoints(profile, frame),
                      theta_prev) {}

RetargetProblem::RetargetProblem(const HandModel& model, const CalibrationProfile& profile,
                                 const RetargetConfig& config, const HumanHandFrame& frame,
                                 KeypointMap pprime, const JointVector& theta_prev)
    : model_(model), config_(config), theta_prev_(theta_prev), pprime_(std::move(pprime)) {
  config_.validate();
  check_dimension(model_, theta_prev_);

  if (config_.alpha_align > 0.0) {
    align_keys_ = resolve_keypoints(model_, config_);
    for (const auto& key : align_keys_) {
      auto it = pprime_.find(key);
      if (it == pprime_.end()) {
        throw MissingError("transformed frame is missing keypoint " + to_string(key));
      }
      align_targets_.push_back(it->second);
    }
  }
  if (config_.alpha_couple > 0.0) {
    coupled_ = resolve_coupled_fingers(model_, config_);
    thumb_tip_ = model_.fingertip_key(kThumb);
    const KeypointMap& human = config_.coupling_uses_transformed ? pprime_ : frame.points;
    for (int f : coupled_) {
      weights_[f] = coupling_weight(profile, frame, f, config_.sigma, config_.tau);
      human_relative_.push_back(
          relative_fingertip_vector(human, thumb_tip_, model_.fingertip_key(f)));
    }
  }
  residual_size_ = 3 * static_cast<Eigen::Index>(align_keys_.size()) +
                   3 * static_cast<Eigen::Index>(coupled_.size()) +
                   (config_.alpha_smooth > 0.0 ? static_cast<Eigen::Index>(model_.dof()) : 0);
}

void RetargetProblem::evaluate(const JointVector& theta, Eigen::VectorXd& residual,
                               Eigen::MatrixXd* jacobian) const {
  check_dimension(model_, theta);
  const auto dof = static_cast<Eigen::Index>(model_.dof());
  const bool want_j = jacobian != nullptr;
  residual.resize(residual_size_);
  if (want_j) jacobian->setZero(residual_size_, dof);

  const auto poses = pose_fingers(model_, theta);
  Eigen::MatrixXd block(3, dof);
  Eigen::Index row = 0;

  const double w_align = std::sqrt(config_.alpha_align);
  for (std::size_t k = 0; k < align_keys_.size(); ++k) {
    const auto& key = align_keys_[k];
    const Vec3 p = keypoint_state(pose_of(poses, key.finger), key.point, block, want_j);
    residual.segment<3>(row) = w_align * (p - align_targets_[k]);
    if (want_j) jacobian->middleRows(row, 3) = w_align * block;
    row += 3;
  }

  if (!coupled_.empty()) {
    Eigen::MatrixXd thumb_block(3, dof);
    const Vec3 thumb =
        keypoint_state(pose_of(poses, kThumb), thumb_tip_.point, thumb_block, want_j);
    for (std::size_t k = 0; k < coupled_.size(); ++k) {
      const int f = coupled_[k];
      const double w = std::sqrt(config_.alpha_couple * weights_.at(f));
      const auto tip = model_.fingertip_key(f);
      const Vec3 p = keypoint_state(pose_of(poses, f), tip.point, block, want_j);
      residual.segment<3>(row) = w * ((p - thumb) - human_relative_[k]);
      if (want_j) jacobian->middleRows(row, 3) = w * (block - thumb_block);
      row += 3;
    }
  }

  if (config_.alpha_smooth > 0.0) {
    const double w = std::sqrt(config_.alpha_smooth);
    residual.segment(row, dof) = w * (theta - theta_prev_);
    if (want_j) jacobian->block(row, 0, dof, dof).diagonal().setConstant(w);
  }
}

double RetargetProblem::cost(const JointVector& theta) const {
  Eigen::VectorXd r;
  evaluate(theta, r, nullptr);
  return r.squaredNorm();
}

CostBreakdown RetargetProblem::breakdown(const JointVector& theta) const {
  Eigen::VectorXd r;
  evaluate(theta, r, nullptr);
  CostBreakdown out;
  const auto n_align = 3 * static_cast<Eigen::Index>(align_keys_.size());
  const auto n_couple = 3 * static_cast<Eigen::Index>(coupled_.size());
  if (config_.alpha_align > 0.0) {
    out.align = r.head(n_align).squaredNorm() / config_.alpha_align;
  } else {
    out.align = align_cost(model_, theta, pprime_, resolve_keypoints(model_, config_));
  }
  if (config_.alpha_couple > 0.0) {
    out.couple = r.segment(n_align, n_couple).squaredNorm() / config_.alpha_couple;
  }
  out.smooth = smooth_cost(theta, theta_prev_);
  out.total = r.squaredNorm();
  return out;
}

JointVector RetargetProblem::gradient(const JointVector& theta) const {
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  evaluate(theta, r, &jac);
  return 2.0 * jac.transpose() * r;
}

RetargetResult solve_retarget(const HandModel& model, const CalibrationProfile& profile,
                              const RetargetConfig& config, const HumanHandFrame& frame,
                              const JointVector& theta_prev) {
  check_dimension(model, theta_prev);
  if (!frame.all_finite()) {
    throw NonFiniteError("human frame at t=" + std::to_string(frame.timestamp) +
                         " contains non-finite keypoints");
  }
  if (!theta_prev.allFinite()) {
    throw NonFiniteError("warm start contains non-finite joint values");
  }

  RetargetResult result;
  result.theta = clamp_to_limits(model, theta_prev);

  // Pure smoothing is minimized by the warm start itself.
  if (config.alpha_align == 0.0 && config.alpha_couple == 0.0) {
    config.validate();
    result.report.converged = true;
    result.report.breakdown.smooth = smooth_cost(result.theta, theta_prev);
    result.report.breakdown.total = config.alpha_smooth * result.report.breakdown.smooth;
    result.report.final_cost = result.report.breakdown.total;
    result.report.cost_history.push_back(result.report.final_cost);
    return result;
  }

  const RetargetProblem problem(model, profile, config, frame, theta_prev);
  const auto& settings = config.solver;
  const JointVector lower = model.lower_limits();
  const JointVector upper = model.upper_limits();
  const auto dof = static_cast<Eigen::Index>(model.dof());

  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  JointVector& theta = result.theta;
  problem.evaluate(theta, r, &jac);
  double cost = r.squaredNorm();
  if (!std::isfinite(cost)) {
    throw NonFiniteError("retarget cost is not finite at the warm start");
  }
  auto& report = result.report;
  report.cost_history.push_back(cost);

  double damping = 1e-4;
  bool converged = false;
  int iter = 0;
  for (; iter < settings.max_iters; ++iter) {
    const Eigen::VectorXd g = jac.transpose() * r;

    // Joints resting on a limit whose descent direction leaves the box stay put.
    std::vector<Eigen::Index> free;
    for (Eigen::Index k = 0; k < dof; ++k) {
      const bool pinned = (theta[k] <= lower[k] && g[k] > 0.0) ||
                          (theta[k] >= upper[k] && g[k] < 0.0);
      if (!pinned) free.push_back(k);
    }
    double g_free_max = 0.0;
    for (auto k : free) g_free_max = std::max(g_free_max, std::abs(g[k]));
    if (free.empty() || g_free_max <= 1e-15) {
      converged = true;
      break;
    }

    const auto n = static_cast<Eigen::Index>(free.size());
    Eigen::MatrixXd jf(jac.rows(), n);
    Eigen::VectorXd gf(n);
    for (Eigen::Index c = 0; c < n; ++c) {
      jf.col(c) = jac.col(free[static_cast<std::size_t>(c)]);
      gf[c] = g[free[static_cast<std::size_t>(c)]];
    }
    Eigen::MatrixXd h = jf.transpose() * jf;
    const Eigen::VectorXd diag = h.diagonal();
    for (Eigen::Index c = 0; c < n; ++c) h(c, c) += damping * (diag[c] + 1e-12);
    Eigen::VectorXd delta_free = h.ldlt().solve(-gf);
    if (!delta_free.allFinite()) {
      throw NonFiniteError("retarget step is not finite");
    }
    const double biggest = delta_free.cwiseAbs().maxCoeff();
    if (biggest > settings.max_step_radians) {
      delta_free *= settings.max_step_radians / biggest;
    }

    JointVector trial = theta;
    for (Eigen::Index c = 0; c < n; ++c) trial[free[static_cast<std::size_t>(c)]] += delta_free[c];
    trial = trial.cwiseMax(lower).cwiseMin(upper);

    Eigen::VectorXd r_trial;
    problem.evaluate(trial, r_trial, nullptr);
    const double trial_cost = r_trial.squaredNorm();
    if (!std::isfinite(trial_cost)) {
      throw NonFiniteError("retarget cost became non-finite during the solve");
    }

    if (trial_cost < cost) {
      const double decrease = cost - trial_cost;
      const double step = (trial - theta).norm();
      theta = trial;
      cost = trial_cost;
      report.cost_history.push_back(cost);
      problem.evaluate(theta, r, &jac);
      damping = std::max(damping * 0.1, 1e-12);
      if (step < settings.step_tolerance || decrease < settings.cost_tolerance) {
        ++iter;
        converged = true;
        break;
      }
    } else {
      damping *= 10.0;
      if (damping > 1e8) {
        // No descent direction left inside the box: a stationary point.
        ++iter;
        converged = true;
        break;
      }
    }
  }

  report.iterations = iter;
  report.converged = converged;
  report.final_cost = cost;
  report.breakdown = problem.breakdown(theta);
  return result;
}

Retargeter::Retargeter(std::shared_ptr<const HandModel> model, CalibrationProfile profile,
                       RetargetConfig config, JointVector initial)
    : model_(std::move(model)), profile_(std::move(profile)), config_(std::move(config)) {
  if (!model_) {
    throw ValidationError("retargeter needs a hand model");
  }
  config_.validate();
  profile_.validate();
  last_ = clamp_to_limits(*model_, initial);
}

RetargetResult Retargeter::step(const HumanHandFrame& frame) {
  auto result = solve_retarget(*model_, profile_, config_, frame, last_);
  last_ = result.theta;
  return result;
}

}  // namespace teledex
