#pragma once

#include "teledex/retarget.hpp"

#include <Eigen/Core>

#include <memory>
#include <vector>

namespace teledex {

/// The total retargeting cost for one human frame written as a stacked
/// least-squares residual r(theta), so that cost = r . r:
///
///   sqrt(a_align)           * (F(theta)_ij - p'_ij)        for (i, j) in K
///   sqrt(a_couple * beta_i) * (R_robot,i(theta) - R_human,i) for i in I
///   sqrt(a_smooth)          * (theta - theta_prev)
///
/// beta_i depends only on the human frame and is fixed at construction.
class RetargetProblem {
public:
  RetargetProblem(const HandModel& model, const CalibrationProfile& profile,
                  const RetargetConfig& config, const HumanHandFrame& frame,
                  const JointVector& theta_prev);
  /// Uses an already transformed frame instead of deriving it from the profile.
  RetargetProblem(const HandModel& model, const CalibrationProfile& profile,
                  const RetargetConfig& config, const HumanHandFrame& frame,
                  KeypointMap pprime, const JointVector& theta_prev);

  Eigen::Index residual_size() const { return residual_size_; }
  const HandModel& model() const { return model_; }
  const JointVector& theta_prev() const { return theta_prev_; }
  const KeypointMap& pprime() const { return pprime_; }
  const std::map<int, double>& coupling_weights() const { return weights_; }

  /// Fills the residual and, when non-null, its Jacobian (residual_size x dof).
  void evaluate(const JointVector& theta, Eigen::VectorXd& residual,
                Eigen::MatrixXd* jacobian) const;

  double cost(const JointVector& theta) const;
  CostBreakdown breakdown(const JointVector& theta) const;
  JointVector gradient(const JointVector& theta) const;

private:
  const HandModel& model_;
  RetargetConfig config_;
  JointVector theta_prev_;
  KeypointMap pprime_;
  std::vector<KeypointKey> align_keys_;
  std::vector<Vec3> align_targets_;
  std::vector<int> coupled_;
  std::vector<Vec3> human_relative_;
  std::map<int, double> weights_;
  KeypointKey thumb_tip_;
  Eigen::Index residual_size_ = 0;
};

struct SolveReport {
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  CostBreakdown breakdown;
  /// Cost at the start point followed by every accepted iterate.
  std::vector<double> cost_history;
};

struct RetargetResult {
  JointVector theta;
  SolveReport report;
};

/// Projected damped Gauss-Newton from the warm start theta_prev. Joints
/// pinned at a limit with the gradient pointing outward are held fixed for
/// the step; every trial point is projected onto the limit box.
RetargetResult solve_retarget(const HandModel& model, const CalibrationProfile& profile,
                              const RetargetConfig& config, const HumanHandFrame& frame,
                              const JointVector& theta_prev);

/// One solver per hand. Holds the previous solution as the warm start.
class Retargeter {
public:
  Retargeter(std::shared_ptr<const HandModel> model, CalibrationProfile profile,
             RetargetConfig config, JointVector initial);

  /// Throws NonFiniteError for corrupt frames and keeps the previous solution.
  RetargetResult step(const HumanHandFrame& frame);

  const JointVector& last() const { return last_; }
  const HandModel& model() const { return *model_; }
  const CalibrationProfile& profile() const { return profile_; }
  const RetargetConfig& config() const { return config_; }

private:
  std::shared_ptr<const HandModel> model_;
  CalibrationProfile profile_;
  RetargetConfig config_;
  JointVector last_;
};

}  // namespace teledex
