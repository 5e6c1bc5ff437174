#include "teledex/human_motion.hpp"

#include "teledex/errors.hpp"

#include <cmath>
#include <numbers>

namespace teledex {

GraspMotion default_grasp(const HandModel& human, double closure) {
  GraspMotion m;
  m.open = human.lower_limits();
  m.closed = m.open + closure * (human.upper_limits() - m.open);
  return m;
}

double flexion(const GraspMotion& motion, int finger, double t) {
  if (!(motion.period > 0.0)) {
    throw ValidationError("grasp motion: period must be positive");
  }
  const double lag = finger >= 0 && static_cast<std::size_t>(finger) < motion.finger_lag.size()
                         ? motion.finger_lag[static_cast<std::size_t>(finger)]
                         : 0.0;
  const double angle = 2.0 * std::numbers::pi * (t / motion.period - lag) + motion.phase;
  return 0.5 * (1.0 - std::cos(angle));
}

JointVector human_pose(const HandModel& human, const GraspMotion& motion, double t) {
  check_dimension(human, motion.open);
  check_dimension(human, motion.closed);
  JointVector theta = motion.open;
  for (const auto& finger : human.fingers()) {
    const double f = flexion(motion, finger.slot, t);
    const auto n = static_cast<Eigen::Index>(finger.joints.size());
    const auto first = static_cast<Eigen::Index>(finger.first_joint);
    theta.segment(first, n) =
        motion.open.segment(first, n) + f * (motion.closed.segment(first, n) -
                                             motion.open.segment(first, n));
  }
  return theta;
}

HumanHandFrame human_frame(const HandModel& human, const GraspMotion& motion, double t) {
  HumanHandFrame frame;
  frame.timestamp = t;
  frame.points = forward_keypoints(human, human_pose(human, motion, t));
  return frame;
}

std::vector<HumanHandFrame> grasp_trajectory(const HandModel& human, const GraspMotion& motion,
                                             std::size_t count, double dt, double t0) {
  std::vector<HumanHandFrame> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back(human_frame(human, motion, t0 + static_cast<double>(k) * dt));
  }
  return out;
}

}  // namespace teledex
