#pragma once

// Synthetic operator hand motion: every finger of a human skeleton model
// flexes sinusoidally between an open and a closed pose.

#include "teledex/kinematics.hpp"
#include "teledex/retarget.hpp"

#include <vector>

namespace teledex {

struct GraspMotion {
  JointVector open;
  JointVector closed;
  double period = 4.0;  // seconds
  /// Per-finger lag as a fraction of the period, indexed by finger slot.
  std::vector<double> finger_lag = {0.0, 0.05, 0.10, 0.15, 0.20};
  double phase = 0.0;  // radians, shared by all fingers
};

/// Open = lower limits, closed = `closure` of the way to the upper limits.
GraspMotion default_grasp(const HandModel& human, double closure = 0.8);

/// Flexion fraction in [0, 1] for one finger at time t.
double flexion(const GraspMotion& motion, int finger, double t);

JointVector human_pose(const HandModel& human, const GraspMotion& motion, double t);
HumanHandFrame human_frame(const HandModel& human, const GraspMotion& motion, double t);

/// `count` frames at t = t0, t0 + dt, ...
std::vector<HumanHandFrame> grasp_trajectory(const HandModel& human, const GraspMotion& motion,
                                             std::size_t count, double dt, double t0 = 0.0);

}  // namespace teledex
