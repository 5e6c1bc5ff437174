#include "teledex/retarget.hpp"

#include "teledex/errors.hpp"
#include "teledex/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace teledex {

namespace {

constexpr double kMinSegmentLength = 1e-9;

const Vec3& lookup(const KeypointMap& points, const KeypointKey& key, const char* what) {
  auto it = points.find(key);
  if (it == points.end()) {
    throw MissingError(std::string(what) + " is missing keypoint " + to_string(key));
  }
  return it->second;
}

}  // namespace

bool HumanHandFrame::all_finite() const {
  if (!std::isfinite(timestamp)) return false;
  return std::all_of(points.begin(), points.end(),
                     [](const auto& kv) { return kv.second.allFinite(); });
}

const Vec3& HumanHandFrame::at(const KeypointKey& key) const {
  return lookup(points, key, "human frame");
}

int CalibrationProfile::fingertip_point(int finger) const {
  int tip = -1;
  for (const auto& [key, s] : scale) {
    if (key.finger == finger) tip = std::max(tip, key.point + 1);
  }
  if (tip < 0) {
    throw MissingError("calibration profile has no segments for finger " +
                       std::string(finger_name(finger)));
  }
  return tip;
}

void CalibrationProfile::validate() const {
  if (!theta0.allFinite()) {
    throw ValidationError("calibration profile: theta0 is not finite");
  }
  for (const auto& [key, s] : scale) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw ValidationError("calibration profile: scale " + to_string(key) +
                            " must be positive and finite");
    }
  }
  for (const auto& [finger, lo] : rho_min) {
    auto it = rho_max.find(finger);
    if (it == rho_max.end()) {
      throw ValidationError("calibration profile: rho_max missing for finger " +
                            std::string(finger_name(finger)));
    }
    if (!(lo < it->second)) {
      throw ValidationError("calibration profile: rho_min must be below rho_max for finger " +
                            std::string(finger_name(finger)));
    }
  }
  if (rho_max.size() != rho_min.size()) {
    throw ValidationError("calibration profile: rho_min and rho_max cover different fingers");
  }
}

void RetargetConfig::validate() const {
  for (double a : {alpha_align, alpha_couple, alpha_smooth}) {
    if (!(a >= 0.0) || !std::isfinite(a)) {
      throw ValidationError("retarget config: weights must be finite and nonnegative");
    }
  }
  if (!(alpha_align > 0.0 || alpha_couple > 0.0 || alpha_smooth > 0.0)) {
    throw ValidationError("retarget config: at least one weight must be positive");
  }
  if (!std::isfinite(sigma) || !(tau >= 0.0 && tau <= 1.0)) {
    throw ValidationError("retarget config: sigma must be finite and tau in [0, 1]");
  }
  if (keypoints && keypoints->empty()) {
    throw ValidationError("retarget config: keypoint set K is empty");
  }
  if (coupled_fingers) {
    for (int f : *coupled_fingers) {
      if (f == kThumb || f < 0 || f >= kFingerSlots) {
        throw ValidationError("retarget config: coupled fingers must be non-thumb fingers");
      }
    }
  }
  if (solver.max_iters < 0 || !(solver.step_tolerance >= 0.0) ||
      !(solver.cost_tolerance >= 0.0) || !(solver.max_step_radians > 0.0)) {
    throw ValidationError("retarget config: invalid solver settings");
  }
}

std::vector<KeypointKey> resolve_keypoints(const HandModel& model, const RetargetConfig& config) {
  if (config.keypoints) {
    for (const auto& key : *config.keypoints) {
      if (!model.has_keypoint(key)) {
        throw MissingError("retarget config: keypoint " + to_string(key) +
                           " is not on model '" + model.name() + "'");
      }
    }
    return *config.keypoints;
  }
  std::vector<KeypointKey> out;
  for (const auto& f : model.fingers()) {
    for (const auto& kp : f.keypoints) {
      if (kp.role == KeypointRole::pip || kp.role == KeypointRole::dip ||
          kp.role == KeypointRole::fingertip) {
        out.push_back({f.slot, kp.id});
      }
    }
  }
  return out;
}

std::vector<int> resolve_coupled_fingers(const HandModel& model, const RetargetConfig& config) {
  if (config.coupled_fingers) {
    for (int f : *config.coupled_fingers) {
      if (!model.has_finger(f)) {
        throw MissingError("retarget config: coupled finger " + std::string(finger_name(f)) +
                           " is not on model '" + model.name() + "'");
      }
    }
    return *config.coupled_fingers;
  }
  std::vector<int> out;
  for (const auto& f : model.fingers()) {
    if (f.slot != kThumb) out.push_back(f.slot);
  }
  return out;
}

CalibrationProfile calibrate(const HandModel& model, const JointVector& theta0,
                             const HumanHandFrame& static_frame,
                             const std::vector<HumanHandFrame>& motion_frames) {
  check_dimension(model, theta0);
  if (!theta0.allFinite()) {
    throw ValidationError("calibrate: theta0 is not finite");
  }
  CalibrationProfile profile;
  profile.theta0 = theta0;
  profile.pbar = static_frame;

  const auto robot = forward_keypoints(model, theta0);
  for (const auto& f : model.fingers()) {
    for (std::size_t k = 0; k + 1 < f.keypoints.size(); ++k) {
      const KeypointKey near{f.slot, f.keypoints[k].id};
      const KeypointKey far{f.slot, f.keypoints[k + 1].id};
      const double robot_len = (robot.at(far) - robot.at(near)).norm();
      const double human_len = (static_frame.at(far) - static_frame.at(near)).norm();
      if (!(human_len > kMinSegmentLength)) {
        throw DegenerateCalibrationError("calibrate: human segment " + to_string(near) + " -> " +
                                         to_string(far) + " has zero length");
      }
      if (!(robot_len > kMinSegmentLength)) {
        throw DegenerateCalibrationError("calibrate: robot segment " + to_string(near) + " -> " +
                                         to_string(far) + " has zero length");
      }
      profile.scale[near] = robot_len / human_len;
    }
    const auto mcp = model.mcp_key(f.slot);
    profile.root_offset[f.slot] = robot.at(mcp) - static_frame.at(mcp);
  }

  if (!motion_frames.empty()) {
    const auto thumb_tip = model.fingertip_key(kThumb);
    for (const auto& f : model.fingers()) {
      if (f.slot == kThumb) continue;
      const auto tip = model.fingertip_key(f.slot);
      double lo = std::numeric_limits<double>::infinity();
      double hi = -std::numeric_limits<double>::infinity();
      for (const auto& frame : motion_frames) {
        const double d = (frame.at(tip) - frame.at(thumb_tip)).norm();
        lo = std::min(lo, d);
        hi = std::max(hi, d);
      }
      if (!(hi - lo > 0.0) || !std::isfinite(hi - lo)) {
        throw DegenerateCalibrationError(
            "calibrate: thumb-" + std::string(finger_name(f.slot)) +
            " distance never changes over the calibration motion (rho_min = rho_max)");
      }
      profile.rho_min[f.slot] = lo;
      profile.rho_max[f.slot] = hi;
    }
  }
  profile.validate();
  return profile;
}

KeypointMap transform_keypoints(const CalibrationProfile& profile, const HumanHandFrame& frame) {
  std::set<int> fingers;
  for (const auto& [key, s] : profile.scale) fingers.insert(key.finger);

  KeypointMap out;
  for (int finger : fingers) {
    const int tip = profile.fingertip_point(finger);
    auto offset_it = profile.root_offset.find(finger);
    if (offset_it == profile.root_offset.end()) {
      throw MissingError("calibration profile has no root offset for finger " +
                         std::string(finger_name(finger)));
    }
    const Vec3& delta = offset_it->second;

    Vec3 prev_raw = frame.at({finger, 0});
    Vec3 prev_out = prev_raw;
    out.emplace(KeypointKey{finger, 0}, prev_out);
    for (int j = 1; j <= tip; ++j) {
      auto s_it = profile.scale.find({finger, j - 1});
      if (s_it == profile.scale.end()) {
        throw MissingError("calibration profile has no scale for segment " +
                           to_string(KeypointKey{finger, j - 1}));
      }
      const Vec3& raw = frame.at({finger, j});
      Vec3 next = prev_out + s_it->second * (raw - prev_raw);
      if (j == 1) next += delta;
      out.emplace(KeypointKey{finger, j}, next);
      prev_out = next;
      prev_raw = raw;
    }
  }
  return out;
}

double align_cost(const HandModel& model, const JointVector& theta, const KeypointMap& pprime,
                  const std::vector<KeypointKey>& keypoints) {
  const auto robot = forward_keypoints(model, theta);
  double sum = 0.0;
  for (const auto& key : keypoints) {
    const Vec3& target = lookup(pprime, key, "transformed frame");
    const Vec3& actual = lookup(robot, key, "robot model");
    sum += (target - actual).squaredNorm();
  }
  return sum;
}

Vec3 relative_fingertip_vector(const KeypointMap& points, const KeypointKey& thumb_tip,
                               const KeypointKey& finger_tip) {
  return lookup(points, finger_tip, "frame") - lookup(points, thumb_tip, "frame");
}

double proximity(const CalibrationProfile& profile, const HumanHandFrame& frame, int finger) {
  auto lo_it = profile.rho_min.find(finger);
  auto hi_it = profile.rho_max.find(finger);
  if (lo_it == profile.rho_min.end() || hi_it == profile.rho_max.end()) {
    throw MissingError("calibration profile has no proximity band for finger " +
                       std::string(finger_name(finger)));
  }
  const KeypointKey thumb_tip{kThumb, profile.fingertip_point(kThumb)};
  const KeypointKey tip{finger, profile.fingertip_point(finger)};
  const double dist = relative_fingertip_vector(frame.points, thumb_tip, tip).norm();
  const double rho = 1.0 - (dist - lo_it->second) / (hi_it->second - lo_it->second);
  return std::clamp(rho, 0.0, 1.0);
}

double coupling_weight(const CalibrationProfile& profile, const HumanHandFrame& frame, int finger,
                       double sigma, double tau) {
  const double rho = proximity(profile, frame, finger);
  return 1.0 / (1.0 + std::exp(-sigma * (rho - tau)));
}

double coupling_cost(const HandModel& model, const JointVector& theta, const HumanHandFrame& frame,
                     const std::map<int, double>& weights, const std::vector<int>& fingers) {
  if (!model.has_finger(kThumb)) {
    throw MissingError("coupling cost needs a thumb");
  }
  const auto robot = forward_keypoints(model, theta);
  const auto thumb_tip = model.fingertip_key(kThumb);
  double sum = 0.0;
  for (int finger : fingers) {
    auto w = weights.find(finger);
    if (w == weights.end()) {
      throw MissingError("no coupling weight for finger " + std::string(finger_name(finger)));
    }
    const auto tip = model.fingertip_key(finger);
    const Vec3 human = relative_fingertip_vector(frame.points, thumb_tip, tip);
    const Vec3 robot_rel = relative_fingertip_vector(robot, thumb_tip, tip);
    sum += w->second * (human - robot_rel).squaredNorm();
  }
  return sum;
}

double smooth_cost(const JointVector& theta, const JointVector& theta_prev) {
  if (theta.size() != theta_prev.size()) {
    throw DimensionError("smoothing cost: joint vectors differ in length");
  }
  return (theta - theta_prev).squaredNorm();
}

CostBreakdown total_cost(const HandModel& model, const JointVector& theta,
                         const JointVector& theta_prev, const KeypointMap& pprime,
                         const HumanHandFrame& frame, const CalibrationProfile& profile,
                         const RetargetConfig& config) {
  CostBreakdown out;
  out.align = align_cost(model, theta, pprime, resolve_keypoints(model, config));
  if (config.alpha_couple > 0.0) {
    const auto fingers = resolve_coupled_fingers(model, config);
    std::map<int, double> weights;
    for (int f : fingers) {
      weights[f] = coupling_weight(profile, frame, f, config.sigma, config.tau);
    }
    if (config.coupling_uses_transformed) {
      HumanHandFrame transformed{frame.timestamp, pprime};
      out.couple = coupling_cost(model, theta, transformed, weights, fingers);
    } else {
      out.couple = coupling_cost(model, theta, frame, weights, fingers);
    }
  }
  out.smooth = smooth_cost(theta, theta_prev);
  out.total = config.alpha_align * out.align + config.alpha_couple * out.couple +
              config.alpha_smooth * out.smooth;
  return out;
}

JointVector total_cost_gradient(const HandModel& model, const JointVector& theta,
                                const JointVector& theta_prev, const KeypointMap& pprime,
                                const HumanHandFrame& frame, const CalibrationProfile& profile,
                                const RetargetConfig& config) {
  RetargetProblem problem(model, profile, config, frame, pprime, theta_prev);
  return problem.gradient(theta);
}

JointMapping JointMapping::identity(std::size_t dof) {
  JointMapping m;
  m.target_dof = dof;
  for (std::size_t k = 0; k < dof; ++k) m.entries.push_back({k, k, 1.0, 0.0});
  return m;
}

void JointMapping::validate() const {
  std::set<std::size_t> seen;
  for (const auto& e : entries) {
    if (e.target >= target_dof) {
      throw ValidationError("joint mapping: target index " + std::to_string(e.target) +
                            " out of range");
    }
    if (!seen.insert(e.target).second) {
      throw ValidationError("joint mapping: target index " + std::to_string(e.target) +
                            " mapped twice");
    }
    if (!std::isfinite(e.gain) || !std::isfinite(e.offset)) {
      throw ValidationError("joint mapping: gain and offset must be finite");
    }
  }
}

JointVector direct_joint_map(const JointVector& source, const JointMapping& mapping,
                             const HandModel& model) {
  mapping.validate();
  if (mapping.target_dof != model.dof()) {
    throw DimensionError("joint mapping targets " + std::to_string(mapping.target_dof) +
                         " joints, model has " + std::to_string(model.dof()));
  }
  JointVector target = JointVector::Zero(static_cast<Eigen::Index>(mapping.target_dof));
  for (const auto& e : mapping.entries) {
    if (e.source >= static_cast<std::size_t>(source.size())) {
      throw DimensionError("joint mapping: source index " + std::to_string(e.source) +
                           " out of range");
    }
    target[static_cast<Eigen::Index>(e.target)] =
        e.gain * source[static_cast<Eigen::Index>(e.source)] + e.offset;
  }
  return clamp_to_limits(model, target);
}

}  // namespace teledex
