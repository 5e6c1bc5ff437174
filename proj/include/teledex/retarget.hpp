#pragma once

// Human-to-robot hand retargeting: calibration, keypoint transformation,
// the alignment / coupling / smoothing cost terms and the joint-space
// direct mapping used by master-slave setups.

#include "teledex/kinematics.hpp"

#include <map>
#include <optional>
#include <vector>

namespace teledex {

/// Operator keypoints at one instant. Keys mirror the robot model's (i, j)
/// layout wherever the two correspond.
struct HumanHandFrame {
  double timestamp = 0.0;
  KeypointMap points;

  bool all_finite() const;
  const Vec3& at(const KeypointKey& key) const;
};

struct CalibrationProfile {
  JointVector theta0;
  HumanHandFrame pbar;
  /// Segment ratio keyed by the proximal end (i, j) of the segment j -> j+1.
  std::map<KeypointKey, double> scale;
  std::map<int, Vec3> root_offset;
  std::map<int, double> rho_min;
  std::map<int, double> rho_max;

  /// Distal-most keypoint index covered by the scale table for a finger.
  int fingertip_point(int finger) const;
  void validate() const;
};

struct SolverSettings {
  int max_iters = 50;
  double step_tolerance = 1e-6;
  double cost_tolerance = 1e-10;
  double max_step_radians = 0.2;
};

struct RetargetConfig {
  double alpha_align = 1.0;
  double alpha_couple = 0.5;
  double alpha_smooth = 0.1;
  double sigma = 10.0;
  double tau = 0.5;
  /// Alignment set K; nullopt selects every pip, dip and fingertip keypoint.
  std::optional<std::vector<KeypointKey>> keypoints;
  /// Coupled fingers I; nullopt selects every non-thumb finger of the model.
  std::optional<std::vector<int>> coupled_fingers;
  /// Build the human thumb-to-finger vectors from transformed keypoints.
  bool coupling_uses_transformed = false;
  SolverSettings solver;

  void validate() const;
};

std::vector<KeypointKey> resolve_keypoints(const HandModel& model, const RetargetConfig& config);
std::vector<int> resolve_coupled_fingers(const HandModel& model, const RetargetConfig& config);

CalibrationProfile calibrate(const HandModel& model, const JointVector& theta0,
                             const HumanHandFrame& static_frame,
                             const std::vector<HumanHandFrame>& motion_frames);

/// Scales each phalangeal segment and shifts finger roots onto the robot.
KeypointMap transform_keypoints(const CalibrationProfile& profile, const HumanHandFrame& frame);

double align_cost(const HandModel& model, const JointVector& theta, const KeypointMap& pprime,
                  const std::vector<KeypointKey>& keypoints);

/// Thumb tip to finger tip, in the frame's own coordinates.
Vec3 relative_fingertip_vector(const KeypointMap& points, const KeypointKey& thumb_tip,
                               const KeypointKey& finger_tip);

/// Normalized thumb-finger proximity in [0, 1]; 1 at the calibrated minimum distance.
double proximity(const CalibrationProfile& profile, const HumanHandFrame& frame, int finger);
double coupling_weight(const CalibrationProfile& profile, const HumanHandFrame& frame, int finger,
                       double sigma, double tau);

double coupling_cost(const HandModel& model, const JointVector& theta, const HumanHandFrame& frame,
                     const std::map<int, double>& weights, const std::vector<int>& fingers);

double smooth_cost(const JointVector& theta, const JointVector& theta_prev);

struct CostBreakdown {
  double align = 0.0;
  double couple = 0.0;
  double smooth = 0.0;
  double total = 0.0;
};

CostBreakdown total_cost(const HandModel& model, const JointVector& theta,
                         const JointVector& theta_prev, const KeypointMap& pprime,
                         const HumanHandFrame& frame, const CalibrationProfile& profile,
                         const RetargetConfig& config);

/// Analytic gradient of the weighted total cost with respect to theta.
JointVector total_cost_gradient(const HandModel& model, const JointVector& theta,
                                const JointVector& theta_prev, const KeypointMap& pprime,
                                const HumanHandFrame& frame, const CalibrationProfile& profile,
                                const RetargetConfig& config);

struct JointMapping {
  struct Entry {
    std::size_t source = 0;
    std::size_t target = 0;
    double gain = 1.0;
    double offset = 0.0;
  };
  std::vector<Entry> entries;
  std::size_t target_dof = 0;

  static JointMapping identity(std::size_t dof);
  void validate() const;
};

JointVector direct_joint_map(const JointVector& source, const JointMapping& mapping,
                             const HandModel& model);

}  // namespace teledex
