#pragma once

// Robot hand models as per-finger serial chains of revolute joints, with
// forward kinematics and geometric keypoint Jacobians.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace teledex {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using JointVector = Eigen::VectorXd;

/// Canonical finger slots. A model may omit any finger but the thumb.
inline constexpr int kThumb = 0;
inline constexpr int kFingerSlots = 5;

std::string_view finger_name(int finger);
/// Accepts "thumb".."little" or a decimal slot index; nullopt otherwise.
std::optional<int> finger_index(std::string_view name);

/// (finger i, keypoint j), j counted proximal to distal from 0.
struct KeypointKey {
  int finger = 0;
  int point = 0;

  friend auto operator<=>(const KeypointKey&, const KeypointKey&) = default;
};

/// "<finger-name>/<j>"
std::string to_string(const KeypointKey& key);
KeypointKey parse_keypoint_key(std::string_view text);

struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static RigidTransform from_xyz_rpy(const Vec3& xyz, const Vec3& rpy);
  RigidTransform operator*(const RigidTransform& rhs) const;
  Vec3 apply(const Vec3& point) const { return rotation * point + translation; }
};

struct RevoluteJoint {
  RigidTransform origin;
  Vec3 axis = Vec3::UnitZ();
  double lower = 0.0;
  double upper = 0.0;
};

enum class KeypointRole { mcp, pip, dip, fingertip, aux };

std::string_view to_string(KeypointRole role);
std::optional<KeypointRole> parse_keypoint_role(std::string_view text);

struct KeypointAttachment {
  int id = 0;
  std::size_t link = 0;  // index of the joint whose child frame carries the point
  Vec3 offset = Vec3::Zero();
  KeypointRole role = KeypointRole::aux;
};

struct FingerChain {
  int slot = 0;
  std::vector<RevoluteJoint> joints;
  std::vector<KeypointAttachment> keypoints;
  std::size_t first_joint = 0;  // offset of joints[0] in the model's joint vector
  std::size_t mcp = 0;          // index into keypoints

  std::size_t fingertip() const { return keypoints.size() - 1; }
};

using KeypointMap = std::map<KeypointKey, Vec3>;

/// Immutable after construction; safe to share across threads.
class HandModel {
public:
  HandModel(std::string name, std::vector<FingerChain> fingers);

  const std::string& name() const { return name_; }
  std::size_t dof() const { return dof_; }
  const std::vector<FingerChain>& fingers() const { return fingers_; }

  bool has_finger(int slot) const;
  const FingerChain& finger(int slot) const;

  bool has_keypoint(const KeypointKey& key) const;
  const KeypointAttachment& keypoint(const KeypointKey& key) const;
  std::vector<KeypointKey> keypoints() const;
  KeypointKey mcp_key(int slot) const;
  KeypointKey fingertip_key(int slot) const;

  JointVector lower_limits() const;
  JointVector upper_limits() const;

private:
  std::string name_;
  std::vector<FingerChain> fingers_;
  std::size_t dof_ = 0;
};

HandModel load_hand_model(std::string_view json_text);
HandModel load_hand_model_file(const std::string& path);

/// Composed joint frames along one finger (child frame of each joint).
std::vector<RigidTransform> finger_frames(const FingerChain& finger,
                                          const JointVector& theta);

KeypointMap forward_keypoints(const HandModel& model, const JointVector& theta);
Vec3 forward_keypoint(const HandModel& model, const JointVector& theta,
                      const KeypointKey& key);

/// 3 x dof matrix of d(position)/d(theta_k).
Eigen::Matrix3Xd keypoint_jacobian(const HandModel& model, const JointVector& theta,
                                   const KeypointKey& key);

JointVector clamp_to_limits(const HandModel& model, const JointVector& theta);

void check_dimension(const HandModel& model, const JointVector& theta);

}  // namespace teledex
