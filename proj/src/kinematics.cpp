#include "teledex/kinematics.hpp"

#include "teledex/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace teledex {

namespace {

constexpr std::array<std::string_view, kFingerSlots> kFingerNames = {
    "thumb", "index", "middle", "ring", "little"};

using nlohmann::json;

Vec3 read_vec3(const json& node, const std::string& what) {
  if (!node.is_array() || node.size() != 3) {
    throw ParseError(what + ": expected an array of 3 numbers");
  }
  Vec3 out;
  for (int k = 0; k < 3; ++k) {
    if (!node[k].is_number()) {
      throw ParseError(what + ": expected an array of 3 numbers");
    }
    out[k] = node[k].get<double>();
  }
  if (!out.allFinite()) {
    throw ValidationError(what + ": non-finite value");
  }
  return out;
}

double read_number(const json& node, const char* key, const std::string& where) {
  auto it = node.find(key);
  if (it == node.end() || !it->is_number()) {
    throw ParseError(where + ": missing numeric field '" + key + "'");
  }
  double value = it->get<double>();
  if (!std::isfinite(value)) {
    throw ValidationError(where + ": '" + key + "' is not finite");
  }
  return value;
}

RevoluteJoint parse_joint(const json& node, const std::string& where) {
  if (!node.is_object()) {
    throw ParseError(where + ": joint must be an object");
  }
  RevoluteJoint joint;
  Vec3 xyz = Vec3::Zero();
  Vec3 rpy = Vec3::Zero();
  if (auto it = node.find("origin"); it != node.end()) {
    if (!it->is_object()) {
      throw ParseError(where + ": origin must be an object");
    }
    if (it->contains("xyz")) xyz = read_vec3(it->at("xyz"), where + ".origin.xyz");
    if (it->contains("rpy")) rpy = read_vec3(it->at("rpy"), where + ".origin.rpy");
  }
  joint.origin = RigidTransform::from_xyz_rpy(xyz, rpy);
  if (!node.contains("axis")) {
    throw ParseError(where + ": missing 'axis'");
  }
  joint.axis = read_vec3(node.at("axis"), where + ".axis");
  if (std::abs(joint.axis.norm() - 1.0) > 1e-9) {
    throw ValidationError(where + ": axis is not unit length");
  }
  joint.lower = read_number(node, "lower", where);
  joint.upper = read_number(node, "upper", where);
  if (joint.lower > joint.upper) {
    throw ValidationError(where + ": lower limit exceeds upper limit");
  }
  return joint;
}

FingerChain parse_finger(const json& node, std::size_t position) {
  const std::string where = "fingers[" + std::to_string(position) + "]";
  if (!node.is_object()) {
    throw ParseError(where + ": finger must be an object");
  }
  auto name_it = node.find("name");
  if (name_it == node.end() || !name_it->is_string()) {
    throw ParseError(where + ": missing 'name'");
  }
  const auto name = name_it->get<std::string>();
  auto slot = finger_index(name);
  if (!slot || name != finger_name(*slot)) {
    throw ValidationError(where + ": unknown finger name '" + name + "'");
  }

  FingerChain finger;
  finger.slot = *slot;

  auto joints_it = node.find("joints");
  if (joints_it == node.end() || !joints_it->is_array()) {
    throw ParseError(where + ": missing 'joints' array");
  }
  for (std::size_t k = 0; k < joints_it->size(); ++k) {
    finger.joints.push_back(
        parse_joint((*joints_it)[k], where + ".joints[" + std::to_string(k) + "]"));
  }
  if (finger.joints.empty()) {
    throw ValidationError(where + ": finger has no joints");
  }

  auto keys_it = node.find("keypoints");
  if (keys_it == node.end() || !keys_it->is_array()) {
    throw ParseError(where + ": missing 'keypoints' array");
  }
  std::size_t mcp_count = 0;
  for (std::size_t k = 0; k < keys_it->size(); ++k) {
    const auto& kp = (*keys_it)[k];
    const std::string kwhere = where + ".keypoints[" + std::to_string(k) + "]";
    if (!kp.is_object()) {
      throw ParseError(kwhere + ": keypoint must be an object");
    }
    KeypointAttachment att;
    if (!kp.contains("id") || !kp.at("id").is_number_integer()) {
      throw ParseError(kwhere + ": missing integer 'id'");
    }
    att.id = kp.at("id").get<int>();
    if (!kp.contains("link") || !kp.at("link").is_number_integer()) {
      throw ParseError(kwhere + ": missing integer 'link'");
    }
    const auto link = kp.at("link").get<long long>();
    if (link < 0 || static_cast<std::size_t>(link) >= finger.joints.size()) {
      throw ValidationError(kwhere + ": link index out of range");
    }
    att.link = static_cast<std::size_t>(link);
    att.offset = kp.contains("offset") ? read_vec3(kp.at("offset"), kwhere + ".offset")
                                       : Vec3::Zero();
    if (!kp.contains("role") || !kp.at("role").is_string()) {
      throw ParseError(kwhere + ": missing 'role'");
    }
    auto role = parse_keypoint_role(kp.at("role").get<std::string>());
    if (!role) {
      throw ValidationError(kwhere + ": unknown role");
    }
    att.role = *role;

    for (const auto& prev : finger.keypoints) {
      if (prev.id == att.id) {
        throw ValidationError(kwhere + ": duplicate keypoint id " + std::to_string(att.id));
      }
    }
    if (att.id != static_cast<int>(k)) {
      throw ValidationError(kwhere + ": keypoint ids must run 0, 1, 2, ... proximal to distal");
    }
    if (!finger.keypoints.empty() && att.link < finger.keypoints.back().link) {
      throw ValidationError(kwhere + ": keypoints must not move proximally along the chain");
    }
    if (att.role == KeypointRole::mcp) {
      finger.mcp = finger.keypoints.size();
      ++mcp_count;
    }
    finger.keypoints.push_back(att);
  }
  if (finger.keypoints.size() < 2) {
    throw ValidationError(where + ": a finger needs at least an mcp and a fingertip keypoint");
  }
  if (mcp_count != 1) {
    throw ValidationError(where + ": exactly one keypoint must have role 'mcp'");
  }
  for (std::size_t k = 0; k + 1 < finger.keypoints.size(); ++k) {
    if (finger.keypoints[k].role == KeypointRole::fingertip) {
      throw ValidationError(where + ": only the last keypoint may be the fingertip");
    }
  }
  if (finger.keypoints.back().role != KeypointRole::fingertip) {
    throw ValidationError(where + ": last keypoint must have role 'fingertip'");
  }
  return finger;
}

}  // namespace

std::string_view finger_name(int finger) {
  if (finger < 0 || finger >= kFingerSlots) {
    throw MissingError("finger slot out of range: " + std::to_string(finger));
  }
  return kFingerNames[static_cast<std::size_t>(finger)];
}

std::optional<int> finger_index(std::string_view name) {
  for (int k = 0; k < kFingerSlots; ++k) {
    if (kFingerNames[static_cast<std::size_t>(k)] == name) return k;
  }
  int value = -1;
  auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), value);
  if (ec == std::errc() && ptr == name.data() + name.size() && value >= 0 &&
      value < kFingerSlots) {
    return value;
  }
  return std::nullopt;
}

std::string to_string(const KeypointKey& key) {
  return std::string(finger_name(key.finger)) + "/" + std::to_string(key.point);
}

KeypointKey parse_keypoint_key(std::string_view text) {
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) {
    throw ParseError("keypoint key '" + std::string(text) + "' is not <finger>/<j>");
  }
  auto finger = finger_index(text.substr(0, slash));
  const auto tail = text.substr(slash + 1);
  int point = -1;
  auto [ptr, ec] = std::from_chars(tail.data(), tail.data() + tail.size(), point);
  if (!finger || ec != std::errc() || ptr != tail.data() + tail.size() || point < 0) {
    throw ParseError("keypoint key '" + std::string(text) + "' is not <finger>/<j>");
  }
  return {*finger, point};
}

RigidTransform RigidTransform::from_xyz_rpy(const Vec3& xyz, const Vec3& rpy) {
  RigidTransform t;
  t.rotation = (Eigen::AngleAxisd(rpy.z(), Vec3::UnitZ()) *
                Eigen::AngleAxisd(rpy.y(), Vec3::UnitY()) *
                Eigen::AngleAxisd(rpy.x(), Vec3::UnitX()))
                   .toRotationMatrix();
  t.translation = xyz;
  return t;
}

RigidTransform RigidTransform::operator*(const RigidTransform& rhs) const {
  RigidTransform out;
  out.rotation = rotation * rhs.rotation;
  out.translation = rotation * rhs.translation + translation;
  return out;
}

std::string_view to_string(KeypointRole role) {
  switch (role) {
    case KeypointRole::mcp: return "mcp";
    case KeypointRole::pip: return "pip";
    case KeypointRole::dip: return "dip";
    case KeypointRole::fingertip: return "fingertip";
    case KeypointRole::aux: return "aux";
  }
  return "aux";
}

std::optional<KeypointRole> parse_keypoint_role(std::string_view text) {
  for (auto role : {KeypointRole::mcp, KeypointRole::pip, KeypointRole::dip,
                    KeypointRole::fingertip, KeypointRole::aux}) {
    if (to_string(role) == text) return role;
  }
  return std::nullopt;
}

HandModel::HandModel(std::string name, std::vector<FingerChain> fingers)
    : name_(std::move(name)), fingers_(std::move(fingers)) {
  if (fingers_.empty() || fingers_.front().slot != kThumb) {
    throw ValidationError("hand model '" + name_ + "': the thumb must be the first finger");
  }
  for (std::size_t k = 1; k < fingers_.size(); ++k) {
    if (fingers_[k].slot <= fingers_[k - 1].slot) {
      throw ValidationError("hand model '" + name_ +
                            "': fingers must follow thumb, index, middle, ring, little order");
    }
  }
  for (auto& finger : fingers_) {
    finger.first_joint = dof_;
    dof_ += finger.joints.size();
  }
}

bool HandModel::has_finger(int slot) const {
  return std::any_of(fingers_.begin(), fingers_.end(),
                     [slot](const FingerChain& f) { return f.slot == slot; });
}

const FingerChain& HandModel::finger(int slot) const {
  for (const auto& f : fingers_) {
    if (f.slot == slot) return f;
  }
  throw MissingError("hand model '" + name_ + "' has no finger " + std::to_string(slot));
}

bool HandModel::has_keypoint(const KeypointKey& key) const {
  if (!has_finger(key.finger)) return false;
  const auto& f = finger(key.finger);
  return key.point >= 0 && static_cast<std::size_t>(key.point) < f.keypoints.size();
}

const KeypointAttachment& HandModel::keypoint(const KeypointKey& key) const {
  if (!has_keypoint(key)) {
    throw MissingError("hand model '" + name_ + "' has no keypoint " +
                       (key.finger >= 0 && key.finger < kFingerSlots
                            ? to_string(key)
                            : std::to_string(key.finger) + "/" + std::to_string(key.point)));
  }
  return finger(key.finger).keypoints[static_cast<std::size_t>(key.point)];
}

std::vector<KeypointKey> HandModel::keypoints() const {
  std::vector<KeypointKey> out;
  for (const auto& f : fingers_) {
    for (const auto& kp : f.keypoints) out.push_back({f.slot, kp.id});
  }
  return out;
}

KeypointKey HandModel::mcp_key(int slot) const {
  const auto& f = finger(slot);
  return {slot, f.keypoints[f.mcp].id};
}

KeypointKey HandModel::fingertip_key(int slot) const {
  const auto& f = finger(slot);
  return {slot, f.keypoints.back().id};
}

JointVector HandModel::lower_limits() const {
  JointVector out(static_cast<Eigen::Index>(dof_));
  for (const auto& f : fingers_) {
    for (std::size_t k = 0; k < f.joints.size(); ++k) {
      out[static_cast<Eigen::Index>(f.first_joint + k)] = f.joints[k].lower;
    }
  }
  return out;
}

JointVector HandModel::upper_limits() const {
  JointVector out(static_cast<Eigen::Index>(dof_));
  for (const auto& f : fingers_) {
    for (std::size_t k = 0; k < f.joints.size(); ++k) {
      out[static_cast<Eigen::Index>(f.first_joint + k)] = f.joints[k].upper;
    }
  }
  return out;
}

HandModel load_hand_model(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("hand model: ") + e.what());
  }
  if (!doc.is_object()) {
    throw ParseError("hand model: top level must be an object");
  }
  auto name_it = doc.find("name");
  if (name_it == doc.end() || !name_it->is_string()) {
    throw ParseError("hand model: missing 'name'");
  }
  auto fingers_it = doc.find("fingers");
  if (fingers_it == doc.end() || !fingers_it->is_array()) {
    throw ParseError("hand model: missing 'fingers' array");
  }
  std::vector<FingerChain> fingers;
  for (std::size_t k = 0; k < fingers_it->size(); ++k) {
    fingers.push_back(parse_finger((*fingers_it)[k], k));
  }
  return HandModel(name_it->get<std::string>(), std::move(fingers));
}

HandModel load_hand_model_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open hand model '" + path + "'");
  }
  std::stringstream buffer;
  buffer << in.rdbuf();
  return load_hand_model(buffer.str());
}

void check_dimension(const HandModel& model, const JointVector& theta) {
  if (static_cast<std::size_t>(theta.size()) != model.dof()) {
    throw DimensionError("joint vector has " + std::to_string(theta.size()) +
                         " entries, model '" + model.name() + "' has " +
                         std::to_string(model.dof()) + " DoF");
  }
}

std::vector<RigidTransform> finger_frames(const FingerChain& finger,
                                          const JointVector& theta) {
  std::vector<RigidTransform> frames;
  frames.reserve(finger.joints.size());
  RigidTransform current;
  for (std::size_t k = 0; k < finger.joints.size(); ++k) {
    const auto& joint = finger.joints[k];
    RigidTransform rot;
    rot.rotation =
        Eigen::AngleAxisd(theta[static_cast<Eigen::Index>(finger.first_joint + k)], joint.axis)
            .toRotationMatrix();
    current = current * joint.origin * rot;
    frames.push_back(current);
  }
  return frames;
}

KeypointMap forward_keypoints(const HandModel& model, const JointVector& theta) {
  check_dimension(model, theta);
  KeypointMap out;
  for (const auto& f : model.fingers()) {
    const auto frames = finger_frames(f, theta);
    for (const auto& kp : f.keypoints) {
      out.emplace(KeypointKey{f.slot, kp.id}, frames[kp.link].apply(kp.offset));
    }
  }
  return out;
}

Vec3 forward_keypoint(const HandModel& model, const JointVector& theta,
                      const KeypointKey& key) {
  check_dimension(model, theta);
  const auto& kp = model.keypoint(key);
  const auto frames = finger_frames(model.finger(key.finger), theta);
  return frames[kp.link].apply(kp.offset);
}

Eigen::Matrix3Xd keypoint_jacobian(const HandModel& model, const JointVector& theta,
                                   const KeypointKey& key) {
  check_dimension(model, theta);
  const auto& kp = model.keypoint(key);
  const auto& f = model.finger(key.finger);
  const auto frames = finger_frames(f, theta);
  const Vec3 point = frames[kp.link].apply(kp.offset);

  Eigen::Matrix3Xd jac = Eigen::Matrix3Xd::Zero(3, static_cast<Eigen::Index>(model.dof()));
  for (std::size_t k = 0; k <= kp.link; ++k) {
    // Rotating about the joint axis leaves the axis itself fixed, so the
    // child frame carries the world-space axis.
    const Vec3 axis = frames[k].rotation * f.joints[k].axis;
    jac.col(static_cast<Eigen::Index>(f.first_joint + k)) =
        axis.cross(point - frames[k].translation);
  }
  return jac;
}

JointVector clamp_to_limits(const HandModel& model, const JointVector& theta) {
  check_dimension(model, theta);
  return theta.cwiseMax(model.lower_limits()).cwiseMin(model.upper_limits());
}

}  // namespace teledex
