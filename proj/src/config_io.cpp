#include "teledex/config_io.hpp"

#include "teledex/errors.hpp"

#include <fstream>
#include <limits>
#include <set>
#include <sstream>

namespace teledex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void require_object(const json& doc, const std::string& where) {
  if (!doc.is_object()) {
    throw ParseError(where + ": expected a JSON object");
  }
}

void reject_unknown(const json& doc, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) {
      throw ParseError(where + ": unknown field '" + key + "'");
    }
  }
}

template <typename T>
T get_or(const json& doc, const char* key, T fallback, const std::string& where) {
  auto it = doc.find(key);
  if (it == doc.end()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(where + ": field '" + key + "' has the wrong type");
  }
}

template <typename T>
T get_required(const json& doc, const char* key, const std::string& where) {
  if (!doc.contains(key)) {
    throw ParseError(where + ": missing field '" + key + "'");
  }
  return get_or<T>(doc, key, T{}, where);
}

double coordinate(const json& v, const std::string& where) {
  if (v.is_null()) return std::numeric_limits<double>::quiet_NaN();
  if (!v.is_number()) {
    throw ParseError(where + ": coordinates must be numbers");
  }
  return v.get<double>();
}

Vec3 vec3(const json& v, const std::string& where) {
  if (!v.is_array() || v.size() != 3) {
    throw ParseError(where + ": expected [x, y, z]");
  }
  return {coordinate(v[0], where), coordinate(v[1], where), coordinate(v[2], where)};
}

JointVector joint_vector(const json& v, const std::string& where) {
  if (!v.is_array()) {
    throw ParseError(where + ": expected an array of numbers");
  }
  JointVector out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (!v[k].is_number()) {
      throw ParseError(where + ": expected an array of numbers");
    }
    out[static_cast<Eigen::Index>(k)] = v[k].get<double>();
  }
  return out;
}

json array_of(const JointVector& v) { return std::vector<double>(v.data(), v.data() + v.size()); }
json array_of(const Vec3& v) { return {v.x(), v.y(), v.z()}; }

int finger_from(const std::string& name, const std::string& where) {
  auto f = finger_index(name);
  if (!f) {
    throw ParseError(where + ": unknown finger '" + name + "'");
  }
  return *f;
}

KeypointKey key_from(const std::string& text, const std::string& where) {
  try {
    return parse_keypoint_key(text);
  } catch (const Error& e) {
    throw ParseError(where + ": " + e.what());
  }
}

template <typename V>
std::map<int, V> finger_map(const json& doc, const char* key, const std::string& where,
                            V (*convert)(const json&, const std::string&)) {
  std::map<int, V> out;
  const auto it = doc.find(key);
  if (it == doc.end()) return out;
  require_object(*it, where + "." + key);
  for (const auto& [name, value] : it->items()) {
    out.emplace(finger_from(name, where), convert(value, where + "." + key + "." + name));
  }
  return out;
}

double number(const json& v, const std::string& where) {
  if (!v.is_number()) {
    throw ParseError(where + ": expected a number");
  }
  return v.get<double>();
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace

json to_json(const RetargetConfig& c) {
  json doc = {{"alpha_align", c.alpha_align},
              {"alpha_couple", c.alpha_couple},
              {"alpha_smooth", c.alpha_smooth},
              {"sigma", c.sigma},
              {"tau", c.tau},
              {"coupling_uses_transformed", c.coupling_uses_transformed},
              {"solver",
               {{"max_iters", c.solver.max_iters},
                {"step_tolerance", c.solver.step_tolerance},
                {"cost_tolerance", c.solver.cost_tolerance},
                {"max_step_radians", c.solver.max_step_radians}}}};
  if (c.keypoints) {
    json keys = json::array();
    for (const auto& k : *c.keypoints) keys.push_back(to_string(k));
    doc["keypoints"] = keys;
  } else {
    doc["keypoints"] = nullptr;
  }
  if (c.coupled_fingers) {
    json fingers = json::array();
    for (int f : *c.coupled_fingers) fingers.push_back(std::string(finger_name(f)));
    doc["coupled_fingers"] = fingers;
  } else {
    doc["coupled_fingers"] = nullptr;
  }
  return doc;
}

RetargetConfig retarget_config_from_json(const json& doc) {
  const std::string where = "retarget config";
  require_object(doc, where);
  reject_unknown(doc,
                 {"alpha_align", "alpha_couple", "alpha_smooth", "sigma", "tau", "keypoints",
                  "coupled_fingers", "coupling_uses_transformed", "solver"},
                 where);
  RetargetConfig c;
  c.alpha_align = get_or(doc, "alpha_align", c.alpha_align, where);
  c.alpha_couple = get_or(doc, "alpha_couple", c.alpha_couple, where);
  c.alpha_smooth = get_or(doc, "alpha_smooth", c.alpha_smooth, where);
  c.sigma = get_or(doc, "sigma", c.sigma, where);
  c.tau = get_or(doc, "tau", c.tau, where);
  c.coupling_uses_transformed =
      get_or(doc, "coupling_uses_transformed", c.coupling_uses_transformed, where);
  if (auto it = doc.find("keypoints"); it != doc.end() && !it->is_null()) {
    std::vector<KeypointKey> keys;
    for (const auto& text : get_or<std::vector<std::string>>(doc, "keypoints", {}, where)) {
      keys.push_back(key_from(text, where));
    }
    c.keypoints = keys;
  }
  if (auto it = doc.find("coupled_fingers"); it != doc.end() && !it->is_null()) {
    std::vector<int> fingers;
    for (const auto& name : get_or<std::vector<std::string>>(doc, "coupled_fingers", {}, where)) {
      fingers.push_back(finger_from(name, where));
    }
    c.coupled_fingers = fingers;
  }
  if (auto it = doc.find("solver"); it != doc.end()) {
    const std::string sw = where + ".solver";
    require_object(*it, sw);
    reject_unknown(*it, {"max_iters", "step_tolerance", "cost_tolerance", "max_step_radians"}, sw);
    c.solver.max_iters = get_or(*it, "max_iters", c.solver.max_iters, sw);
    c.solver.step_tolerance = get_or(*it, "step_tolerance", c.solver.step_tolerance, sw);
    c.solver.cost_tolerance = get_or(*it, "cost_tolerance", c.solver.cost_tolerance, sw);
    c.solver.max_step_radians = get_or(*it, "max_step_radians", c.solver.max_step_radians, sw);
  }
  c.validate();
  return c;
}

json to_json(const HumanHandFrame& frame) {
  json points = json::object();
  for (const auto& [key, p] : frame.points) points[to_string(key)] = array_of(p);
  return {{"t", frame.timestamp}, {"points", points}};
}

HumanHandFrame human_frame_from_json(const json& doc) {
  const std::string where = "hand frame";
  require_object(doc, where);
  reject_unknown(doc, {"t", "points"}, where);
  HumanHandFrame frame;
  if (!doc.contains("t")) {
    throw ParseError(where + ": missing field 't'");
  }
  const auto& t = doc.at("t");
  frame.timestamp = t.is_null() ? std::numeric_limits<double>::quiet_NaN() : number(t, where + ".t");
  const auto pts = doc.find("points");
  if (pts == doc.end() || !pts->is_object()) {
    throw ParseError(where + ": missing 'points' object");
  }
  for (const auto& [name, value] : pts->items()) {
    frame.points.emplace(key_from(name, where), vec3(value, where + ".points." + name));
  }
  return frame;
}

std::vector<TrajectoryLine> read_trajectory(std::istream& in) {
  std::vector<TrajectoryLine> out;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back({line, human_frame_from_json(json::parse(text))});
    } catch (const json::parse_error& e) {
      throw ParseError("line " + std::to_string(line) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(line) + ": " + e.what());
    }
  }
  return out;
}

std::vector<TrajectoryLine> read_trajectory_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw MissingError("cannot open trajectory '" + path.string() + "'");
  }
  return read_trajectory(in);
}

void write_trajectory_file(const fs::path& path, const std::vector<HumanHandFrame>& frames) {
  std::string text;
  for (const auto& f : frames) text += to_json(f).dump() + "\n";
  write_text_file(path, text);
}

json to_json(const CalibrationProfile& p) {
  json scale = json::object();
  for (const auto& [key, s] : p.scale) scale[to_string(key)] = s;
  json offsets = json::object();
  for (const auto& [f, d] : p.root_offset) offsets[std::string(finger_name(f))] = array_of(d);
  json rmin = json::object();
  for (const auto& [f, v] : p.rho_min) rmin[std::string(finger_name(f))] = v;
  json rmax = json::object();
  for (const auto& [f, v] : p.rho_max) rmax[std::string(finger_name(f))] = v;
  return {{"theta0", array_of(p.theta0)}, {"pbar", to_json(p.pbar)}, {"scale", scale},
          {"root_offset", offsets},       {"rho_min", rmin},         {"rho_max", rmax}};
}

CalibrationProfile calibration_profile_from_json(const json& doc) {
  const std::string where = "calibration profile";
  require_object(doc, where);
  reject_unknown(doc, {"theta0", "pbar", "scale", "root_offset", "rho_min", "rho_max"}, where);
  CalibrationProfile p;
  if (!doc.contains("theta0") || !doc.contains("pbar") || !doc.contains("scale") ||
      !doc.contains("root_offset")) {
    throw ParseError(where + ": theta0, pbar, scale and root_offset are required");
  }
  p.theta0 = joint_vector(doc.at("theta0"), where + ".theta0");
  p.pbar = human_frame_from_json(doc.at("pbar"));
  require_object(doc.at("scale"), where + ".scale");
  for (const auto& [name, value] : doc.at("scale").items()) {
    p.scale.emplace(key_from(name, where), number(value, where + ".scale." + name));
  }
  p.root_offset = finger_map<Vec3>(doc, "root_offset", where, vec3);
  p.rho_min = finger_map<double>(doc, "rho_min", where, number);
  p.rho_max = finger_map<double>(doc, "rho_max", where, number);
  p.validate();
  return p;
}

json to_json(const JointMapping& m) {
  json entries = json::array();
  for (const auto& e : m.entries) {
    entries.push_back(
        {{"source", e.source}, {"target", e.target}, {"gain", e.gain}, {"offset", e.offset}});
  }
  return {{"target_dof", m.target_dof}, {"entries", entries}};
}

JointMapping joint_mapping_from_json(const json& doc) {
  const std::string where = "joint mapping";
  require_object(doc, where);
  reject_unknown(doc, {"target_dof", "entries"}, where);
  JointMapping m;
  m.target_dof = get_required<std::size_t>(doc, "target_dof", where);
  const auto entries = get_required<json>(doc, "entries", where);
  if (!entries.is_array()) {
    throw ParseError(where + ": entries must be an array");
  }
  for (const auto& e : entries) {
    require_object(e, where + " entry");
    reject_unknown(e, {"source", "target", "gain", "offset"}, where + " entry");
    m.entries.push_back({get_required<std::size_t>(e, "source", where),
                         get_required<std::size_t>(e, "target", where),
                         get_or(e, "gain", 1.0, where), get_or(e, "offset", 0.0, where)});
  }
  m.validate();
  return m;
}

EnvironmentSpec environment_spec_from_json(const json& doc, const fs::path& base_dir) {
  const std::string where = "environment config";
  require_object(doc, where);
  reject_unknown(doc,
                 {"arm_dof", "arm_lower", "arm_upper", "hand_model", "sync_policy", "seed",
                  "control_rate_hz", "lag_gain", "recorder_preset", "recorders", "hardware"},
                 where);
  EnvironmentSpec spec;
  auto& c = spec.config;
  c.arm_dof = get_or(doc, "arm_dof", c.arm_dof, where);
  if (doc.contains("arm_lower")) c.arm_lower = joint_vector(doc.at("arm_lower"), where);
  if (doc.contains("arm_upper")) c.arm_upper = joint_vector(doc.at("arm_upper"), where);
  c.seed = get_or(doc, "seed", c.seed, where);
  c.control_rate_hz = get_or(doc, "control_rate_hz", c.control_rate_hz, where);
  c.lag_gain = get_or(doc, "lag_gain", c.lag_gain, where);
  if (auto it = doc.find("sync_policy"); it != doc.end()) {
    const std::string sw = where + ".sync_policy";
    require_object(*it, sw);
    reject_unknown(*it, {"freshness_window", "tolerance"}, sw);
    c.sync_policy.freshness_window =
        get_or(*it, "freshness_window", c.sync_policy.freshness_window, sw);
    c.sync_policy.tolerance = get_or(*it, "tolerance", c.sync_policy.tolerance, sw);
  }
  c.sync_policy.validate();
  if (doc.contains("hand_model")) {
    spec.hand_model = resolve(base_dir, get_required<std::string>(doc, "hand_model", where));
  }

  const bool has_preset = doc.contains("recorder_preset");
  const bool has_list = doc.contains("recorders");
  if (has_preset == has_list) {
    throw ParseError(where + ": give exactly one of 'recorder_preset' and 'recorders'");
  }
  if (has_preset) {
    spec.recorders = recorder_preset(get_required<std::string>(doc, "recorder_preset", where));
  } else {
    const auto list = doc.at("recorders");
    if (!list.is_array() || list.empty()) {
      throw ParseError(where + ": 'recorders' must be a nonempty array");
    }
    for (const auto& r : list) {
      const std::string rw = where + ".recorders";
      require_object(r, rw);
      reject_unknown(r, {"name", "kind", "rate", "phase", "channels", "jitter"}, rw);
      RecorderDescriptor d;
      d.name = get_required<std::string>(r, "name", rw);
      d.kind = parse_recorder_kind(get_required<std::string>(r, "kind", rw));
      d.rate = get_or(r, "rate", d.rate, rw);
      d.phase = get_or(r, "phase", d.phase, rw);
      d.channels = get_or(r, "channels", d.channels, rw);
      if (auto j = r.find("jitter"); j != r.end()) {
        require_object(*j, rw + ".jitter");
        reject_unknown(*j, {"latency_mean", "latency_stddev", "dropout_prob", "seed"},
                       rw + ".jitter");
        d.jitter.latency_mean = get_or(*j, "latency_mean", 0.0, rw);
        d.jitter.latency_stddev = get_or(*j, "latency_stddev", 0.0, rw);
        d.jitter.dropout_prob = get_or(*j, "dropout_prob", 0.0, rw);
        d.jitter.seed = get_or<std::uint64_t>(*j, "seed", 0, rw);
      }
      d.validate();
      spec.recorders.push_back(d);
    }
  }

  if (auto it = doc.find("hardware"); it != doc.end()) {
    const std::string hw = where + ".hardware";
    require_object(*it, hw);
    reject_unknown(*it,
                   {"preset", "arm_type", "hand_type", "camera_preset", "camera_type",
                    "frame_width", "frame_height"},
                   hw);
    auto& h = spec.hardware;
    h.preset = get_or(*it, "preset", h.preset, hw);
    h.arm_type = get_or(*it, "arm_type", h.arm_type, hw);
    h.hand_type = get_or(*it, "hand_type", h.hand_type, hw);
    h.camera_preset = get_or(*it, "camera_preset", h.camera_preset, hw);
    h.camera_type = get_or(*it, "camera_type", h.camera_type, hw);
    h.frame_width = get_or(*it, "frame_width", h.frame_width, hw);
    h.frame_height = get_or(*it, "frame_height", h.frame_height, hw);
    if (h.frame_width == 0 || h.frame_height == 0) {
      throw ValidationError(hw + ": frame size must be positive");
    }
  }
  return spec;
}

json to_json(const EnvironmentSpec& spec) {
  const auto& c = spec.config;
  json recorders = json::array();
  for (const auto& d : spec.recorders) {
    json r = {{"name", d.name},
              {"kind", std::string(to_string(d.kind))},
              {"rate", d.rate},
              {"phase", d.phase},
              {"jitter",
               {{"latency_mean", d.jitter.latency_mean},
                {"latency_stddev", d.jitter.latency_stddev},
                {"dropout_prob", d.jitter.dropout_prob},
                {"seed", d.jitter.seed}}}};
    if (d.kind == RecorderKind::tactile) r["channels"] = d.channels;
    recorders.push_back(r);
  }
  json doc = {{"arm_dof", c.arm_dof},
              {"seed", c.seed},
              {"control_rate_hz", c.control_rate_hz},
              {"lag_gain", c.lag_gain},
              {"sync_policy",
               {{"freshness_window", c.sync_policy.freshness_window},
                {"tolerance", c.sync_policy.tolerance}}},
              {"recorders", recorders},
              {"hardware",
               {{"preset", spec.hardware.preset},
                {"arm_type", spec.hardware.arm_type},
                {"hand_type", spec.hardware.hand_type},
                {"camera_preset", spec.hardware.camera_preset},
                {"camera_type", spec.hardware.camera_type},
                {"frame_width", spec.hardware.frame_width},
                {"frame_height", spec.hardware.frame_height}}}};
  if (c.arm_lower.size() != 0) doc["arm_lower"] = array_of(c.arm_lower);
  if (c.arm_upper.size() != 0) doc["arm_upper"] = array_of(c.arm_upper);
  if (spec.hand_model) doc["hand_model"] = spec.hand_model->generic_string();
  return doc;
}

void RunConfig::validate() const {
  if (episodes == 0) {
    throw ValidationError("run config: episode count must be positive");
  }
  if (steps == 0) {
    throw ValidationError("run config: steps must be positive");
  }
  if (output.empty()) {
    throw ValidationError("run config: output root is required");
  }
  if (session_id.empty() || session_id.find('/') != std::string::npos) {
    throw ValidationError("run config: session id must be a plain name");
  }
  if (control == ControlMode::direct && !mapping) {
    throw ValidationError("run config: direct control needs a joint mapping");
  }
}

RunConfig run_config_from_json(const json& doc, const fs::path& base_dir) {
  const std::string where = "run config";
  require_object(doc, where);
  reject_unknown(doc,
                 {"environment", "retarget", "hand_model", "human_model", "calibration", "mapping",
                  "output", "episodes", "steps", "seed", "task_name", "session_id", "control"},
                 where);
  RunConfig r;
  r.environment = resolve(base_dir, get_required<std::string>(doc, "environment", where));
  r.retarget = resolve(base_dir, get_required<std::string>(doc, "retarget", where));
  r.human_model = resolve(base_dir, get_required<std::string>(doc, "human_model", where));
  if (doc.contains("hand_model")) {
    r.hand_model = resolve(base_dir, get_required<std::string>(doc, "hand_model", where));
  }
  if (doc.contains("calibration")) {
    r.calibration = resolve(base_dir, get_required<std::string>(doc, "calibration", where));
  }
  if (doc.contains("mapping")) {
    r.mapping = resolve(base_dir, get_required<std::string>(doc, "mapping", where));
  }
  if (doc.contains("output")) {
    r.output = resolve(base_dir, get_required<std::string>(doc, "output", where));
  }
  r.episodes = get_or(doc, "episodes", r.episodes, where);
  r.steps = get_or(doc, "steps", r.steps, where);
  r.seed = get_or(doc, "seed", r.seed, where);
  r.task_name = get_or(doc, "task_name", r.task_name, where);
  r.session_id = get_or(doc, "session_id", r.session_id, where);
  const auto control = get_or<std::string>(doc, "control", "retarget", where);
  if (control == "retarget") {
    r.control = ControlMode::retarget;
  } else if (control == "direct") {
    r.control = ControlMode::direct;
  } else {
    throw ParseError(where + ": control must be 'retarget' or 'direct'");
  }
  return r;
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw MissingError("cannot open '" + path.string() + "'");
  }
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot write '" + path.string() + "'");
  }
  out << text;
  if (!out) {
    throw IoError("failed writing '" + path.string() + "'");
  }
}

}  // namespace teledex
