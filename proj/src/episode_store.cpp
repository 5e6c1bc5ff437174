#include "teledex/episode_store.hpp"

#include "teledex/checksum.hpp"
#include "teledex/errors.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace teledex {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint8_t kNoSource = 255;
constexpr const char* kTelemetryFile = "telemetry.bin";
constexpr const char* kMetadataFile = "metadata.json";
constexpr const char* kCameraInfoFile = "camera_info.json";
constexpr const char* kManifestFile = "manifest.json";

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw MissingError("cannot open '" + path.string() + "'");
  }
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot create '" + path.string() + "'");
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) {
    throw IoError("failed writing '" + path.string() + "'");
  }
}

void append_f64(std::string& out, const double* data, std::size_t count) {
  for (std::size_t k = 0; k < count; ++k) {
    auto bits = std::bit_cast<std::uint64_t>(data[k]);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    char raw[8];
    std::memcpy(raw, &bits, 8);
    out.append(raw, 8);
  }
}

void append_u8(std::string& out, const std::vector<std::uint8_t>& data) {
  out.append(reinterpret_cast<const char*>(data.data()), data.size());
}

void read_f64(const std::string& in, std::size_t& pos, double* data, std::size_t count) {
  if (in.size() - pos < count * 8) {
    throw ParseError("telemetry: column block runs past the end of the file");
  }
  for (std::size_t k = 0; k < count; ++k) {
    std::uint64_t bits;
    std::memcpy(&bits, in.data() + pos, 8);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap64(bits);
    data[k] = std::bit_cast<double>(bits);
    pos += 8;
  }
}

json column_header(const std::string& name, const char* dtype, std::size_t rows,
                   std::optional<std::size_t> cols) {
  json shape = json::array({rows});
  if (cols) shape.push_back(*cols);
  return {{"name", name}, {"dtype", dtype}, {"shape", shape}};
}

template <typename T>
T field(const json& doc, const char* key, const char* where) {
  auto it = doc.find(key);
  if (it == doc.end()) {
    throw ParseError(std::string(where) + ": missing field '" + key + "'");
  }
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string(where) + ": field '" + key + "' has the wrong type");
  }
}

void reject_unknown_keys(const json& doc, const std::set<std::string>& known, const char* where) {
  for (const auto& [key, value] : doc.items()) {
    if (!known.count(key)) {
      throw ParseError(std::string(where) + ": unexpected field '" + key + "'");
    }
  }
}

json parse_json(const std::string& text, const std::string& where) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(where + ": " + e.what());
  }
}

std::string frame_path(const std::string& camera, std::uint64_t index) {
  char name[32];
  std::snprintf(name, sizeof(name), "%06llu.ppm", static_cast<unsigned long long>(index));
  return "frames/" + camera + "/" + name;
}

EpisodeBuffer buffer_from_table(const TelemetryTable& table, double started_at, double ended_at,
                                json config_snapshot) {
  EpisodeBuffer buffer;
  buffer.started_at = started_at;
  buffer.ended_at = ended_at;
  buffer.config_snapshot = std::move(config_snapshot);
  buffer.observations.reserve(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    const auto row = static_cast<Eigen::Index>(r);
    Observation obs;
    obs.qpos = table.qpos.row(row).transpose();
    obs.qvel = table.qvel.row(row).transpose();
    obs.action = table.action.row(row).transpose();
    for (const auto& [cam, column] : table.frame_index) {
      const auto index = static_cast<std::uint64_t>(column[r]);
      obs.frames[cam] = {index, cam + "/" + std::to_string(index)};
    }
    for (const auto& [name, values] : table.tactile) {
      const auto v = values.row(row);
      obs.tactile[name] = std::vector<double>(v.data(), v.data() + v.size());
    }
    obs.sync = table.bundle(r);
    obs.step_index = static_cast<std::size_t>(table.step_index[r]);
    buffer.observations.push_back(std::move(obs));
  }
  return buffer;
}

}  // namespace

std::string to_hex(std::uint64_t value) {
  char text[17];
  std::snprintf(text, sizeof(text), "%016llx", static_cast<unsigned long long>(value));
  return text;
}

std::string canonical_json(const json& doc) { return doc.dump(2) + "\n"; }

void SessionMetadata::validate() const {
  if (timesteps == 0) {
    throw ValidationError("metadata: timesteps must be positive");
  }
  if (!(dt > 0.0) || !std::isfinite(dt)) {
    throw ValidationError("metadata: dt must be positive");
  }
  if (std::abs(static_cast<double>(timesteps) * dt - duration_sec) > dt) {
    throw ValidationError("metadata: duration disagrees with timesteps * dt");
  }
  if (qpos_dim != total_dof) {
    throw ValidationError("metadata: qpos_dim must equal total_dof");
  }
  sync_policy.validate();
}

void CameraIntrinsics::validate(const std::string& name) const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    throw ValidationError("camera '" + name + "': focal lengths must be positive");
  }
  if (width == 0 || height == 0 || !(cx < width) || !(cy < height)) {
    throw ValidationError("camera '" + name + "': principal point outside the image");
  }
}

json to_json(const SessionMetadata& m) {
  return {
      {"task_name", m.task_name},
      {"episode_id", m.episode_id},
      {"session_id", m.session_id},
      {"duration_sec", m.duration_sec},
      {"timesteps", m.timesteps},
      {"hardware_preset", m.hardware_preset},
      {"arm_type", m.arm_type},
      {"hand_type", m.hand_type},
      {"total_dof", m.total_dof},
      {"camera_preset", m.camera_preset},
      {"camera_type", m.camera_type},
      {"resolution", m.resolution},
      {"fps", m.fps},
      {"control_freq_hz", m.control_freq_hz},
      {"dt", m.dt},
      {"data_format", m.data_format},
      {"qpos_dim", m.qpos_dim},
      {"camera_streams", m.camera_streams},
      {"tactile_sensors", m.tactile_sensors},
      {"sync_policy",
       {{"freshness_window", m.sync_policy.freshness_window},
        {"tolerance", m.sync_policy.tolerance}}},
  };
}

SessionMetadata session_metadata_from_json(const json& doc) {
  constexpr const char* where = "metadata.json";
  if (!doc.is_object()) {
    throw ParseError("metadata.json: top level must be an object");
  }
  reject_unknown_keys(doc,
                      {"task_name", "episode_id", "session_id", "duration_sec", "timesteps",
                       "hardware_preset", "arm_type", "hand_type", "total_dof", "camera_preset",
                       "camera_type", "resolution", "fps", "control_freq_hz", "dt", "data_format",
                       "qpos_dim", "camera_streams", "tactile_sensors", "sync_policy"},
                      where);
  SessionMetadata m;
  m.task_name = field<std::string>(doc, "task_name", where);
  m.episode_id = field<std::string>(doc, "episode_id", where);
  m.session_id = field<std::string>(doc, "session_id", where);
  m.duration_sec = field<double>(doc, "duration_sec", where);
  m.timesteps = field<std::size_t>(doc, "timesteps", where);
  m.hardware_preset = field<std::string>(doc, "hardware_preset", where);
  m.arm_type = field<std::string>(doc, "arm_type", where);
  m.hand_type = field<std::string>(doc, "hand_type", where);
  m.total_dof = field<std::size_t>(doc, "total_dof", where);
  m.camera_preset = field<std::string>(doc, "camera_preset", where);
  m.camera_type = field<std::string>(doc, "camera_type", where);
  m.resolution = field<std::string>(doc, "resolution", where);
  m.fps = field<double>(doc, "fps", where);
  m.control_freq_hz = field<double>(doc, "control_freq_hz", where);
  m.dt = field<double>(doc, "dt", where);
  m.data_format = field<std::string>(doc, "data_format", where);
  m.qpos_dim = field<std::size_t>(doc, "qpos_dim", where);
  m.camera_streams = field<std::vector<std::string>>(doc, "camera_streams", where);
  m.tactile_sensors = field<std::vector<std::string>>(doc, "tactile_sensors", where);
  const auto policy = field<json>(doc, "sync_policy", where);
  m.sync_policy.freshness_window = field<double>(policy, "freshness_window", where);
  m.sync_policy.tolerance = field<double>(policy, "tolerance", where);
  return m;
}

json to_json(const CameraInfo& cameras) {
  json streams = json::object();
  for (const auto& [name, c] : cameras) {
    streams[name] = {{"fx", c.fx},         {"fy", c.fy},         {"cx", c.cx}, {"cy", c.cy},
                     {"width", c.width},   {"height", c.height}, {"pose", c.pose}};
  }
  return {{"cameras", streams}};
}

CameraInfo camera_info_from_json(const json& doc) {
  constexpr const char* where = "camera_info.json";
  const auto streams = field<json>(doc, "cameras", where);
  if (!streams.is_object()) {
    throw ParseError("camera_info.json: 'cameras' must be an object");
  }
  CameraInfo out;
  for (const auto& [name, c] : streams.items()) {
    CameraIntrinsics cam;
    cam.fx = field<double>(c, "fx", where);
    cam.fy = field<double>(c, "fy", where);
    cam.cx = field<double>(c, "cx", where);
    cam.cy = field<double>(c, "cy", where);
    cam.width = field<std::uint32_t>(c, "width", where);
    cam.height = field<std::uint32_t>(c, "height", where);
    cam.pose = field<std::string>(c, "pose", where);
    cam.validate(name);
    out.emplace(name, cam);
  }
  return out;
}

json to_json(const EpisodeManifest& manifest) {
  json files = json::array();
  for (const auto& f : manifest.files) {
    files.push_back({{"path", f.path}, {"bytes", f.bytes}, {"fnv1a64", f.fnv1a64}});
  }
  return {{"version", manifest.version}, {"files", files}};
}

fs::path episode_dir(const fs::path& root, const SessionMetadata& metadata) {
  return root / metadata.session_id / metadata.episode_id;
}

std::string synthetic_frame(std::uint32_t width, std::uint32_t height, std::uint64_t index) {
  std::string out = "P6\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n";
  const std::size_t header = out.size();
  out.resize(header + std::size_t{3} * width * height);
  auto* px = reinterpret_cast<unsigned char*>(out.data() + header);
  for (std::uint32_t y = 0; y < height; ++y) {
    for (std::uint32_t x = 0; x < width; ++x) {
      const std::size_t at = 3 * (std::size_t{y} * width + x);
      px[at + 0] = static_cast<unsigned char>((x * 4 + index) & 0xff);
      px[at + 1] = static_cast<unsigned char>((y * 4 + 2 * index) & 0xff);
      px[at + 2] = static_cast<unsigned char>(((x ^ y) + 3 * index) & 0xff);
    }
  }
  px[0] = static_cast<unsigned char>((index >> 16) & 0xff);
  px[1] = static_cast<unsigned char>((index >> 8) & 0xff);
  px[2] = static_cast<unsigned char>(index & 0xff);
  return out;
}

std::uint64_t frame_index_of(const std::string& ppm) {
  std::istringstream in(ppm);
  std::string magic;
  std::uint32_t width = 0;
  std::uint32_t height = 0;
  int maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (magic != "P6" || width == 0 || height == 0 || maxval != 255) {
    throw ParseError("not a binary PPM frame");
  }
  in.get();
  const auto pos = static_cast<std::size_t>(in.tellg());
  if (ppm.size() < pos + 3) {
    throw ParseError("PPM frame has no pixel data");
  }
  const auto* px = reinterpret_cast<const unsigned char*>(ppm.data() + pos);
  return (std::uint64_t{px[0]} << 16) | (std::uint64_t{px[1]} << 8) | px[2];
}

void TelemetryTable::validate() const {
  const auto n = rows();
  const auto check_rows = [n](Eigen::Index r, const std::string& what) {
    if (static_cast<std::size_t>(r) != n) {
      throw ValidationError("telemetry: column '" + what + "' has a different row count");
    }
  };
  check_rows(qpos.rows(), "qpos");
  check_rows(qvel.rows(), "qvel");
  check_rows(action.rows(), "action");
  check_rows(timestamps.rows(), "timestamps");
  if (qvel.cols() != qpos.cols() || action.cols() != qpos.cols()) {
    throw ValidationError("telemetry: qpos, qvel and action widths differ");
  }
  if (static_cast<std::size_t>(timestamps.cols()) != sources.size()) {
    throw ValidationError("telemetry: timestamp columns do not match the source list");
  }
  if (sources.size() >= kNoSource) {
    throw ValidationError("telemetry: too many sources");
  }
  for (const auto* v : {&sync_validation_is_valid, &sync_failure, &sync_stale_source}) {
    check_rows(static_cast<Eigen::Index>(v->size()), "sync flags");
  }
  check_rows(static_cast<Eigen::Index>(sync_checked_at.size()), "sync_checked_at");
  check_rows(static_cast<Eigen::Index>(step_index.size()), "step_index");
  for (const auto& [cam, column] : frame_index) {
    check_rows(static_cast<Eigen::Index>(column.size()), "frames/" + cam);
  }
  for (const auto& [name, values] : tactile) check_rows(values.rows(), "tactile/" + name);
  for (double d : sync_max_diff) {
    if (!(d >= 0.0)) throw ValidationError("telemetry: negative sync_max_diff");
  }
}

SyncBundle TelemetryTable::bundle(std::size_t row) const {
  SyncBundle b;
  const auto r = static_cast<Eigen::Index>(row);
  for (std::size_t s = 0; s < sources.size(); ++s) {
    b.timestamps[sources[s]] = timestamps(r, static_cast<Eigen::Index>(s));
  }
  b.is_valid = sync_validation_is_valid[row] != 0;
  b.max_diff = sync_max_diff[row];
  b.checked_at = sync_checked_at[row];
  switch (sync_failure[row]) {
    case 0: b.failure = {}; break;
    case 1:
      if (sync_stale_source[row] >= sources.size()) {
        throw ParseError("telemetry: stale source index out of range");
      }
      b.failure = {SyncFailureKind::stale, sources[sync_stale_source[row]]};
      break;
    case 2: b.failure = {SyncFailureKind::inconsistent, {}}; break;
    default: throw ParseError("telemetry: unknown sync failure code");
  }
  return b;
}

std::vector<SyncBundle> TelemetryTable::bundles() const {
  std::vector<SyncBundle> out;
  out.reserve(rows());
  for (std::size_t r = 0; r < rows(); ++r) out.push_back(bundle(r));
  return out;
}

TelemetryTable to_table(const EpisodeBuffer& buffer) {
  if (buffer.observations.empty()) {
    throw ValidationError("episode buffer is empty");
  }
  const auto& first = buffer.observations.front();
  const auto n = buffer.observations.size();
  const auto rows = static_cast<Eigen::Index>(n);
  const auto dof = first.qpos.size();

  TelemetryTable t;
  for (const auto& [name, ts] : first.sync.timestamps) t.sources.push_back(name);
  t.qpos.resize(rows, dof);
  t.qvel.resize(rows, dof);
  t.action.resize(rows, dof);
  t.timestamps.resize(rows, static_cast<Eigen::Index>(t.sources.size()));
  for (const auto& [cam, ref] : first.frames) t.frame_index[cam].reserve(n);
  for (const auto& [name, values] : first.tactile) {
    t.tactile[name].resize(rows, static_cast<Eigen::Index>(values.size()));
  }

  for (std::size_t k = 0; k < n; ++k) {
    const auto& obs = buffer.observations[k];
    const auto r = static_cast<Eigen::Index>(k);
    if (obs.qpos.size() != dof || obs.qvel.size() != dof || obs.action.size() != dof) {
      throw ValidationError("episode buffer: observation " + std::to_string(k) +
                            " has inconsistent joint dimensions");
    }
    if (obs.step_index != k) {
      throw ValidationError("episode buffer: step_index is not contiguous at " +
                            std::to_string(k));
    }
    t.qpos.row(r) = obs.qpos.transpose();
    t.qvel.row(r) = obs.qvel.transpose();
    t.action.row(r) = obs.action.transpose();
    if (obs.sync.timestamps.size() != t.sources.size()) {
      throw ValidationError("episode buffer: source set changes at step " + std::to_string(k));
    }
    std::size_t s = 0;
    std::uint8_t stale = kNoSource;
    for (const auto& [name, ts] : obs.sync.timestamps) {
      if (name != t.sources[s]) {
        throw ValidationError("episode buffer: source set changes at step " + std::to_string(k));
      }
      t.timestamps(r, static_cast<Eigen::Index>(s)) = ts;
      if (obs.sync.failure.kind == SyncFailureKind::stale && obs.sync.failure.source == name) {
        stale = static_cast<std::uint8_t>(s);
      }
      ++s;
    }
    t.sync_validation_is_valid.push_back(obs.sync.is_valid ? 1 : 0);
    t.sync_max_diff.push_back(obs.sync.max_diff);
    t.sync_checked_at.push_back(obs.sync.checked_at);
    t.sync_failure.push_back(static_cast<std::uint8_t>(obs.sync.failure.kind));
    t.sync_stale_source.push_back(stale);
    t.step_index.push_back(static_cast<double>(obs.step_index));
    if (obs.frames.size() != t.frame_index.size()) {
      throw ValidationError("episode buffer: camera set changes at step " + std::to_string(k));
    }
    for (auto& [cam, column] : t.frame_index) {
      auto it = obs.frames.find(cam);
      if (it == obs.frames.end()) {
        throw ValidationError("episode buffer: camera set changes at step " + std::to_string(k));
      }
      column.push_back(static_cast<double>(it->second.index));
    }
    for (auto& [name, values] : t.tactile) {
      auto it = obs.tactile.find(name);
      if (it == obs.tactile.end() || static_cast<Eigen::Index>(it->second.size()) != values.cols()) {
        throw ValidationError("episode buffer: tactile layout changes at step " +
                              std::to_string(k));
      }
      for (std::size_t c = 0; c < it->second.size(); ++c) {
        values(r, static_cast<Eigen::Index>(c)) = it->second[c];
      }
    }
  }
  t.validate();
  return t;
}

std::string encode_telemetry(const TelemetryTable& table, double started_at, double ended_at,
                             const json& config_snapshot) {
  table.validate();
  const auto n = table.rows();
  const auto dof = static_cast<std::size_t>(table.qpos.cols());

  json columns = json::array();
  columns.push_back(column_header("qpos", "float64", n, dof));
  columns.push_back(column_header("qvel", "float64", n, dof));
  columns.push_back(column_header("action", "float64", n, dof));
  columns.push_back(column_header("timestamps", "float64", n, table.sources.size()));
  columns.push_back(column_header("sync_validation_is_valid", "uint8", n, std::nullopt));
  columns.push_back(column_header("sync_max_diff", "float64", n, std::nullopt));
  columns.push_back(column_header("sync_checked_at", "float64", n, std::nullopt));
  columns.push_back(column_header("sync_failure", "uint8", n, std::nullopt));
  columns.push_back(column_header("sync_stale_source", "uint8", n, std::nullopt));
  columns.push_back(column_header("step_index", "float64", n, std::nullopt));
  for (const auto& [cam, column] : table.frame_index) {
    columns.push_back(column_header("frames/" + cam, "float64", n, std::nullopt));
  }
  for (const auto& [name, values] : table.tactile) {
    columns.push_back(
        column_header("tactile/" + name, "float64", n, static_cast<std::size_t>(values.cols())));
  }

  const json header = {{"format", "otdx-telemetry"},
                       {"version", kTelemetryVersion},
                       {"rows", n},
                       {"sources", table.sources},
                       {"columns", columns},
                       {"started_at", started_at},
                       {"ended_at", ended_at},
                       {"config", config_snapshot}};

  std::string out(kTelemetryMagic, 8);
  out += header.dump();
  out += '\n';
  append_f64(out, table.qpos.data(), static_cast<std::size_t>(table.qpos.size()));
  append_f64(out, table.qvel.data(), static_cast<std::size_t>(table.qvel.size()));
  append_f64(out, table.action.data(), static_cast<std::size_t>(table.action.size()));
  append_f64(out, table.timestamps.data(), static_cast<std::size_t>(table.timestamps.size()));
  append_u8(out, table.sync_validation_is_valid);
  append_f64(out, table.sync_max_diff.data(), n);
  append_f64(out, table.sync_checked_at.data(), n);
  append_u8(out, table.sync_failure);
  append_u8(out, table.sync_stale_source);
  append_f64(out, table.step_index.data(), n);
  for (const auto& [cam, column] : table.frame_index) append_f64(out, column.data(), n);
  for (const auto& [name, values] : table.tactile) {
    append_f64(out, values.data(), static_cast<std::size_t>(values.size()));
  }
  return out;
}

DecodedTelemetry decode_telemetry(const std::string& bytes) {
  if (bytes.size() < 8 || bytes.compare(0, 8, kTelemetryMagic) != 0) {
    throw ParseError("telemetry: bad magic");
  }
  const auto eol = bytes.find('\n', 8);
  if (eol == std::string::npos) {
    throw ParseError("telemetry: header line is not terminated");
  }
  const json header = parse_json(bytes.substr(8, eol - 8), "telemetry header");
  constexpr const char* where = "telemetry header";
  if (field<std::string>(header, "format", where) != "otdx-telemetry") {
    throw ParseError("telemetry: unknown container format");
  }
  if (field<int>(header, "version", where) != kTelemetryVersion) {
    throw VersionError("telemetry: unsupported version");
  }

  DecodedTelemetry out;
  auto& t = out.table;
  const auto n = field<std::size_t>(header, "rows", where);
  t.sources = field<std::vector<std::string>>(header, "sources", where);
  out.started_at = field<double>(header, "started_at", where);
  out.ended_at = field<double>(header, "ended_at", where);
  out.config_snapshot = field<json>(header, "config", where);

  std::size_t pos = eol + 1;
  std::set<std::string> seen;
  for (const auto& col : field<json>(header, "columns", where)) {
    const auto name = field<std::string>(col, "name", where);
    const auto dtype = field<std::string>(col, "dtype", where);
    const auto shape = field<std::vector<std::size_t>>(col, "shape", where);
    if (shape.empty() || shape.size() > 2 || shape[0] != n) {
      throw ParseError("telemetry: column '" + name + "' has a bad shape");
    }
    if (!seen.insert(name).second) {
      throw ParseError("telemetry: duplicate column '" + name + "'");
    }
    const std::size_t cols = shape.size() == 2 ? shape[1] : 1;
    const auto rows = static_cast<Eigen::Index>(n);

    if (dtype == "uint8") {
      if (shape.size() != 1 || bytes.size() - pos < n) {
        throw ParseError("telemetry: bad uint8 column '" + name + "'");
      }
      std::vector<std::uint8_t> values(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                       bytes.begin() + static_cast<std::ptrdiff_t>(pos + n));
      pos += n;
      if (name == "sync_validation_is_valid") t.sync_validation_is_valid = std::move(values);
      else if (name == "sync_failure") t.sync_failure = std::move(values);
      else if (name == "sync_stale_source") t.sync_stale_source = std::move(values);
      else throw ParseError("telemetry: unknown uint8 column '" + name + "'");
      continue;
    }
    if (dtype != "float64") {
      throw ParseError("telemetry: unsupported dtype '" + dtype + "'");
    }
    if (shape.size() == 2) {
      RowMatrix m(rows, static_cast<Eigen::Index>(cols));
      read_f64(bytes, pos, m.data(), n * cols);
      if (name == "qpos") t.qpos = std::move(m);
      else if (name == "qvel") t.qvel = std::move(m);
      else if (name == "action") t.action = std::move(m);
      else if (name == "timestamps") t.timestamps = std::move(m);
      else if (name.rfind("tactile/", 0) == 0) t.tactile[name.substr(8)] = std::move(m);
      else throw ParseError("telemetry: unknown matrix column '" + name + "'");
    } else {
      std::vector<double> v(n);
      read_f64(bytes, pos, v.data(), n);
      if (name == "sync_max_diff") t.sync_max_diff = std::move(v);
      else if (name == "sync_checked_at") t.sync_checked_at = std::move(v);
      else if (name == "step_index") t.step_index = std::move(v);
      else if (name.rfind("frames/", 0) == 0) t.frame_index[name.substr(7)] = std::move(v);
      else throw ParseError("telemetry: unknown column '" + name + "'");
    }
  }
  if (pos != bytes.size()) {
    throw ParseError("telemetry: trailing bytes after the last column");
  }
  for (const char* required :
       {"qpos", "qvel", "action", "timestamps", "sync_validation_is_valid", "sync_max_diff",
        "sync_checked_at", "sync_failure", "sync_stale_source", "step_index"}) {
    if (!seen.count(required)) {
      throw ParseError(std::string("telemetry: missing column '") + required + "'");
    }
  }
  t.validate();
  return out;
}

EpisodeManifest write_episode(const EpisodeBuffer& buffer, const SessionMetadata& metadata,
                              const CameraInfo& cameras, const fs::path& dir) {
  if (buffer.observations.empty()) {
    throw ValidationError("cannot write an empty episode");
  }
  metadata.validate();
  if (metadata.timesteps != buffer.observations.size()) {
    throw ValidationError("metadata timesteps (" + std::to_string(metadata.timesteps) +
                          ") disagree with the buffer (" +
                          std::to_string(buffer.observations.size()) + ")");
  }
  if (static_cast<std::size_t>(buffer.observations.front().qpos.size()) != metadata.qpos_dim) {
    throw ValidationError("metadata qpos_dim disagrees with the buffer");
  }
  for (const auto& [name, cam] : cameras) cam.validate(name);

  const auto table = to_table(buffer);
  for (const auto& [cam, column] : table.frame_index) {
    if (!cameras.count(cam)) {
      throw ValidationError("no camera intrinsics for stream '" + cam + "'");
    }
  }

  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create episode directory '" + dir.string() + "': " + ec.message());
  }
  for (const char* name : {kTelemetryFile, kMetadataFile, kCameraInfoFile, kManifestFile}) {
    fs::remove(dir / name, ec);
  }
  fs::remove_all(dir / "frames", ec);

  std::map<std::string, std::string> files;
  files[kTelemetryFile] =
      encode_telemetry(table, buffer.started_at, buffer.ended_at, buffer.config_snapshot);
  files[kMetadataFile] = canonical_json(to_json(metadata));
  files[kCameraInfoFile] = canonical_json(to_json(cameras));
  for (const auto& [cam, column] : table.frame_index) {
    const auto& intr = cameras.at(cam);
    std::set<std::uint64_t> indices;
    for (double v : column) indices.insert(static_cast<std::uint64_t>(v));
    for (auto index : indices) {
      files[frame_path(cam, index)] = synthetic_frame(intr.width, intr.height, index);
    }
  }

  EpisodeManifest manifest;
  for (const auto& [path, bytes] : files) {
    const fs::path target = dir / fs::path(path);
    fs::create_directories(target.parent_path(), ec);
    write_file(target, bytes);
    manifest.files.push_back({path, bytes.size(), to_hex(fnv1a64(bytes))});
  }
  write_file(dir / kManifestFile, canonical_json(to_json(manifest)));
  return manifest;
}

StoredEpisode read_episode(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    throw MissingError("episode directory '" + dir.string() + "' does not exist");
  }
  const auto manifest_text = read_file(dir / kManifestFile);
  json doc;
  try {
    doc = json::parse(manifest_text);
  } catch (const json::parse_error&) {
    throw IntegrityError("manifest.json is corrupt");
  }
  if (canonical_json(doc) != manifest_text) {
    throw IntegrityError("manifest.json is not in canonical form");
  }
  if (!doc.is_object() || !doc.contains("version") || !doc.contains("files") ||
      doc.size() != 2) {
    throw IntegrityError("manifest.json does not follow the manifest schema");
  }
  if (!doc.at("version").is_number_integer() || doc.at("version").get<int>() != kManifestVersion) {
    throw VersionError("manifest version " + doc.at("version").dump() + " is not supported");
  }

  StoredEpisode out;
  out.manifest.version = kManifestVersion;
  std::set<std::string> listed;
  std::map<std::string, std::string> contents;
  for (const auto& entry : doc.at("files")) {
    ManifestEntry e;
    try {
      e.path = entry.at("path").get<std::string>();
      e.bytes = entry.at("bytes").get<std::uint64_t>();
      e.fnv1a64 = entry.at("fnv1a64").get<std::string>();
    } catch (const json::exception&) {
      throw IntegrityError("manifest.json has a malformed file entry");
    }
    if (entry.size() != 3 || e.path.empty() || fs::path(e.path).is_absolute() ||
        e.path.find("..") != std::string::npos || e.path == kManifestFile) {
      throw IntegrityError("manifest.json has a malformed file entry");
    }
    if (!listed.insert(e.path).second) {
      throw IntegrityError("manifest.json lists '" + e.path + "' twice");
    }
    const fs::path file = dir / fs::path(e.path);
    if (!fs::is_regular_file(file)) {
      throw MissingError("file '" + e.path + "' listed in the manifest is missing");
    }
    auto bytes = read_file(file);
    if (bytes.size() != e.bytes || to_hex(fnv1a64(bytes)) != e.fnv1a64) {
      throw IntegrityError("checksum mismatch for '" + e.path + "'");
    }
    contents.emplace(e.path, std::move(bytes));
    out.manifest.files.push_back(std::move(e));
  }

  for (const auto& item : fs::recursive_directory_iterator(dir)) {
    if (!item.is_regular_file()) continue;
    const auto rel = fs::relative(item.path(), dir).generic_string();
    if (rel != kManifestFile && !listed.count(rel)) {
      throw IntegrityError("file '" + rel + "' is not listed in the manifest");
    }
  }
  for (const char* required : {kTelemetryFile, kMetadataFile, kCameraInfoFile}) {
    if (!contents.count(required)) {
      throw MissingError(std::string("manifest does not list '") + required + "'");
    }
  }

  auto decoded = decode_telemetry(contents.at(kTelemetryFile));
  out.metadata = session_metadata_from_json(
      parse_json(contents.at(kMetadataFile), kMetadataFile));
  out.cameras = camera_info_from_json(parse_json(contents.at(kCameraInfoFile), kCameraInfoFile));
  if (out.metadata.timesteps != decoded.table.rows()) {
    throw ValidationError("metadata timesteps disagree with telemetry rows");
  }
  for (const auto& [cam, column] : decoded.table.frame_index) {
    for (double v : column) {
      if (!listed.count(frame_path(cam, static_cast<std::uint64_t>(v)))) {
        throw MissingError("frame " + frame_path(cam, static_cast<std::uint64_t>(v)) +
                           " is referenced by telemetry but not stored");
      }
    }
  }
  out.buffer = buffer_from_table(decoded.table, decoded.started_at, decoded.ended_at,
                                 std::move(decoded.config_snapshot));
  out.table = std::move(decoded.table);
  return out;
}

FilteredTelemetry filter_by_sync(const TelemetryTable& table, SyncFilterMode mode,
                                 double tolerance) {
  table.validate();
  FilteredTelemetry out;
  if (mode == SyncFilterMode::weight_by_max_diff) {
    if (!(tolerance > 0.0)) {
      throw ValidationError("weighting needs a positive tolerance");
    }
    out.table = table;
    out.weights.reserve(table.rows());
    for (double d : table.sync_max_diff) {
      out.weights.push_back(std::clamp(1.0 - d / tolerance, 0.0, 1.0));
    }
    return out;
  }

  std::vector<Eigen::Index> keep;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    if (table.sync_validation_is_valid[r]) keep.push_back(static_cast<Eigen::Index>(r));
  }
  auto& t = out.table;
  t.sources = table.sources;
  const auto take_rows = [&keep](const RowMatrix& m) {
    RowMatrix sub(static_cast<Eigen::Index>(keep.size()), m.cols());
    for (std::size_t k = 0; k < keep.size(); ++k) {
      sub.row(static_cast<Eigen::Index>(k)) = m.row(keep[k]);
    }
    return sub;
  };
  const auto take = [&keep](const auto& v) {
    std::decay_t<decltype(v)> sub;
    sub.reserve(keep.size());
    for (auto r : keep) sub.push_back(v[static_cast<std::size_t>(r)]);
    return sub;
  };
  t.qpos = take_rows(table.qpos);
  t.qvel = take_rows(table.qvel);
  t.action = take_rows(table.action);
  t.timestamps = take_rows(table.timestamps);
  t.sync_validation_is_valid = take(table.sync_validation_is_valid);
  t.sync_max_diff = take(table.sync_max_diff);
  t.sync_checked_at = take(table.sync_checked_at);
  t.sync_failure = take(table.sync_failure);
  t.sync_stale_source = take(table.sync_stale_source);
  t.step_index = take(table.step_index);
  for (const auto& [cam, column] : table.frame_index) t.frame_index[cam] = take(column);
  for (const auto& [name, values] : table.tactile) t.tactile[name] = take_rows(values);
  return out;
}

json DatasetReport::to_json() const {
  const auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  json failures_json = json::array();
  for (const auto& f : failures) {
    failures_json.push_back({{"episode", f.episode}, {"error", f.error}});
  }
  json per = json::array();
  for (const auto& e : per_episode) {
    per.push_back({{"episode", e.episode},
                   {"timesteps", e.sync.timesteps},
                   {"valid", e.sync.valid},
                   {"sync_success_rate", e.sync.success_rate},
                   {"avg_sync_error_ms", opt(e.sync.avg_error_ms)},
                   {"tp99_ms", opt(e.sync.tp99_ms)}});
  }
  return {{"episodes", episodes},
          {"total_timesteps", total_timesteps},
          {"sync_success_rate", sync_success_rate},
          {"avg_sync_error_ms", opt(avg_sync_error_ms)},
          {"tp99_ms", opt(tp99_ms)},
          {"per_episode", per},
          {"failures", failures_json}};
}

DatasetReport validate_dataset(const fs::path& root, Execution execution) {
  if (!fs::is_directory(root)) {
    throw MissingError("dataset root '" + root.string() + "' does not exist");
  }
  std::vector<fs::path> episodes;
  std::vector<fs::path> sessions;
  for (const auto& s : fs::directory_iterator(root)) {
    if (s.is_directory()) sessions.push_back(s.path());
  }
  std::sort(sessions.begin(), sessions.end());
  for (const auto& s : sessions) {
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(s)) {
      if (e.is_directory()) found.push_back(e.path());
    }
    std::sort(found.begin(), found.end());
    episodes.insert(episodes.end(), found.begin(), found.end());
  }
  if (episodes.empty()) {
    throw ValidationError("dataset root '" + root.string() + "' contains no episodes");
  }

  struct Outcome {
    std::vector<SyncBundle> bundles;
    std::string error;
    bool ok = false;
  };
  std::vector<Outcome> outcomes(episodes.size());
  const auto count = static_cast<std::ptrdiff_t>(episodes.size());
  const bool parallel = execution == Execution::parallel;
#pragma omp parallel for schedule(dynamic) if (parallel)
  for (std::ptrdiff_t k = 0; k < count; ++k) {
    auto& outcome = outcomes[static_cast<std::size_t>(k)];
    try {
      outcome.bundles = read_episode(episodes[static_cast<std::size_t>(k)]).table.bundles();
      outcome.ok = true;
    } catch (const std::exception& e) {
      outcome.error = e.what();
    }
  }

  DatasetReport report;
  report.episodes = episodes.size();
  std::vector<SyncBundle> pooled;
  for (std::size_t k = 0; k < episodes.size(); ++k) {
    const auto rel = fs::relative(episodes[k], root).generic_string();
    auto& outcome = outcomes[k];
    if (!outcome.ok) {
      report.failures.push_back({rel, outcome.error});
      continue;
    }
    report.per_episode.push_back({rel, summarize(outcome.bundles)});
    pooled.insert(pooled.end(), outcome.bundles.begin(), outcome.bundles.end());
  }
  const auto total = summarize(pooled);
  report.total_timesteps = total.timesteps;
  report.sync_success_rate = total.success_rate;
  report.avg_sync_error_ms = total.avg_error_ms;
  report.tp99_ms = total.tp99_ms;
  return report;
}

}  // namespace teledex
