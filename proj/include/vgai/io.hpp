#pragma once

#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "vgai/eval.hpp"
#include "vgai/training.hpp"

namespace vgai::io {

using json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

// ---------------------------------------------------------------------------
// Experiment configuration

/// Full experiment description. Defaults reproduce the reference protocol:
/// N=50 agents, T_s=0.01 s, 100 steps, disk R=1.5 m, K_NN=10, v_init=3 m/s,
/// saturation at +-30 m/s^2, Adam(0.001, 0.9, 0.999), DAGGer beta=0.33 with
/// 15 expert + 5 mixed trajectories.
struct ExperimentConfig {
  Environment env;       // sim + comm + expert
  ModelSpec model;       // controller + perception
  TrainConfig training;
  std::vector<std::uint64_t> eval_seeds{1000, 1001, 1002, 1003, 1004};
  std::size_t eval_threads = 1;
  std::uint64_t seed = 0;

  void validate() const {
    env.sim.validate();
    env.expert.validate();
    training.validate();
    model.view.validate();
    if (model.taps < 1) throw ConfigError("controller.K must be >= 1");
    if (model.grnn_hidden < 1) throw ConfigError("controller.grnn_hidden must be >= 1");
    for (int h : model.dagnn_hidden)
      if (h < 1) throw ConfigError("controller.dagnn_hidden entries must be >= 1");
    if (model.encoder_features < 1) throw ConfigError("perception.encoder_features must be >= 1");
    EncoderShape s = model.encoder;
    s.bins = model.view.bins;
    s.outputs = model.encoder_features;
    s.validate();
    if (const auto* d = std::get_if<DiskModel>(&env.comm)) {
      if (!(d->radius > 0.0)) throw ConfigError("comm.radius must be > 0");
    } else {
      const int k = std::get<KnnModel>(env.comm).neighbors;
      if (k < 1 || k >= env.sim.agents) throw ConfigError("comm.knn must satisfy 1 <= K_NN < sim.agents");
    }
    if (eval_seeds.empty()) throw ConfigError("eval.seeds must not be empty");
    if (eval_threads < 1) throw ConfigError("eval.threads must be >= 1");
  }
};

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& section) {
  if (!obj.is_object()) throw ConfigError("config section '" + section + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.count(key)) throw ConfigError("unknown config key '" + section + (section.empty() ? "" : ".") + key + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError("config field '" + section + "." + key + "': " + e.what());
  }
}

}  // namespace detail

inline json to_json(const ModelSpec& m) {
  json j;
  j["kind"] = to_string(m.controller);
  j["K"] = m.taps;
  j["dagnn_hidden"] = m.dagnn_hidden;
  j["dagnn_activation"] = to_string(m.dagnn_activation);
  j["grnn_hidden"] = m.grnn_hidden;
  json p;
  p["mode"] = to_string(m.perception);
  p["encoder_features"] = m.encoder_features;
  p["own_velocity"] = m.own_velocity;
  p["view"] = {{"bins", m.view.bins}, {"rho_vis", m.view.rho_vis}, {"max_range", m.view.max_range}};
  p["encoder"] = {{"channels1", m.encoder.channels1}, {"kernel1", m.encoder.kernel1},
                  {"channels2", m.encoder.channels2}, {"kernel2", m.encoder.kernel2}, {"pool", m.encoder.pool}};
  p["camera"] = {{"rho_vis", m.camera.rho_vis}, {"max_range", m.camera.max_range}, {"box_scale", m.camera.box_scale}};
  return json{{"controller", j}, {"perception", p}};
}

inline void from_json_sections(const json& controller, const json& perception, ModelSpec& m) {
  if (!controller.is_null()) {
    detail::reject_unknown(controller, {"kind", "K", "dagnn_hidden", "dagnn_activation", "grnn_hidden"}, "controller");
    std::string kind = to_string(m.controller);
    detail::read(controller, "kind", kind, "controller");
    m.controller = controller_from_string(kind);
    detail::read(controller, "K", m.taps, "controller");
    detail::read(controller, "dagnn_hidden", m.dagnn_hidden, "controller");
    std::string act = to_string(m.dagnn_activation);
    detail::read(controller, "dagnn_activation", act, "controller");
    m.dagnn_activation = activation_from_string(act);
    detail::read(controller, "grnn_hidden", m.grnn_hidden, "controller");
  }
  if (!perception.is_null()) {
    detail::reject_unknown(perception, {"mode", "encoder_features", "own_velocity", "view", "encoder", "camera"},
                           "perception");
    std::string mode = to_string(m.perception);
    detail::read(perception, "mode", mode, "perception");
    m.perception = perception_from_string(mode);
    detail::read(perception, "encoder_features", m.encoder_features, "perception");
    detail::read(perception, "own_velocity", m.own_velocity, "perception");
    if (perception.contains("view")) {
      const auto& v = perception["view"];
      detail::reject_unknown(v, {"bins", "rho_vis", "max_range"}, "perception.view");
      detail::read(v, "bins", m.view.bins, "perception.view");
      detail::read(v, "rho_vis", m.view.rho_vis, "perception.view");
      detail::read(v, "max_range", m.view.max_range, "perception.view");
    }
    if (perception.contains("encoder")) {
      const auto& e = perception["encoder"];
      detail::reject_unknown(e, {"channels1", "kernel1", "channels2", "kernel2", "pool"}, "perception.encoder");
      detail::read(e, "channels1", m.encoder.channels1, "perception.encoder");
      detail::read(e, "kernel1", m.encoder.kernel1, "perception.encoder");
      detail::read(e, "channels2", m.encoder.channels2, "perception.encoder");
      detail::read(e, "kernel2", m.encoder.kernel2, "perception.encoder");
      detail::read(e, "pool", m.encoder.pool, "perception.encoder");
    }
    if (perception.contains("camera")) {
      const auto& c = perception["camera"];
      detail::reject_unknown(c, {"rho_vis", "max_range", "box_scale"}, "perception.camera");
      detail::read(c, "rho_vis", m.camera.rho_vis, "perception.camera");
      detail::read(c, "max_range", m.camera.max_range, "perception.camera");
      detail::read(c, "box_scale", m.camera.box_scale, "perception.camera");
    }
  }
  m.encoder.bins = m.view.bins;
  m.encoder.outputs = m.encoder_features;
}

inline json to_json(const ExperimentConfig& c) {
  json j;
  const auto& s = c.env.sim;
  j["sim"] = {{"agents", s.agents},
              {"sample_time", s.sample_time},
              {"horizon", s.horizon},
              {"max_accel", s.max_accel},
              {"init_velocity", s.init_velocity},
              {"min_spacing", s.min_spacing},
              {"init_disk_radius", s.init_disk_radius},
              {"max_init_attempts", s.max_init_attempts}};
  if (const auto* d = std::get_if<DiskModel>(&c.env.comm)) {
    j["comm"] = {{"model", "disk"}, {"radius", d->radius}};
  } else {
    j["comm"] = {{"model", "knn"}, {"knn", std::get<KnnModel>(c.env.comm).neighbors}};
  }
  j["expert"] = {{"rho", c.env.expert.rho}};
  const json m = to_json(c.model);
  j["controller"] = m["controller"];
  j["perception"] = m["perception"];
  const auto& t = c.training;
  j["training"] = {{"learning_rate", t.learning_rate},
                   {"adam_beta1", t.beta1},
                   {"adam_beta2", t.beta2},
                   {"epsilon", t.epsilon},
                   {"epochs", t.epochs},
                   {"batch_size", t.batch_size},
                   {"dagger_beta", t.dagger_beta},
                   {"initial_trajectories", t.initial_trajectories},
                   {"dagger_trajectories", t.dagger_trajectories},
                   {"dagger_iterations", t.dagger_iterations},
                   {"blend_actions", t.blend_actions},
                   {"normalize_features", t.normalize_features}};
  j["eval"] = {{"seeds", c.eval_seeds}, {"threads", c.eval_threads}};
  j["seed"] = c.seed;
  return j;
}

inline ExperimentConfig config_from_json(const json& j) {
  ExperimentConfig c;
  detail::reject_unknown(j, {"sim", "comm", "expert", "controller", "perception", "training", "eval", "seed"}, "");
  if (j.contains("sim")) {
    const auto& s = j["sim"];
    detail::reject_unknown(s, {"agents", "sample_time", "horizon", "max_accel", "init_velocity", "min_spacing",
                               "init_disk_radius", "max_init_attempts"},
                           "sim");
    auto& sim = c.env.sim;
    detail::read(s, "agents", sim.agents, "sim");
    detail::read(s, "sample_time", sim.sample_time, "sim");
    detail::read(s, "horizon", sim.horizon, "sim");
    detail::read(s, "max_accel", sim.max_accel, "sim");
    detail::read(s, "init_velocity", sim.init_velocity, "sim");
    detail::read(s, "min_spacing", sim.min_spacing, "sim");
    detail::read(s, "init_disk_radius", sim.init_disk_radius, "sim");
    detail::read(s, "max_init_attempts", sim.max_init_attempts, "sim");
  }
  if (j.contains("comm")) {
    const auto& m = j["comm"];
    detail::reject_unknown(m, {"model", "radius", "knn"}, "comm");
    std::string model = "disk";
    double radius = 1.5;
    int knn = 10;
    detail::read(m, "model", model, "comm");
    detail::read(m, "radius", radius, "comm");
    detail::read(m, "knn", knn, "comm");
    if (model == "disk") {
      c.env.comm = DiskModel{radius};
    } else if (model == "knn") {
      c.env.comm = KnnModel{knn};
    } else {
      throw ConfigError("config field 'comm.model': expected disk|knn, got '" + model + "'");
    }
  }
  if (j.contains("expert")) {
    detail::reject_unknown(j["expert"], {"rho"}, "expert");
    detail::read(j["expert"], "rho", c.env.expert.rho, "expert");
  }
  c.env.expert.max_accel = c.env.sim.max_accel;
  from_json_sections(j.value("controller", json()), j.value("perception", json()), c.model);
  if (j.contains("training")) {
    const auto& t = j["training"];
    detail::reject_unknown(t, {"learning_rate", "adam_beta1", "adam_beta2", "epsilon", "epochs", "batch_size",
                               "dagger_beta", "initial_trajectories", "dagger_trajectories", "dagger_iterations",
                               "blend_actions", "normalize_features"},
                           "training");
    auto& tr = c.training;
    detail::read(t, "learning_rate", tr.learning_rate, "training");
    detail::read(t, "adam_beta1", tr.beta1, "training");
    detail::read(t, "adam_beta2", tr.beta2, "training");
    detail::read(t, "epsilon", tr.epsilon, "training");
    detail::read(t, "epochs", tr.epochs, "training");
    detail::read(t, "batch_size", tr.batch_size, "training");
    detail::read(t, "dagger_beta", tr.dagger_beta, "training");
    detail::read(t, "initial_trajectories", tr.initial_trajectories, "training");
    detail::read(t, "dagger_trajectories", tr.dagger_trajectories, "training");
    detail::read(t, "dagger_iterations", tr.dagger_iterations, "training");
    detail::read(t, "blend_actions", tr.blend_actions, "training");
    detail::read(t, "normalize_features", tr.normalize_features, "training");
  }
  if (j.contains("eval")) {
    const auto& e = j["eval"];
    detail::reject_unknown(e, {"seeds", "threads"}, "eval");
    detail::read(e, "seeds", c.eval_seeds, "eval");
    detail::read(e, "threads", c.eval_threads, "eval");
  }
  detail::read(j, "seed", c.seed, "");
  c.training.seed = c.seed;
  c.validate();
  return c;
}

/// FNV-1a 64-bit hash of a string, as 16 hex digits.
inline std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

/// Hash of the resolved configuration (keys sorted, defaults filled in).
inline std::string config_hash(const ExperimentConfig& c) { return fnv1a_hex(to_json(c).dump()); }

inline std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("config file not found: " + path.string());
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

/// VGAI_SEED and VGAI_OUT_DIR are the only environment overrides.
inline void apply_env_overrides(ExperimentConfig& c, std::filesystem::path* out_dir) {
  if (const char* s = std::getenv("VGAI_SEED")) {
    char* end = nullptr;
    const auto v = std::strtoull(s, &end, 10);
    if (end == s || *end != '\0') throw ConfigError("VGAI_SEED must be an unsigned integer");
    c.seed = v;
    c.training.seed = v;
  }
  if (out_dir) {
    if (const char* d = std::getenv("VGAI_OUT_DIR")) *out_dir = d;
  }
}

// ---------------------------------------------------------------------------
// Atomic file output

inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + tmp.string() + "'");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Trajectory files

struct TrajectoryHeader {
  int format_version = kFormatVersion;
  std::string config_hash;
  std::string controller;
  std::uint64_t seed = 0;
  int agents = 0;
  int steps = 0;
  double sample_time = 0.0;
  bool hash_mismatch = false;
  double raw_cost = 0.0;
  double normalized_cost = 0.0;
};

struct TrajectoryRow {
  std::int64_t t = 0;
  int agent = 0;
  double rx = 0, ry = 0, vx = 0, vy = 0, ux = 0, uy = 0, ux_star = 0, uy_star = 0;
  int degree = 0;

  bool operator==(const TrajectoryRow&) const = default;
};

struct TrajectoryFile {
  TrajectoryHeader header;
  std::vector<TrajectoryRow> rows;
};

inline constexpr const char* kTrajectoryColumns = "t agent rx ry vx vy ux uy ustar_x ustar_y degree";

inline TrajectoryFile to_file(const Trajectory& traj, const TrajectoryHeader& header) {
  TrajectoryFile f;
  f.header = header;
  f.header.steps = static_cast<int>(traj.size());
  f.header.agents = traj.size() ? static_cast<int>(traj.steps[0].state.size()) : header.agents;
  for (const auto& rec : traj.steps) {
    for (std::size_t i = 0; i < rec.state.size(); ++i) {
      const auto r = static_cast<Eigen::Index>(i);
      f.rows.push_back({rec.state.time_index, static_cast<int>(i), rec.state.positions(r, 0),
                        rec.state.positions(r, 1), rec.state.velocities(r, 0), rec.state.velocities(r, 1),
                        rec.executed(r, 0), rec.executed(r, 1), rec.expert(r, 0), rec.expert(r, 1),
                        static_cast<int>(rec.graph.neighbors[i].size())});
    }
  }
  return f;
}

namespace detail {

inline std::string header_lines(const TrajectoryHeader& h) {
  std::ostringstream os;
  os << "format_version=" << h.format_version << "\n"
     << "config_hash=" << h.config_hash << "\n"
     << "controller=" << h.controller << "\n"
     << "seed=" << h.seed << "\n"
     << "agents=" << h.agents << "\n"
     << "steps=" << h.steps << "\n"
     << "sample_time=" << format_double(h.sample_time) << "\n"
     << "hash_mismatch=" << (h.hash_mismatch ? 1 : 0) << "\n"
     << "raw_cost=" << format_double(h.raw_cost) << "\n"
     << "normalized_cost=" << format_double(h.normalized_cost) << "\n";
  return os.str();
}

inline void parse_header_line(TrajectoryHeader& h, const std::string& line) {
  const auto eq = line.find('=');
  if (eq == std::string::npos) return;
  const std::string key = line.substr(0, eq);
  const std::string val = line.substr(eq + 1);
  try {
    if (key == "format_version") h.format_version = std::stoi(val);
    else if (key == "config_hash") h.config_hash = val;
    else if (key == "controller") h.controller = val;
    else if (key == "seed") h.seed = std::stoull(val);
    else if (key == "agents") h.agents = std::stoi(val);
    else if (key == "steps") h.steps = std::stoi(val);
    else if (key == "sample_time") h.sample_time = std::stod(val);
    else if (key == "hash_mismatch") h.hash_mismatch = val == "1";
    else if (key == "raw_cost") h.raw_cost = std::stod(val);
    else if (key == "normalized_cost") h.normalized_cost = std::stod(val);
  } catch (const std::exception&) {
    throw FormatError("trajectory header: bad value for '" + key + "'");
  }
}

inline void check_version(int version, const std::string& what) {
  if (version != kFormatVersion) {
    throw FormatError(what + ": unsupported format version " + std::to_string(version) + " (expected " +
                      std::to_string(kFormatVersion) + ")");
  }
}

inline constexpr char kBinaryMagic[8] = {'V', 'G', 'A', 'I', 'T', 'R', 'J', 'B'};

}  // namespace detail

/// Columnar text: '#'-prefixed key=value header, one column line, one row per (t, agent).
inline std::string serialize_text(const TrajectoryFile& f) {
  std::ostringstream os;
  os << "# vgai-trajectory\n";
  std::istringstream hl(detail::header_lines(f.header));
  for (std::string line; std::getline(hl, line);) os << "# " << line << "\n";
  os << kTrajectoryColumns << "\n";
  for (const auto& r : f.rows) {
    os << r.t << ' ' << r.agent << ' ' << format_double(r.rx) << ' ' << format_double(r.ry) << ' '
       << format_double(r.vx) << ' ' << format_double(r.vy) << ' ' << format_double(r.ux) << ' '
       << format_double(r.uy) << ' ' << format_double(r.ux_star) << ' ' << format_double(r.uy_star) << ' '
       << r.degree << "\n";
  }
  return os.str();
}

/// Compact little-endian variant: magic, header text, row count, packed rows.
inline std::string serialize_binary(const TrajectoryFile& f) {
  std::string out(detail::kBinaryMagic, 8);
  const std::string header = detail::header_lines(f.header);
  auto put = [&](const auto& v) { out.append(reinterpret_cast<const char*>(&v), sizeof v); };
  put(static_cast<std::uint32_t>(header.size()));
  out += header;
  put(static_cast<std::uint64_t>(f.rows.size()));
  for (const auto& r : f.rows) {
    put(r.t);
    put(static_cast<std::int32_t>(r.agent));
    put(static_cast<std::int32_t>(r.degree));
    for (double v : {r.rx, r.ry, r.vx, r.vy, r.ux, r.uy, r.ux_star, r.uy_star}) put(v);
  }
  return out;
}

inline TrajectoryFile parse_trajectory(const std::string& bytes) {
  TrajectoryFile f;
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), detail::kBinaryMagic, 8) == 0) {
    std::size_t pos = 8;
    auto get = [&](auto& v) {
      if (pos + sizeof v > bytes.size()) throw FormatError("binary trajectory truncated");
      std::memcpy(&v, bytes.data() + pos, sizeof v);
      pos += sizeof v;
    };
    std::uint32_t hlen = 0;
    get(hlen);
    if (pos + hlen > bytes.size()) throw FormatError("binary trajectory truncated");
    std::istringstream hs(bytes.substr(pos, hlen));
    pos += hlen;
    f.header.format_version = -1;
    for (std::string line; std::getline(hs, line);) detail::parse_header_line(f.header, line);
    detail::check_version(f.header.format_version, "trajectory");
    std::uint64_t count = 0;
    get(count);
    f.rows.resize(count);
    for (auto& r : f.rows) {
      std::int32_t agent = 0, degree = 0;
      get(r.t);
      get(agent);
      get(degree);
      r.agent = agent;
      r.degree = degree;
      for (double* v : {&r.rx, &r.ry, &r.vx, &r.vy, &r.ux, &r.uy, &r.ux_star, &r.uy_star}) get(*v);
    }
    return f;
  }

  std::istringstream in(bytes);
  std::string line;
  if (!std::getline(in, line) || line != "# vgai-trajectory") throw FormatError("not a vgai trajectory file");
  f.header.format_version = -1;
  bool columns = false;
  while (std::getline(in, line)) {
    if (line.rfind("# ", 0) == 0) {
      detail::parse_header_line(f.header, line.substr(2));
      continue;
    }
    if (!columns) {
      detail::check_version(f.header.format_version, "trajectory");
      if (line != kTrajectoryColumns) throw FormatError("trajectory: unexpected column line '" + line + "'");
      columns = true;
      continue;
    }
    if (line.empty()) continue;
    std::istringstream ls(line);
    TrajectoryRow r;
    if (!(ls >> r.t >> r.agent >> r.rx >> r.ry >> r.vx >> r.vy >> r.ux >> r.uy >> r.ux_star >> r.uy_star >> r.degree)) {
      throw FormatError("trajectory: malformed row '" + line + "'");
    }
    f.rows.push_back(r);
  }
  if (!columns) {
    detail::check_version(f.header.format_version, "trajectory");
    throw FormatError("trajectory: missing column line");
  }
  return f;
}

inline void write_trajectory(const std::filesystem::path& path, const TrajectoryFile& f, bool binary = false) {
  write_atomic(path, binary ? serialize_binary(f) : serialize_text(f));
}

inline TrajectoryFile read_trajectory(const std::filesystem::path& path) { return parse_trajectory(read_text(path)); }

// ---------------------------------------------------------------------------
// Checkpoints

inline json tensor_json(const Matrix& m) {
  std::vector<double> data(static_cast<std::size_t>(m.size()));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

inline Matrix tensor_from_json(const json& j, const std::string& name) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw FormatError("checkpoint tensor '" + name + "' size mismatch");
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
  return m;
}

inline std::string serialize_checkpoint(const ModelParams& p, const std::string& config_hash) {
  json j;
  j["format"] = "vgai-checkpoint";
  j["format_version"] = kFormatVersion;
  j["config_hash"] = config_hash;
  j["model"] = to_json(p.spec);
  json ts = json::object();
  ModelParams::visit(p, [&](const std::string& name, const Matrix& m) { ts[name] = tensor_json(m); });
  ts["feature_scale"] = tensor_json(p.feature_scale);
  j["tensors"] = ts;
  j["parameter_count"] = p.parameter_count();
  return j.dump(1) + "\n";
}

struct Checkpoint {
  ModelParams params;
  std::string config_hash;
};

inline Checkpoint parse_checkpoint(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (j.value("format", "") != "vgai-checkpoint") throw FormatError("not a vgai checkpoint");
  detail::check_version(j.value("format_version", -1), "checkpoint");
  ModelSpec spec;
  from_json_sections(j.at("model").at("controller"), j.at("model").at("perception"), spec);
  Checkpoint c;
  c.config_hash = j.value("config_hash", "");
  c.params = make_model(spec, 0);
  const auto& ts = j.at("tensors");
  ModelParams::visit(c.params, [&](const std::string& name, Matrix& m) {
    if (!ts.contains(name)) throw FormatError("checkpoint missing tensor '" + name + "'");
    Matrix loaded = tensor_from_json(ts[name], name);
    if (loaded.rows() != m.rows() || loaded.cols() != m.cols()) {
      throw FormatError("checkpoint tensor '" + name + "' has shape " + std::to_string(loaded.rows()) + "x" +
                        std::to_string(loaded.cols()) + ", expected " + std::to_string(m.rows()) + "x" +
                        std::to_string(m.cols()));
    }
    m = std::move(loaded);
  });
  if (ts.contains("feature_scale")) c.params.feature_scale = tensor_from_json(ts["feature_scale"], "feature_scale");
  return c;
}

inline void write_checkpoint(const std::filesystem::path& path, const ModelParams& p, const std::string& hash) {
  write_atomic(path, serialize_checkpoint(p, hash));
}

inline Checkpoint read_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_text(path)); }

// ---------------------------------------------------------------------------
// Reports, logs, tables, datasets

inline json to_json(const CostReport& r) {
  return json{{"format", "vgai-report"},
              {"format_version", kFormatVersion},
              {"controller", r.controller},
              {"raw_cost", r.raw_cost},
              {"expert_raw_cost", r.expert_raw_cost},
              {"normalized_cost", r.normalized_cost},
              {"success", r.success},
              {"diverged", r.diverged},
              {"seed", r.seed},
              {"config_hash", r.config_hash},
              {"variance_series", r.variance_series}};
}

inline CostReport report_from_json(const json& j) {
  if (j.value("format", "") != "vgai-report") throw FormatError("not a vgai report");
  detail::check_version(j.value("format_version", -1), "report");
  CostReport r;
  r.controller = j.at("controller").get<std::string>();
  r.raw_cost = j.at("raw_cost").get<double>();
  r.expert_raw_cost = j.at("expert_raw_cost").get<double>();
  r.normalized_cost = j.at("normalized_cost").get<double>();
  r.success = j.at("success").get<bool>();
  r.diverged = j.at("diverged").get<bool>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.config_hash = j.at("config_hash").get<std::string>();
  r.variance_series = j.at("variance_series").get<std::vector<double>>();
  return r;
}

inline std::string log_line(const EpochLog& e) {
  return json{{"phase", e.phase}, {"epoch", e.epoch}, {"loss", e.loss}, {"grad_norm", e.grad_norm},
              {"wall_time", e.wall_seconds}}
             .dump();
}

inline std::string sweep_tsv(const std::vector<SweepRow>& rows, const std::string& hash) {
  std::ostringstream os;
  os << "# vgai-sweep format_version=" << kFormatVersion << " config_hash=" << hash << "\n";
  os << "axis\tvalue\tcontroller\tmedian\tq1\tq3\tn\tsuccess\n";
  for (const auto& r : rows) {
    os << r.axis << '\t' << format_double(r.value) << '\t' << r.controller << '\t' << format_double(r.normalized.median)
       << '\t' << format_double(r.normalized.q1) << '\t' << format_double(r.normalized.q3) << '\t' << r.normalized.count
       << '\t' << (r.success ? 1 : 0) << "\n";
  }
  return os.str();
}

inline std::string sweep_jsonl(const std::vector<SweepRow>& rows, const std::string& hash) {
  std::ostringstream os;
  for (const auto& r : rows) {
    json seeds = json::array();
    for (const auto& rep : r.reports) seeds.push_back({{"seed", rep.seed}, {"normalized_cost", rep.normalized_cost}});
    os << json{{"format_version", kFormatVersion}, {"config_hash", hash}, {"axis", r.axis}, {"value", r.value},
               {"controller", r.controller}, {"median", r.normalized.median}, {"q1", r.normalized.q1},
               {"q3", r.normalized.q3}, {"n", r.normalized.count}, {"success", r.success}, {"seeds", seeds}}
              .dump()
       << "\n";
  }
  return os.str();
}

struct SweepTableRow {
  std::string axis;
  double value = 0.0;
  std::string controller;
  double median = 0.0, q1 = 0.0, q3 = 0.0;
  std::size_t n = 0;
  bool success = false;
};

inline std::vector<SweepTableRow> parse_sweep_tsv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# vgai-sweep", 0) != 0) throw FormatError("not a vgai sweep table");
  const auto vpos = line.find("format_version=");
  if (vpos == std::string::npos) throw FormatError("sweep table: missing format_version");
  detail::check_version(std::atoi(line.c_str() + vpos + 15), "sweep table");
  std::getline(in, line);  // column names
  std::vector<SweepTableRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    SweepTableRow r;
    int ok = 0;
    if (!(ls >> r.axis >> r.value >> r.controller >> r.median >> r.q1 >> r.q3 >> r.n >> ok)) {
      throw FormatError("sweep table: malformed row '" + line + "'");
    }
    r.success = ok != 0;
    rows.push_back(r);
  }
  return rows;
}

/// Dataset manifest: one summary line per trajectory plus the full
/// trajectory rows, separated by '## trajectory' markers.
inline std::string serialize_dataset(const Dataset& d, const std::string& hash) {
  std::ostringstream os;
  os << "# vgai-dataset format_version=" << kFormatVersion << " config_hash=" << hash
     << " trajectories=" << d.size() << "\n";
  for (const auto& t : d.trajectories) {
    std::size_t expert_steps = 0;
    for (const auto& rec : t.steps) expert_steps += rec.expert_executed ? 1 : 0;
    os << "## trajectory phase=" << t.phase << " seed=" << t.seed << " steps=" << t.size()
       << " expert_steps=" << expert_steps << " agents=" << (t.size() ? t.steps[0].state.size() : 0) << "\n";
    TrajectoryHeader h;
    h.config_hash = hash;
    h.controller = t.controller;
    h.seed = t.seed;
    const auto f = to_file(t, h);
    for (const auto& r : f.rows) {
      os << r.t << ' ' << r.agent << ' ' << format_double(r.rx) << ' ' << format_double(r.ry) << ' '
         << format_double(r.vx) << ' ' << format_double(r.vy) << ' ' << format_double(r.ux) << ' '
         << format_double(r.uy) << ' ' << format_double(r.ux_star) << ' ' << format_double(r.uy_star) << ' '
         << r.degree << "\n";
    }
  }
  return os.str();
}

struct DatasetSummary {
  std::string config_hash;
  std::size_t trajectories = 0;
  std::map<int, std::size_t> per_phase;
  std::size_t steps = 0;
  std::size_t expert_steps = 0;
};

inline DatasetSummary summarize_dataset(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("# vgai-dataset", 0) != 0) throw FormatError("not a vgai dataset");
  const auto vpos = line.find("format_version=");
  if (vpos == std::string::npos) throw FormatError("dataset: missing format_version");
  detail::check_version(std::atoi(line.c_str() + vpos + 15), "dataset");
  DatasetSummary s;
  const auto hpos = line.find("config_hash=");
  if (hpos != std::string::npos) s.config_hash = line.substr(hpos + 12, line.find(' ', hpos) - hpos - 12);
  while (std::getline(in, line)) {
    if (line.rfind("## trajectory", 0) != 0) continue;
    ++s.trajectories;
    int phase = 0;
    std::size_t steps = 0, expert = 0;
    std::istringstream ls(line.substr(14));
    for (std::string kv; ls >> kv;) {
      const auto eq = kv.find('=');
      const auto key = kv.substr(0, eq);
      const auto val = kv.substr(eq + 1);
      if (key == "phase") phase = std::stoi(val);
      if (key == "steps") steps = std::stoull(val);
      if (key == "expert_steps") expert = std::stoull(val);
    }
    ++s.per_phase[phase];
    s.steps += steps;
    s.expert_steps += expert;
  }
  return s;
}

}  // namespace vgai::io
