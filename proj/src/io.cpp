#include "fplan/io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace fplan::io {

namespace {
constexpr char kB64Table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
constexpr int kVocabVersion = 1;
}  // namespace

std::string base64_encode(const std::string& bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  size_t i = 0;
  while (i + 2 < bytes.size()) {
    const uint32_t v = (static_cast<uint8_t>(bytes[i]) << 16) |
                       (static_cast<uint8_t>(bytes[i + 1]) << 8) |
                       static_cast<uint8_t>(bytes[i + 2]);
    out += kB64Table[(v >> 18) & 63];
    out += kB64Table[(v >> 12) & 63];
    out += kB64Table[(v >> 6) & 63];
    out += kB64Table[v & 63];
    i += 3;
  }
  const size_t rem = bytes.size() - i;
  if (rem == 1) {
    const uint32_t v = static_cast<uint8_t>(bytes[i]) << 16;
    out += kB64Table[(v >> 18) & 63];
    out += kB64Table[(v >> 12) & 63];
    out += "==";
  } else if (rem == 2) {
    const uint32_t v = (static_cast<uint8_t>(bytes[i]) << 16) |
                       (static_cast<uint8_t>(bytes[i + 1]) << 8);
    out += kB64Table[(v >> 18) & 63];
    out += kB64Table[(v >> 12) & 63];
    out += kB64Table[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::string base64_decode(const std::string& text) {
  int lookup[256];
  std::memset(lookup, -1, sizeof(lookup));
  for (int i = 0; i < 64; ++i) lookup[static_cast<uint8_t>(kB64Table[i])] = i;

  std::string out;
  out.reserve(text.size() / 4 * 3);
  uint32_t acc = 0;
  int bits = 0;
  for (char c : text) {
    if (c == '=' || c == '\n' || c == '\r') continue;
    const int v = lookup[static_cast<uint8_t>(c)];
    if (v < 0) throw std::invalid_argument("base64_decode: invalid character");
    acc = (acc << 6) | static_cast<uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out += static_cast<char>((acc >> bits) & 0xff);
    }
  }
  return out;
}

uint64_t fnv1a64(const std::string& bytes) {
  uint64_t h = 0xcbf29ce484222325ull;
  for (char c : bytes) {
    h ^= static_cast<uint8_t>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path);
}

uint64_t file_hash(const std::string& path) { return fnv1a64(read_file(path)); }

std::string pack_f64(const std::vector<double>& values) {
  std::string out(values.size() * sizeof(double), '\0');
  std::memcpy(out.data(), values.data(), out.size());
  return out;
}

std::vector<double> unpack_f64(const std::string& bytes) {
  if (bytes.size() % sizeof(double) != 0)
    throw std::invalid_argument("unpack_f64: byte count not a multiple of 8");
  std::vector<double> out(bytes.size() / sizeof(double));
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

std::string vocabulary_to_json(const TrajectoryVocabulary& vocab) {
  const int num_paths = vocab.num_paths();
  const int num_vels = vocab.num_velocities();
  const int path_len = vocab.paths.cfg.path_size();
  const int t_steps = vocab.velocities.cfg.horizon_steps;

  std::vector<double> path_xy;
  path_xy.reserve(static_cast<size_t>(num_paths) * path_len * 2);
  std::string path_valid;
  path_valid.reserve(static_cast<size_t>(num_paths) * path_len);
  for (const auto& anchor : vocab.paths.anchors) {
    for (int k = 0; k < path_len; ++k) {
      path_xy.push_back(anchor.points(0, k));
      path_xy.push_back(anchor.points(1, k));
      path_valid += anchor.valid[k] ? '\1' : '\0';
    }
  }
  std::vector<double> vels;
  vels.reserve(static_cast<size_t>(num_vels) * t_steps);
  for (const auto& anchor : vocab.velocities.anchors)
    for (int t = 0; t < t_steps; ++t) vels.push_back(anchor.speeds[t]);

  nlohmann::json j;
  j["format"] = "fplan-vocab";
  j["version"] = kVocabVersion;
  j["n_paths"] = num_paths;
  j["n_velocities"] = num_vels;
  j["ds"] = vocab.paths.cfg.ds;
  j["s_max"] = vocab.paths.cfg.s_max;
  j["dt"] = vocab.velocities.cfg.dt;
  j["horizon"] = t_steps;
  j["seed"] = vocab.paths.seed;
  j["blocks"]["path_points"] = base64_encode(pack_f64(path_xy));
  j["blocks"]["path_valid"] = base64_encode(path_valid);
  j["blocks"]["velocities"] = base64_encode(pack_f64(vels));
  return j.dump(1) + "\n";
}

TrajectoryVocabulary vocabulary_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("format", "") != "fplan-vocab")
    throw std::runtime_error("vocabulary file: unrecognized format tag");
  if (j.value("version", -1) != kVocabVersion)
    throw std::runtime_error("vocabulary file: version mismatch");

  FactorizationConfig cfg;
  cfg.ds = j.at("ds").get<double>();
  cfg.s_max = j.at("s_max").get<double>();
  cfg.dt = j.at("dt").get<double>();
  cfg.horizon_steps = j.at("horizon").get<int>();
  cfg.validate();

  const int num_paths = j.at("n_paths").get<int>();
  const int num_vels = j.at("n_velocities").get<int>();
  const int path_len = cfg.path_size();
  const uint64_t seed = j.at("seed").get<uint64_t>();

  const auto path_xy = unpack_f64(base64_decode(j.at("blocks").at("path_points").get<std::string>()));
  const auto path_valid = base64_decode(j.at("blocks").at("path_valid").get<std::string>());
  const auto vels = unpack_f64(base64_decode(j.at("blocks").at("velocities").get<std::string>()));
  if (path_xy.size() != static_cast<size_t>(num_paths) * path_len * 2 ||
      path_valid.size() != static_cast<size_t>(num_paths) * path_len ||
      vels.size() != static_cast<size_t>(num_vels) * cfg.horizon_steps)
    throw std::runtime_error("vocabulary file: block size mismatch");

  TrajectoryVocabulary vocab;
  vocab.paths.cfg = cfg;
  vocab.paths.seed = seed;
  vocab.velocities.cfg = cfg;
  vocab.velocities.seed = seed;
  vocab.paths.anchors.resize(num_paths);
  for (int i = 0; i < num_paths; ++i) {
    auto& anchor = vocab.paths.anchors[i];
    anchor.ds = cfg.ds;
    anchor.points.resize(2, path_len);
    anchor.valid.resize(path_len);
    for (int k = 0; k < path_len; ++k) {
      anchor.points(0, k) = path_xy[(static_cast<size_t>(i) * path_len + k) * 2];
      anchor.points(1, k) = path_xy[(static_cast<size_t>(i) * path_len + k) * 2 + 1];
      anchor.valid[k] = path_valid[static_cast<size_t>(i) * path_len + k] != '\0';
    }
  }
  vocab.velocities.anchors.resize(num_vels);
  for (int jv = 0; jv < num_vels; ++jv) {
    auto& anchor = vocab.velocities.anchors[jv];
    anchor.dt = cfg.dt;
    anchor.speeds.resize(cfg.horizon_steps);
    for (int t = 0; t < cfg.horizon_steps; ++t)
      anchor.speeds[t] = vels[static_cast<size_t>(jv) * cfg.horizon_steps + t];
  }
  return vocab;
}

void save_vocabulary(const TrajectoryVocabulary& vocab, const std::string& path) {
  write_file(path, vocabulary_to_json(vocab));
}

TrajectoryVocabulary load_vocabulary(const std::string& path) {
  return vocabulary_from_json(read_file(path));
}

namespace {

nlohmann::json points_json(const Mat2X& m) {
  nlohmann::json arr = nlohmann::json::array();
  for (int i = 0; i < m.cols(); ++i) arr.push_back({m(0, i), m(1, i)});
  return arr;
}

Mat2X points_from_json(const nlohmann::json& arr) {
  Mat2X m(2, static_cast<Eigen::Index>(arr.size()));
  for (size_t i = 0; i < arr.size(); ++i) {
    m(0, static_cast<Eigen::Index>(i)) = arr[i][0].get<double>();
    m(1, static_cast<Eigen::Index>(i)) = arr[i][1].get<double>();
  }
  return m;
}

nlohmann::json agent_json(const Agent& agent) {
  nlohmann::json j;
  j["id"] = agent.id;
  j["x"] = agent.position.x();
  j["y"] = agent.position.y();
  j["heading"] = agent.heading;
  j["speed"] = agent.speed;
  j["length"] = agent.length;
  j["width"] = agent.width;
  j["behavior"] = agent.behavior == AgentBehavior::kConstantVelocity ? "constant" : "scripted";
  if (agent.behavior == AgentBehavior::kScriptedSpeeds) {
    nlohmann::json phases = nlohmann::json::array();
    for (const auto& phase : agent.schedule) phases.push_back({phase.until_t, phase.speed});
    j["schedule"] = phases;
  }
  return j;
}

Agent agent_from_json(const nlohmann::json& j) {
  Agent agent;
  agent.id = j.at("id").get<int>();
  agent.position = Vec2(j.at("x").get<double>(), j.at("y").get<double>());
  agent.heading = j.at("heading").get<double>();
  agent.speed = j.at("speed").get<double>();
  agent.length = j.at("length").get<double>();
  agent.width = j.at("width").get<double>();
  agent.behavior = j.at("behavior").get<std::string>() == "constant"
                       ? AgentBehavior::kConstantVelocity
                       : AgentBehavior::kScriptedSpeeds;
  if (j.contains("schedule"))
    for (const auto& phase : j.at("schedule"))
      agent.schedule.push_back({phase[0].get<double>(), phase[1].get<double>()});
  return agent;
}

constexpr int kScriptVersion = 1;

}  // namespace

std::string script_to_json(const ScenarioScript& script) {
  nlohmann::json j;
  j["version"] = kScriptVersion;
  j["kind"] = to_string(script.kind);
  j["seed"] = script.seed;
  j["duration"] = script.duration;
  j["route_length"] = script.route_length;
  j["ego_start_s"] = script.ego_start_s;
  j["ego"] = {{"x", script.initial.ego.position.x()},
              {"y", script.initial.ego.position.y()},
              {"heading", script.initial.ego.heading},
              {"speed", script.initial.ego.speed},
              {"length", script.initial.ego.length},
              {"width", script.initial.ego.width}};
  nlohmann::json agents = nlohmann::json::array();
  for (const auto& agent : script.initial.agents) agents.push_back(agent_json(agent));
  j["agents"] = agents;
  j["corridor"] = {{"half_width", script.initial.corridor.half_width},
                   {"centerline", points_json(script.initial.corridor.centerline)}};
  return j.dump();
}

ScenarioScript script_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("version", -1) != kScriptVersion)
    throw std::runtime_error("scenario record: version mismatch");
  ScenarioScript script;
  script.kind = scenario_kind_from_string(j.at("kind").get<std::string>());
  script.seed = j.at("seed").get<uint64_t>();
  script.duration = j.at("duration").get<double>();
  script.route_length = j.at("route_length").get<double>();
  script.ego_start_s = j.at("ego_start_s").get<double>();
  const auto& ego = j.at("ego");
  script.initial.ego.position = Vec2(ego.at("x").get<double>(), ego.at("y").get<double>());
  script.initial.ego.heading = ego.at("heading").get<double>();
  script.initial.ego.speed = ego.at("speed").get<double>();
  script.initial.ego.length = ego.at("length").get<double>();
  script.initial.ego.width = ego.at("width").get<double>();
  for (const auto& a : j.at("agents")) script.initial.agents.push_back(agent_from_json(a));
  script.initial.corridor = make_corridor(points_from_json(j.at("corridor").at("centerline")),
                                          j.at("corridor").at("half_width").get<double>());
  return script;
}

std::string trajectory_to_json(const Trajectory& traj) {
  nlohmann::json j;
  j["dt"] = traj.dt;
  j["waypoints"] = points_json(traj.waypoints);
  return j.dump();
}

Trajectory trajectory_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  Trajectory traj;
  traj.dt = j.at("dt").get<double>();
  traj.waypoints = points_from_json(j.at("waypoints"));
  return traj;
}

namespace {
constexpr int kDatasetVersion = 1;
constexpr int kCheckpointVersion = 1;
}  // namespace

std::string sample_to_json(const ScenarioSample& sample) {
  nlohmann::json j;
  j["version"] = kDatasetVersion;
  j["id"] = sample.id;
  j["t0"] = sample.t0;
  j["script"] = nlohmann::json::parse(script_to_json(sample.script));
  j["expert"] = nlohmann::json::parse(trajectory_to_json(sample.expert));
  return j.dump();
}

ScenarioSample sample_from_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  if (j.value("version", -1) != kDatasetVersion)
    throw std::runtime_error("dataset record: version mismatch");
  ScenarioSample sample;
  sample.id = j.at("id").get<std::string>();
  sample.t0 = j.at("t0").get<double>();
  sample.script = script_from_json(j.at("script").dump());
  sample.expert = trajectory_from_json(j.at("expert").dump());
  return sample;
}

void save_dataset(const std::vector<ScenarioSample>& samples, const std::string& path) {
  std::string out;
  for (const auto& sample : samples) {
    out += sample_to_json(sample);
    out += '\n';
  }
  write_file(path, out);
}

std::vector<ScenarioSample> load_dataset(const std::string& path) {
  const std::string text = read_file(path);
  std::vector<ScenarioSample> samples;
  size_t at = 0;
  while (at < text.size()) {
    size_t end = text.find('\n', at);
    if (end == std::string::npos) end = text.size();
    if (end > at) samples.push_back(sample_from_json(text.substr(at, end - at)));
    at = end + 1;
  }
  return samples;
}

void save_checkpoint(const ModelParams& params, int step, uint64_t vocab_hash,
                     const std::string& prefix) {
  nlohmann::json j;
  j["format"] = "fplan-checkpoint";
  j["version"] = kCheckpointVersion;
  j["dim"] = params.cfg.dim;
  j["heads"] = params.cfg.heads;
  j["dfa_sigma"] = params.cfg.dfa_sigma;
  j["map_token_spacing"] = params.cfg.map_token_spacing;
  j["map_window_back"] = params.cfg.map_window_back;
  j["map_window_ahead"] = params.cfg.map_window_ahead;
  j["path_cross_attention"] = params.cfg.path_cross_attention;
  j["path_points"] = params.path_points;
  j["horizon_steps"] = params.horizon_steps;
  j["step"] = step;
  j["vocab_hash"] = vocab_hash;
  const VecX flat = params.flatten();
  j["param_count"] = static_cast<long>(flat.size());
  write_file(prefix + ".json", j.dump(1) + "\n");
  write_file(prefix + ".bin",
             pack_f64(std::vector<double>(flat.data(), flat.data() + flat.size())));
}

Checkpoint load_checkpoint(const std::string& prefix) {
  const auto j = nlohmann::json::parse(read_file(prefix + ".json"));
  if (j.value("format", "") != "fplan-checkpoint")
    throw std::runtime_error("checkpoint: unrecognized format tag");
  if (j.value("version", -1) != kCheckpointVersion)
    throw std::runtime_error("checkpoint: version mismatch");
  ModelConfig cfg;
  cfg.dim = j.at("dim").get<int>();
  cfg.heads = j.at("heads").get<int>();
  cfg.dfa_sigma = j.at("dfa_sigma").get<double>();
  cfg.map_token_spacing = j.at("map_token_spacing").get<double>();
  cfg.map_window_back = j.at("map_window_back").get<double>();
  cfg.map_window_ahead = j.at("map_window_ahead").get<double>();
  cfg.path_cross_attention = j.at("path_cross_attention").get<bool>();

  Checkpoint ckpt;
  ckpt.params = ModelParams::init(cfg, j.at("path_points").get<int>(),
                                  j.at("horizon_steps").get<int>(), 0);
  ckpt.step = j.at("step").get<int>();
  ckpt.vocab_hash = j.at("vocab_hash").get<uint64_t>();

  const auto values = unpack_f64(read_file(prefix + ".bin"));
  if (static_cast<long>(values.size()) != j.at("param_count").get<long>() ||
      static_cast<long>(values.size()) != ckpt.params.num_params())
    throw std::runtime_error("checkpoint: parameter block size mismatch");
  ckpt.params.unflatten(Eigen::Map<const VecX>(values.data(), values.size()));
  return ckpt;
}

}  // namespace fplan::io
