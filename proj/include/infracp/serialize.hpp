#pragma once

// JSON encodings (nlohmann) for scenes, noise/fusion settings and reports.
//
// Scene documents carry "schema_version"; readers reject versions they do not
// know. Doubles are written with round-trip precision, so encode/decode is
// lossless.

#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>

#include "infracp/channel.hpp"
#include "infracp/detection_range.hpp"
#include "infracp/evaluation.hpp"
#include "infracp/fusion.hpp"
#include "infracp/geometry.hpp"
#include "infracp/scene.hpp"
#include "json.hpp"

namespace infracp {

using Json = nlohmann::ordered_json;

inline constexpr int kSceneSchemaVersion = 1;

namespace detail {

template <class T>
Json optional_to_json(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

template <class T>
std::optional<T> optional_from_json(const Json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<T>();
}

}  // namespace detail

// --- geometry ---------------------------------------------------------------

inline void to_json(Json& j, const Vec3& v) { j = Json::array({v.x, v.y, v.z}); }
inline void from_json(const Json& j, Vec3& v) { v = {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()}; }

inline void to_json(Json& j, const Pose& p) { j = Json{{"x", p.x}, {"y", p.y}, {"z", p.z}, {"yaw", p.yaw}}; }
inline void from_json(const Json& j, Pose& p) {
  p = Pose(j.at("x").get<double>(), j.at("y").get<double>(), j.at("z").get<double>(), j.at("yaw").get<double>());
}

inline void to_json(Json& j, const OrientedBox3D& b) {
  j = Json{{"center", b.center}, {"width", b.width},        {"length", b.length},
           {"height", b.height}, {"yaw", b.yaw},            {"label", to_string(b.label)},
           {"confidence", b.confidence}};
}
inline void from_json(const Json& j, OrientedBox3D& b) {
  const std::string label = j.at("label").get<std::string>();
  if (label != "Vehicle" && label != "NotVehicle") throw std::invalid_argument("unknown box label: " + label);
  b = OrientedBox3D::make(j.at("center").get<Vec3>(), j.at("width").get<double>(), j.at("length").get<double>(),
                          j.at("height").get<double>(), j.at("yaw").get<double>(),
                          label == "Vehicle" ? Label::Vehicle : Label::NotVehicle, j.at("confidence").get<double>());
}

inline void to_json(Json& j, const Interval& i) { j = Json::array({i.lo, i.hi}); }
inline void from_json(const Json& j, Interval& i) { i = {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline void to_json(Json& j, const DetectionRange& r) {
  j = Json{{"x", r.x}, {"y", r.y}, {"z", r.z}, {"shape", to_string(r.shape)}};
}
inline void from_json(const Json& j, DetectionRange& r) {
  r = DetectionRange::make(j.at("x").get<Interval>(), j.at("y").get<Interval>(), j.at("z").get<Interval>(),
                           range_shape_from_string(j.at("shape").get<std::string>()));
}

// --- scene ------------------------------------------------------------------

inline void to_json(Json& j, const ScenarioSpec& s) {
  j = Json{{"archetype", to_string(s.archetype)},
           {"n_vehicle_agents", s.n_vehicle_agents},
           {"n_infra_agents", s.n_infra_agents},
           {"n_actors", s.n_actors},
           {"occluder_density", s.occluder_density},
           {"n_frames", s.n_frames},
           {"seed", s.seed},
           {"regime", to_string(s.regime)}};
}

/// Missing fields keep their defaults, so config files may be terse.
inline void from_json(const Json& j, ScenarioSpec& s) {
  s = ScenarioSpec{};
  s.archetype = archetype_from_string(j.at("archetype").get<std::string>());
  if (j.contains("n_vehicle_agents")) s.n_vehicle_agents = j["n_vehicle_agents"].get<int>();
  if (j.contains("n_infra_agents")) s.n_infra_agents = j["n_infra_agents"].get<int>();
  if (j.contains("n_actors")) s.n_actors = j["n_actors"].get<int>();
  if (j.contains("occluder_density")) s.occluder_density = j["occluder_density"].get<double>();
  if (j.contains("n_frames")) s.n_frames = j["n_frames"].get<int>();
  if (j.contains("seed")) s.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("regime")) s.regime = regime_from_string(j["regime"].get<std::string>());
}

inline void to_json(Json& j, const AgentSpec& a) {
  j = Json{{"id", a.id}, {"kind", to_string(a.kind)}, {"mount_pose", a.mount_pose}, {"is_ego", a.is_ego}};
}
inline void from_json(const Json& j, AgentSpec& a) {
  a.id = j.at("id").get<int>();
  const std::string kind = j.at("kind").get<std::string>();
  if (kind != "V" && kind != "I") throw std::invalid_argument("unknown agent kind: " + kind);
  a.kind = kind == "V" ? AgentKind::Vehicle : AgentKind::Infrastructure;
  a.mount_pose = j.at("mount_pose").get<Pose>();
  a.is_ego = j.at("is_ego").get<bool>();
}

inline void to_json(Json& j, const Frame& f) { j = Json{{"actors", f.actors}, {"agent_poses", f.agent_poses}}; }
inline void from_json(const Json& j, Frame& f) {
  f.actors = j.at("actors").get<std::vector<OrientedBox3D>>();
  f.agent_poses = j.at("agent_poses").get<std::vector<Pose>>();
}

inline Json scene_to_json(const Scene& s) {
  return Json{{"schema_version", kSceneSchemaVersion},
              {"spec", s.spec},
              {"frame_dt", s.frame_dt},
              {"agents", s.agents},
              {"occluders", s.occluders},
              {"frames", s.frames}};
}

inline Scene scene_from_json(const Json& j) {
  const int version = j.at("schema_version").get<int>();
  if (version != kSceneSchemaVersion)
    throw std::invalid_argument("unsupported scene schema_version " + std::to_string(version));
  Scene s;
  s.spec = j.at("spec").get<ScenarioSpec>();
  s.frame_dt = j.at("frame_dt").get<double>();
  s.agents = j.at("agents").get<std::vector<AgentSpec>>();
  s.occluders = j.at("occluders").get<std::vector<OrientedBox3D>>();
  s.frames = j.at("frames").get<std::vector<Frame>>();
  for (std::size_t i = 0; i < s.agents.size(); ++i)
    if (s.agents[i].id != static_cast<int>(i)) throw std::invalid_argument("scene agents must be listed in id order");
  for (const Frame& f : s.frames)
    if (f.agent_poses.size() != s.agents.size()) throw std::invalid_argument("frame agent_poses do not match agents");
  return s;
}

// --- channel / fusion settings ----------------------------------------------

inline void to_json(Json& j, const NoiseSetting& n) {
  j = Json{{"kind", to_string(n.kind)},           {"level", n.level},
           {"sigma_xy", n.sigma_xy},              {"sigma_yaw_deg", n.sigma_yaw_deg},
           {"latency_frames", n.latency_frames},  {"compression_factor", n.compression_factor}};
}

/// Accepts a preset label ("Perfect", "Simple", "Harsh(3)") or an object.
/// In object form the preset named by "kind"/"level" is the starting point and
/// any other field overrides it.
inline void from_json(const Json& j, NoiseSetting& n) {
  auto preset = [](const std::string& label) {
    if (label == "Perfect") return NoiseSetting::perfect();
    if (label == "Simple") return NoiseSetting::simple();
    if (label.rfind("Harsh(", 0) == 0 && label.size() > 7 && label.back() == ')') {
      std::size_t used = 0;
      const std::string digits = label.substr(6, label.size() - 7);
      const int level = std::stoi(digits, &used);
      if (used != digits.size()) throw std::invalid_argument("bad noise label: " + label);
      return NoiseSetting::harsh(level);
    }
    throw std::invalid_argument("unknown noise setting: " + label);
  };
  if (j.is_string()) {
    n = preset(j.get<std::string>());
    return;
  }
  const NoiseKind kind = noise_kind_from_string(j.at("kind").get<std::string>());
  n = kind == NoiseKind::Harsh ? NoiseSetting::harsh(j.value("level", 0))
                               : (kind == NoiseKind::Simple ? NoiseSetting::simple() : NoiseSetting::perfect());
  if (j.contains("sigma_xy")) n.sigma_xy = j["sigma_xy"].get<double>();
  if (j.contains("sigma_yaw_deg")) n.sigma_yaw_deg = j["sigma_yaw_deg"].get<double>();
  if (j.contains("latency_frames")) n.latency_frames = j["latency_frames"].get<int>();
  if (j.contains("compression_factor")) n.compression_factor = j["compression_factor"].get<int>();
}

inline void to_json(Json& j, const FusionMethod& m) {
  j = Json{{"method", to_string(m.kind)}};
  if (m.kind == FusionKind::IntermediateWeighted) j["weights"] = m.weights;
}
inline void from_json(const Json& j, FusionMethod& m) {
  if (j.is_string()) {
    m = {fusion_kind_from_string(j.get<std::string>()), {}};
    return;
  }
  m.kind = fusion_kind_from_string(j.at("method").get<std::string>());
  m.weights = j.value("weights", std::vector<double>{});
}

// --- reports ----------------------------------------------------------------

inline void to_json(Json& j, const RunDescriptor& d) {
  j = Json{{"cp_mode", d.cp_mode},
           {"range_shape", d.range_shape},
           {"noise", d.noise},
           {"sigma_xy", d.sigma_xy},
           {"sigma_yaw_deg", d.sigma_yaw_deg},
           {"latency_frames", d.latency_frames},
           {"compression_factor", d.compression_factor},
           {"fusion", d.fusion},
           {"seeds", d.seeds}};
}
inline void from_json(const Json& j, RunDescriptor& d) {
  d.cp_mode = j.at("cp_mode").get<std::string>();
  d.range_shape = j.at("range_shape").get<std::string>();
  d.noise = j.at("noise").get<std::string>();
  d.sigma_xy = j.at("sigma_xy").get<double>();
  d.sigma_yaw_deg = j.at("sigma_yaw_deg").get<double>();
  d.latency_frames = j.at("latency_frames").get<int>();
  d.compression_factor = j.at("compression_factor").get<int>();
  d.fusion = j.at("fusion").get<std::string>();
  d.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
}

inline void to_json(Json& j, const SceneScore& s) {
  j = Json{{"scenario", s.scenario},
           {"seed", s.seed},
           {"ap50", detail::optional_to_json(s.ap50)},
           {"ap70", detail::optional_to_json(s.ap70)},
           {"n_ground_truth", s.n_ground_truth},
           {"n_predictions", s.n_predictions}};
}
inline void from_json(const Json& j, SceneScore& s) {
  s.scenario = j.at("scenario").get<std::string>();
  s.seed = j.at("seed").get<std::uint64_t>();
  s.ap50 = detail::optional_from_json<double>(j.at("ap50"));
  s.ap70 = detail::optional_from_json<double>(j.at("ap70"));
  s.n_ground_truth = j.at("n_ground_truth").get<int>();
  s.n_predictions = j.at("n_predictions").get<int>();
}

inline void to_json(Json& j, const EvalReport& r) {
  j = Json{{"config", r.config},
           {"ap50", detail::optional_to_json(r.ap50)},
           {"ap70", detail::optional_to_json(r.ap70)},
           {"mean_scene_ap50", detail::optional_to_json(r.mean_scene_ap50)},
           {"mean_scene_ap70", detail::optional_to_json(r.mean_scene_ap70)},
           {"scenes", r.scenes}};
}
inline void from_json(const Json& j, EvalReport& r) {
  r.config = j.at("config").get<RunDescriptor>();
  r.ap50 = detail::optional_from_json<double>(j.at("ap50"));
  r.ap70 = detail::optional_from_json<double>(j.at("ap70"));
  r.mean_scene_ap50 = detail::optional_from_json<double>(j.at("mean_scene_ap50"));
  r.mean_scene_ap70 = detail::optional_from_json<double>(j.at("mean_scene_ap70"));
  r.scenes = j.at("scenes").get<std::vector<SceneScore>>();
}

// --- CSV --------------------------------------------------------------------

inline std::string csv_number(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << *v;
  return os.str();
}

inline constexpr const char* kSceneCsvHeader =
    "cp_mode,range_shape,noise,fusion,scenario,seed,ap50,ap70,n_ground_truth,n_predictions";

/// One row per (config, scene), without trailing newline.
inline std::string scene_csv_row(const RunDescriptor& d, const SceneScore& s) {
  std::ostringstream os;
  os << d.cp_mode << ',' << d.range_shape << ',' << d.noise << ',' << d.fusion << ',' << s.scenario << ',' << s.seed
     << ',' << csv_number(s.ap50) << ',' << csv_number(s.ap70) << ',' << s.n_ground_truth << ',' << s.n_predictions;
  return os.str();
}

}  // namespace infracp
