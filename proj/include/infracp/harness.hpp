#pragma once

// Experiment runner.
//
// A job is one generated scene (scenario template + seed). Every config that
// lists the scene is evaluated inside the same job, so LiDAR sweeps are cast
// once and shared between modes, ranges and noise levels. Jobs run on a small
// thread pool and write into fixed slots; aggregation walks the slots in
// order, so output never depends on scheduling.

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <exception>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "infracp/channel.hpp"
#include "infracp/detection_range.hpp"
#include "infracp/evaluation.hpp"
#include "infracp/fusion.hpp"
#include "infracp/scene.hpp"
#include "infracp/sensing.hpp"
#include "infracp/serialize.hpp"

namespace infracp {

enum class CpMode { NoFusion, V2V, V2X, I2X };

inline std::string to_string(CpMode m) {
  switch (m) {
    case CpMode::NoFusion: return "NoFusion";
    case CpMode::V2V: return "V2V";
    case CpMode::V2X: return "V2X";
    case CpMode::I2X: return "I2X";
  }
  return "?";
}

inline CpMode cp_mode_from_string(const std::string& s) {
  for (CpMode m : {CpMode::NoFusion, CpMode::V2V, CpMode::V2X, CpMode::I2X})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown cp_mode: " + s);
}

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct ExperimentConfig {
  CpMode cp_mode = CpMode::V2X;
  /// Scenario templates; each is run once per seed with its seed replaced.
  std::vector<ScenarioSpec> scenarios;
  std::vector<std::uint64_t> seeds;
  /// Unset: Rectangle for vehicle egos, Square for infrastructure egos.
  /// V2X-Sim scenes always use their own small square.
  std::optional<RangeShape> range_shape;
  FusionMethod fusion;
  std::vector<NoiseSetting> noise{NoiseSetting::perfect()};
  double resolution = 0.4;
  int min_cluster_cells = 4;
  double static_mask_margin = 0.4;
  double late_nms_iou = 0.2;
  // Execution settings; they never reach a report.
  int workers = 1;
  std::string output_dir = "infracp_out";

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

/// The ego and aux agents of a mode. V2X takes the V2V set and swaps its last
/// aux vehicle for infrastructure agent 0; I2X makes that infrastructure the
/// ego of the same set.
struct AgentSelection {
  int ego = 0;
  std::vector<int> aux;
};

inline AgentSelection select_agents(CpMode mode, const ScenarioSpec& spec) {
  const int nv = spec.n_vehicle_agents;
  AgentSelection s;
  switch (mode) {
    case CpMode::NoFusion:
      s.ego = 0;
      break;
    case CpMode::V2V:
      s.ego = 0;
      for (int i = 1; i < nv; ++i) s.aux.push_back(i);
      break;
    case CpMode::V2X:
      s.ego = 0;
      for (int i = 1; i + 1 < nv; ++i) s.aux.push_back(i);
      s.aux.push_back(nv);
      break;
    case CpMode::I2X:
      s.ego = nv;
      for (int i = 0; i + 1 < nv; ++i) s.aux.push_back(i);
      break;
  }
  return s;
}

inline AgentKind ego_kind(CpMode mode) { return mode == CpMode::I2X ? AgentKind::Infrastructure : AgentKind::Vehicle; }

/// Detection range for an ego of `kind` in `regime`.
inline DetectionRange resolve_range(AgentKind kind, Regime regime, std::optional<RangeShape> shape) {
  if (regime == Regime::V2XSim)
    return ranges::sim_square(kind == AgentKind::Vehicle ? ranges::kSimVehicleZ : ranges::kSimInfraZ);
  const Interval z = kind == AgentKind::Vehicle ? ranges::kVehicleZ : ranges::kInfraZ;
  const RangeShape s = shape.value_or(kind == AgentKind::Vehicle ? RangeShape::Rectangle : RangeShape::Square);
  return s == RangeShape::Rectangle ? ranges::rectangle(z) : ranges::square(z);
}

/// Rejects configs that cannot run. Throws ConfigError.
inline void validate(const ExperimentConfig& cfg) {
  auto fail = [](const std::string& why) { throw ConfigError("invalid experiment config: " + why); };
  if (cfg.scenarios.empty()) fail("no scenarios");
  if (cfg.seeds.empty()) fail("no seeds");
  if (cfg.noise.empty()) fail("no noise setting");
  if (cfg.workers < 1) fail("workers must be >= 1");
  if (!(cfg.resolution > 0.0)) fail("resolution must be positive");
  if (cfg.min_cluster_cells < 1) fail("min_cluster_cells must be >= 1");
  if (!(cfg.static_mask_margin >= 0.0)) fail("static_mask_margin must be >= 0");
  if (!(cfg.late_nms_iou > 0.0 && cfg.late_nms_iou < 1.0)) fail("late_nms_iou must lie in (0,1)");
  for (const NoiseSetting& n : cfg.noise) {
    try {
      n.validate();
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
  }
  for (const ScenarioSpec& s : cfg.scenarios) {
    try {
      s.validate();
    } catch (const std::invalid_argument& e) {
      fail(e.what());
    }
    const std::string where = " (" + to_string(s.archetype) + ")";
    if (cfg.cp_mode != CpMode::NoFusion && s.n_vehicle_agents < 2)
      fail(to_string(cfg.cp_mode) + " needs at least two vehicle agents" + where);
    if ((cfg.cp_mode == CpMode::V2X || cfg.cp_mode == CpMode::I2X) && s.n_infra_agents < 1)
      fail(to_string(cfg.cp_mode) + " needs an infrastructure agent" + where);
    const AgentSelection sel = select_agents(cfg.cp_mode, s);
    if (cfg.fusion.kind == FusionKind::IntermediateWeighted && cfg.fusion.weights.size() != sel.aux.size() + 1)
      fail("IntermediateWeighted needs one weight per participating agent" + where);
  }
  try {
    cfg.fusion.validate();
  } catch (const std::invalid_argument& e) {
    fail(e.what());
  }
}

// ---------------------------------------------------------------------------
// Per-frame pipeline

struct FrameOutcome {
  std::vector<OrientedBox3D> predictions;  // ego frame
  std::vector<OrientedBox3D> ground_truth;  // ego frame
};

/// Sweeps of one scene, cast on first use. Not thread-safe; one per job.
class SweepCache {
 public:
  explicit SweepCache(const Scene& scene) : scene_(scene) {}

  std::shared_ptr<const PointCloud> get(const AgentSpec& agent, int frame) {
    auto key = std::make_pair(agent.id, frame);
    auto it = cache_.find(key);
    if (it != cache_.end()) return it->second;
    auto cloud = std::make_shared<const PointCloud>(
        raycast(scene_, static_cast<std::size_t>(frame), agent, default_lidar(agent.kind)));
    cache_.emplace(key, cloud);
    return cloud;
  }

  CloudSource source() {
    return [this](const AgentSpec& a, int f) { return get(a, f); };
  }

 private:
  const Scene& scene_;
  std::map<std::pair<int, int>, std::shared_ptr<const PointCloud>> cache_;
};

struct PipelineSettings {
  CpMode cp_mode = CpMode::V2X;
  DetectionRange range;
  FusionMethod fusion;
  double resolution = 0.4;
  int min_cluster_cells = 4;
  double static_mask_margin = 0.4;
  double late_nms_iou = 0.2;
};

inline std::vector<OrientedBox3D> occluders_in_frame(const Scene& scene, const Pose& frame_pose) {
  std::vector<OrientedBox3D> out;
  out.reserve(scene.occluders.size());
  for (const OrientedBox3D& o : scene.occluders) out.push_back(transform_box(o, Pose{}, frame_pose));
  return out;
}

/// Sense, share, extract, fuse and detect for one frame as seen by the ego of
/// `settings.cp_mode`.
inline FrameOutcome run_frame(const Scene& scene, int frame, const PipelineSettings& settings,
                              const ChannelConfig& channel, const CloudSource& source) {
  const AgentSelection sel = select_agents(settings.cp_mode, scene.spec);
  const AgentSpec& ego = scene.agents.at(static_cast<std::size_t>(sel.ego));
  std::vector<AgentSpec> aux;
  for (int id : sel.aux) aux.push_back(scene.agents.at(static_cast<std::size_t>(id)));

  const std::vector<Message> msgs = share(scene, frame, ego, aux, channel, source);
  const Pose ego_pose = msgs[0].reported_pose;
  const DetectionRange& range = settings.range;

  FrameOutcome out;
  out.ground_truth = ground_truth(scene, static_cast<std::size_t>(frame), range, ego_pose, ego.id);

  ExtractOptions ext;
  ext.ground_z = -ego_pose.z;
  DetectorConfig det;
  det.min_cluster_cells = settings.min_cluster_cells;
  det.ground_z = -ego_pose.z;
  det.viewpoints.clear();
  for (const Message& m : msgs) {
    const Vec3 v = ego_pose.to_local(m.reported_pose.position());
    det.viewpoints.push_back({v.x, v.y});
  }
  // The ego knows the map and its own body; neither is a detection target.
  std::vector<OrientedBox3D> structures = occluders_in_frame(scene, ego_pose);
  if (ego.kind == AgentKind::Vehicle) structures.push_back(transform_box(vehicle_body(ego_pose), Pose{}, ego_pose));

  if (settings.fusion.kind == FusionKind::Late) {
    std::vector<std::vector<OrientedBox3D>> per_agent;
    std::vector<Pose> poses;
    for (const Message& m : msgs) {
      // Each agent detects in its own frame with its own kind's range.
      const AgentSpec& a = scene.agents.at(static_cast<std::size_t>(m.agent_id));
      const DetectionRange own = resolve_range(a.kind, scene.spec.regime, range.shape);
      ExtractOptions own_ext;
      own_ext.ground_z = -m.reported_pose.z;
      BevGrid g = extract(m.payload->points, own, settings.resolution, own_ext);
      std::vector<OrientedBox3D> own_structures = occluders_in_frame(scene, m.reported_pose);
      if (a.kind == AgentKind::Vehicle)
        own_structures.push_back(transform_box(vehicle_body(m.reported_pose), Pose{}, m.reported_pose));
      mask_static(g, own_structures, settings.static_mask_margin);
      DetectorConfig own_det = det;
      own_det.ground_z = -m.reported_pose.z;
      own_det.viewpoints = {{0.0, 0.0}};
      per_agent.push_back(detect(g, own_det));
      poses.push_back(m.reported_pose);
    }
    for (const OrientedBox3D& b : late_fuse(per_agent, poses, settings.late_nms_iou))
      if (range.contains_xy(b.center.x, b.center.y)) out.predictions.push_back(b);
    return out;
  }

  auto to_ego = [&](const Message& m) { return transform_to_frame(m.payload->points, m.reported_pose, ego_pose); };

  // Per-agent grids also tell the detector which sensor saw each object.
  std::vector<BevGrid> grids;
  grids.push_back(extract(msgs[0].payload->points, range, settings.resolution, ext));
  for (std::size_t k = 1; k < msgs.size(); ++k) grids.push_back(extract(to_ego(msgs[k]), range, settings.resolution, ext));

  BevGrid fused;
  if (settings.fusion.kind == FusionKind::Early) {
    fused = BevGrid::make(range, settings.resolution);
    for (const Message& m : msgs) accumulate(fused, to_ego(m), ext);
  } else {
    fused = fuse(grids[0], std::span<const BevGrid>(grids).subspan(1), settings.fusion);
  }
  mask_static(fused, structures, settings.static_mask_margin);
  out.predictions = detect(fused, det, grids);
  return out;
}

// ---------------------------------------------------------------------------
// Batch runner

namespace detail {

struct JobKey {
  ScenarioSpec spec;  // seed filled in
  std::string scenario_label;
};

inline std::string scenario_label(const ScenarioSpec& s) { return to_string(s.archetype); }

inline RunDescriptor describe(const ExperimentConfig& cfg, const NoiseSetting& noise) {
  RunDescriptor d;
  d.cp_mode = to_string(cfg.cp_mode);
  const AgentKind kind = ego_kind(cfg.cp_mode);
  const Regime regime = cfg.scenarios.front().regime;
  d.range_shape = to_string(resolve_range(kind, regime, cfg.range_shape).shape);
  d.noise = noise.label();
  d.sigma_xy = noise.sigma_xy;
  d.sigma_yaw_deg = noise.sigma_yaw_deg;
  d.latency_frames = noise.latency_frames;
  d.compression_factor = noise.compression_factor;
  d.fusion = to_string(cfg.fusion.kind);
  d.seeds = cfg.seeds;
  return d;
}

/// Runs `n` tasks on up to `workers` threads. The first exception thrown by any
/// task is rethrown after all threads finish.
template <class F>
void parallel_for(std::size_t n, int workers, F&& task) {
  const std::size_t nthreads = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, workers)), n);
  if (nthreads <= 1) {
    for (std::size_t i = 0; i < n; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < nthreads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

}  // namespace detail

/// Runs several configs over the union of their scenes. Returns, per config,
/// one report per noise setting (in config order).
inline std::vector<std::vector<EvalReport>> run_batch(std::span<const ExperimentConfig> cfgs, int workers) {
  for (const ExperimentConfig& c : cfgs) validate(c);

  std::vector<detail::JobKey> jobs;
  // uses[c][s] = job index of scenario-seed pair s of config c
  std::vector<std::vector<std::size_t>> uses(cfgs.size());
  for (std::size_t c = 0; c < cfgs.size(); ++c) {
    for (const ScenarioSpec& tmpl : cfgs[c].scenarios)
      for (std::uint64_t seed : cfgs[c].seeds) {
        ScenarioSpec s = tmpl;
        s.seed = seed;
        auto it = std::find_if(jobs.begin(), jobs.end(), [&](const detail::JobKey& k) { return k.spec == s; });
        if (it == jobs.end()) {
          jobs.push_back({s, detail::scenario_label(s)});
          it = jobs.end() - 1;
        }
        uses[c].push_back(static_cast<std::size_t>(it - jobs.begin()));
      }
  }

  // runs[job][config][noise]
  std::vector<std::vector<std::vector<SceneRun>>> runs(jobs.size());
  detail::parallel_for(jobs.size(), workers, [&](std::size_t j) {
    const Scene scene = generate(jobs[j].spec);
    SweepCache cache(scene);
    const CloudSource source = cache.source();
    runs[j].resize(cfgs.size());
    for (std::size_t c = 0; c < cfgs.size(); ++c) {
      if (std::find(uses[c].begin(), uses[c].end(), j) == uses[c].end()) continue;
      const ExperimentConfig& cfg = cfgs[c];
      PipelineSettings ps;
      ps.cp_mode = cfg.cp_mode;
      ps.range = resolve_range(ego_kind(cfg.cp_mode), scene.spec.regime, cfg.range_shape);
      ps.fusion = cfg.fusion;
      ps.resolution = cfg.resolution;
      ps.min_cluster_cells = cfg.min_cluster_cells;
      ps.static_mask_margin = cfg.static_mask_margin;
      ps.late_nms_iou = cfg.late_nms_iou;
      for (const NoiseSetting& noise : cfg.noise) {
        SceneRun run;
        run.scenario = jobs[j].scenario_label;
        run.seed = jobs[j].spec.seed;
        const ChannelConfig channel{noise, jobs[j].spec.seed};
        for (int f = 0; f < scene.spec.n_frames; ++f) {
          const FrameOutcome fo = run_frame(scene, f, ps, channel, source);
          run.at50.push_back(match(fo.predictions, fo.ground_truth, 0.5));
          run.at70.push_back(match(fo.predictions, fo.ground_truth, 0.7));
        }
        runs[j][c].push_back(std::move(run));
      }
    }
  });

  std::vector<std::vector<EvalReport>> out(cfgs.size());
  for (std::size_t c = 0; c < cfgs.size(); ++c) {
    for (std::size_t n = 0; n < cfgs[c].noise.size(); ++n) {
      std::vector<SceneRun> scene_runs;
      for (std::size_t j : uses[c]) scene_runs.push_back(runs[j][c][n]);
      out[c].push_back(report(scene_runs, detail::describe(cfgs[c], cfgs[c].noise[n])));
    }
  }
  return out;
}

inline std::vector<EvalReport> run_experiment(const ExperimentConfig& cfg) {
  return run_batch(std::span<const ExperimentConfig>(&cfg, 1), cfg.workers).front();
}

// ---------------------------------------------------------------------------
// Config files

/// JSON form of a config, without execution settings (workers, output
/// directory), as embedded in reports.
inline Json config_to_json(const ExperimentConfig& cfg) {
  Json j{{"cp_mode", to_string(cfg.cp_mode)}};
  j["scenarios"] = Json::array();
  for (ScenarioSpec s : cfg.scenarios) {
    Json sj = s;
    sj.erase("seed");
    j["scenarios"].push_back(sj);
  }
  j["seeds"] = cfg.seeds;
  j["range_shape"] = cfg.range_shape ? Json(to_string(*cfg.range_shape)) : Json(nullptr);
  j["fusion"] = cfg.fusion;
  j["noise"] = cfg.noise;
  j["resolution"] = cfg.resolution;
  j["min_cluster_cells"] = cfg.min_cluster_cells;
  j["static_mask_margin"] = cfg.static_mask_margin;
  j["late_nms_iou"] = cfg.late_nms_iou;
  return j;
}

/// Parses and validates a config document. Unknown keys are errors, so typos
/// do not silently fall back to defaults.
inline ExperimentConfig config_from_json(const Json& j) {
  static const char* const kKeys[] = {"cp_mode",         "scenarios",          "seeds",        "range_shape",
                                      "fusion",          "noise",              "resolution",   "min_cluster_cells",
                                      "static_mask_margin", "late_nms_iou",    "workers",      "output_dir"};
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, _] : j.items())
    if (std::find_if(std::begin(kKeys), std::end(kKeys), [&](const char* k) { return key == k; }) == std::end(kKeys))
      throw ConfigError("unknown config key: " + key);
  ExperimentConfig cfg;
  try {
    cfg.cp_mode = cp_mode_from_string(j.at("cp_mode").get<std::string>());
    cfg.scenarios = j.at("scenarios").get<std::vector<ScenarioSpec>>();
    cfg.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("range_shape") && !j["range_shape"].is_null())
      cfg.range_shape = range_shape_from_string(j["range_shape"].get<std::string>());
    if (j.contains("fusion")) cfg.fusion = j["fusion"].get<FusionMethod>();
    if (j.contains("noise")) {
      const Json& n = j["noise"];
      cfg.noise = n.is_array() ? n.get<std::vector<NoiseSetting>>() : std::vector<NoiseSetting>{n.get<NoiseSetting>()};
    }
    cfg.resolution = j.value("resolution", cfg.resolution);
    cfg.min_cluster_cells = j.value("min_cluster_cells", cfg.min_cluster_cells);
    cfg.static_mask_margin = j.value("static_mask_margin", cfg.static_mask_margin);
    cfg.late_nms_iou = j.value("late_nms_iou", cfg.late_nms_iou);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.output_dir = j.value("output_dir", cfg.output_dir);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  validate(cfg);
  return cfg;
}

}  // namespace infracp
