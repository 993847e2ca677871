#pragma once

// What travels between agents: metadata (kind, timestamp, pose) and a
// compressed payload. Aux agents' reports pass through the channel, which may
// delay them, compress them and corrupt the reported pose. The ego agent's own
// data never goes through the channel.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "infracp/geometry.hpp"
#include "infracp/rng.hpp"
#include "infracp/scene.hpp"
#include "infracp/sensing.hpp"

namespace infracp {

enum class NoiseKind { Perfect, Simple, Harsh };

inline std::string to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::Perfect: return "Perfect";
    case NoiseKind::Simple: return "Simple";
    case NoiseKind::Harsh: return "Harsh";
  }
  return "?";
}

inline NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "Perfect") return NoiseKind::Perfect;
  if (s == "Simple") return NoiseKind::Simple;
  if (s == "Harsh") return NoiseKind::Harsh;
  throw std::invalid_argument("unknown noise setting: " + s);
}

struct NoiseSetting {
  NoiseKind kind = NoiseKind::Perfect;
  int level = 0;  // only meaningful for Harsh
  double sigma_xy = 0.0;         // metres
  double sigma_yaw_deg = 0.0;    // degrees
  int latency_frames = 0;
  int compression_factor = 1;

  static constexpr int kHarshMaxLevel = 5;

  static NoiseSetting perfect() { return {}; }

  static NoiseSetting simple() { return {NoiseKind::Simple, 0, 0.2, 0.2, 0, 1}; }

  /// Harsh sweep: level k in [0, 5] pairs sigma_xy = 0.1 k m with
  /// sigma_yaw = 0.2 k degrees.
  static NoiseSetting harsh(int level) {
    if (level < 0 || level > kHarshMaxLevel) throw std::invalid_argument("harsh noise level outside [0,5]");
    return {NoiseKind::Harsh, level, 0.1 * level, 0.2 * level, 0, 1};
  }

  std::string label() const {
    return kind == NoiseKind::Harsh ? "Harsh(" + std::to_string(level) + ")" : to_string(kind);
  }

  void validate() const {
    if (!(sigma_xy >= 0.0 && sigma_yaw_deg >= 0.0)) throw std::invalid_argument("NoiseSetting: negative sigma");
    if (latency_frames < 0) throw std::invalid_argument("NoiseSetting: negative latency");
    if (compression_factor < 1) throw std::invalid_argument("NoiseSetting: compression factor must be >= 1");
    if (kind == NoiseKind::Perfect && (sigma_xy != 0.0 || sigma_yaw_deg != 0.0 || latency_frames != 0))
      throw std::invalid_argument("NoiseSetting: Perfect must be noise-free");
  }

  friend bool operator==(const NoiseSetting&, const NoiseSetting&) = default;
};

struct ChannelConfig {
  NoiseSetting noise;
  std::uint64_t rng_seed = 0;
};

/// Adds zero-mean Gaussian error to x, y and yaw. Three standard normals are
/// always drawn and then scaled, so a given engine state yields the same error
/// direction at every noise level.
inline Pose perturb_pose(const Pose& pose, const NoiseSetting& setting, rng::Engine& eng) {
  const double ex = rng::standard_normal(eng);
  const double ey = rng::standard_normal(eng);
  const double eyaw = rng::standard_normal(eng);
  if (setting.sigma_xy == 0.0 && setting.sigma_yaw_deg == 0.0) return pose;
  return Pose(pose.x + setting.sigma_xy * ex, pose.y + setting.sigma_xy * ey, pose.z,
              pose.yaw + deg_to_rad(setting.sigma_yaw_deg) * eyaw);
}

inline constexpr double kBaseVoxel = 0.4;

/// Voxel-grid downsampling with edge kBaseVoxel * sqrt(factor); each occupied
/// voxel is replaced by the centroid of its points, in order of first
/// occurrence. Factor 1 passes the cloud through untouched.
inline PointCloud compress(const PointCloud& cloud, int factor) {
  if (factor < 1) throw std::invalid_argument("compress: factor must be >= 1");
  if (factor == 1) return cloud;
  const double edge = kBaseVoxel * std::sqrt(static_cast<double>(factor));
  struct Acc {
    Vec3 sum;
    int n = 0;
  };
  auto key_of = [edge](const Vec3& p) {
    const auto ix = static_cast<std::int64_t>(std::floor(p.x / edge));
    const auto iy = static_cast<std::int64_t>(std::floor(p.y / edge));
    const auto iz = static_cast<std::int64_t>(std::floor(p.z / edge));
    // 21 bits per axis is plenty for a 120 m sensor at >= 0.4 m voxels.
    return static_cast<std::uint64_t>((ix & 0x1FFFFF) | ((iy & 0x1FFFFF) << 21) | ((iz & 0x1FFFFF) << 42));
  };
  std::unordered_map<std::uint64_t, std::size_t> slot;
  std::vector<Acc> acc;
  slot.reserve(cloud.points.size());
  for (const Vec3& p : cloud.points) {
    auto [it, fresh] = slot.try_emplace(key_of(p), acc.size());
    if (fresh) acc.push_back({});
    Acc& a = acc[it->second];
    a.sum = a.sum + p;
    ++a.n;
  }
  PointCloud out;
  out.source_agent = cloud.source_agent;
  out.timestamp = cloud.timestamp;
  out.points.reserve(acc.size());
  for (const Acc& a : acc) out.points.push_back((1.0 / a.n) * a.sum);
  return out;
}

struct Message {
  AgentKind agent_kind = AgentKind::Vehicle;
  int agent_id = 0;
  int timestamp = 0;
  Pose reported_pose;
  std::shared_ptr<const PointCloud> payload;
};

/// Supplies an agent's sweep at a frame. The harness passes a caching source;
/// the default one casts rays on demand.
using CloudSource = std::function<std::shared_ptr<const PointCloud>(const AgentSpec&, int frame)>;

inline CloudSource raycast_source(const Scene& scene) {
  return [&scene](const AgentSpec& agent, int frame) {
    return std::make_shared<const PointCloud>(
        raycast(scene, static_cast<std::size_t>(frame), agent, default_lidar(agent.kind)));
  };
}
inline CloudSource raycast_source(Scene&&) = delete;

/// Stream for the pose error of `agent_id` at `frame`. Keyed by agent id, so
/// an agent's error does not depend on who else takes part.
inline rng::Engine pose_noise_engine(std::uint64_t seed, int agent_id, int frame) {
  return rng::make_engine(seed, {rng::kPoseNoise, static_cast<std::uint64_t>(agent_id), static_cast<std::uint64_t>(frame)});
}

/// Messages available to `ego` at `frame`: its own sweep first (exact pose,
/// current frame, uncompressed), then one message per aux agent in list order.
inline std::vector<Message> share(const Scene& scene, int frame, const AgentSpec& ego, std::span<const AgentSpec> aux,
                                  const ChannelConfig& cfg, const CloudSource& source) {
  cfg.noise.validate();
  for (const AgentSpec& a : aux)
    if (a.id == ego.id) throw std::invalid_argument("share: ego agent listed among aux agents");
  std::vector<Message> out;
  out.reserve(aux.size() + 1);
  out.push_back({ego.kind, ego.id, frame, agent_pose(scene, static_cast<std::size_t>(frame), ego.id), source(ego, frame)});
  const int sensed = std::max(0, frame - cfg.noise.latency_frames);
  for (const AgentSpec& a : aux) {
    rng::Engine eng = pose_noise_engine(cfg.rng_seed, a.id, frame);
    const Pose truth = agent_pose(scene, static_cast<std::size_t>(sensed), a.id);
    auto raw = source(a, sensed);
    auto payload = cfg.noise.compression_factor == 1
                       ? raw
                       : std::make_shared<const PointCloud>(compress(*raw, cfg.noise.compression_factor));
    out.push_back({a.kind, a.id, sensed, perturb_pose(truth, cfg.noise, eng), std::move(payload)});
  }
  return out;
}

}  // namespace infracp
