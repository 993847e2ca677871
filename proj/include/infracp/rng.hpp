#pragma once

// Seed derivation for reproducible, schedule-independent random streams.
//
// Every stochastic draw in the simulator comes from an engine seeded by
// derive_seed(base, tag...), so a stream depends only on what it is for
// (scenario seed, agent id, frame) and never on the order jobs happen to run.

#include <cstdint>
#include <initializer_list>
#include <random>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <boost/random/uniform_real_distribution.hpp>

namespace infracp::rng {

using Engine = std::mt19937_64;

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = splitmix64(base);
  for (std::uint64_t t : tags) h = splitmix64(h ^ splitmix64(t + 0x632BE59BD9B4E019ULL));
  return h;
}

inline Engine make_engine(std::uint64_t base, std::initializer_list<std::uint64_t> tags) {
  return Engine(derive_seed(base, tags));
}

// Boost distributions are used instead of the <random> ones because their
// output is specified by the implementation we ship, not by the standard
// library vendor.

inline double uniform(Engine& eng, double lo, double hi) {
  return boost::random::uniform_real_distribution<double>(lo, hi)(eng);
}

inline int uniform_int(Engine& eng, int lo, int hi) {
  return boost::random::uniform_int_distribution<int>(lo, hi)(eng);
}

inline double standard_normal(Engine& eng) { return boost::random::normal_distribution<double>(0.0, 1.0)(eng); }

// Stream tags. Distinct domains never share a stream.
enum StreamTag : std::uint64_t {
  kSceneLayout = 1,
  kSceneActors = 2,
  kPoseNoise = 3,
  kAgentSelection = 4,
};

}  // namespace infracp::rng
