#pragma once

// Built-in studies. Each one is a fixed list of configs over a scenario suite,
// a table pivot, and the checks the results are expected to satisfy.
//
//   e1  V2V vs V2X, per scenario          (all archetypes)
//   e2  detection-range shape, V2X / I2X   (intersection archetypes)
//   e3  V2X vs I2X under Perfect / Simple / Harsh(max)
//   e4  V2X vs I2X over the harsh sweep

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "infracp/harness.hpp"

namespace infracp {

namespace suites {

inline ScenarioSpec of(Archetype a) {
  ScenarioSpec s;
  s.archetype = a;
  return s;
}

inline std::vector<ScenarioSpec> intersections() {
  return {of(Archetype::FourWayIntersection), of(Archetype::ThreeWayIntersection)};
}

inline std::vector<ScenarioSpec> full() {
  return {of(Archetype::FourWayIntersection), of(Archetype::ThreeWayIntersection), of(Archetype::MergeRamp),
          of(Archetype::TwinIntersections)};
}

/// Unoccluded single-vehicle scenes in the small-range regime: nothing but
/// the detector stands between the sensor and the targets.
inline std::vector<ScenarioSpec> sanity() {
  ScenarioSpec s = of(Archetype::FourWayIntersection);
  s.regime = Regime::V2XSim;
  s.n_vehicle_agents = 1;
  s.n_infra_agents = 0;
  s.n_actors = 6;
  s.occluder_density = 0.0;
  return {s};
}

inline std::vector<std::uint64_t> default_seeds() { return {1, 2, 3, 4, 5}; }
inline std::vector<std::uint64_t> sanity_seeds() { return {1, 2, 3, 4, 5, 6, 7, 8, 9, 10}; }

}  // namespace suites

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// A small string table; cells are preformatted.
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::string to_csv() const {
    std::string out;
    auto line = [&out](const std::vector<std::string>& cells) {
      for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
      out += '\n';
    };
    line(header);
    for (const auto& r : rows) line(r);
    return out;
  }
};

struct ExperimentResult {
  std::string name;
  std::vector<ExperimentConfig> configs;
  std::vector<std::vector<EvalReport>> reports;  // [config][noise setting]
  std::vector<Check> checks;
  Table table;

  bool passed() const {
    for (const Check& c : checks)
      if (!c.passed) return false;
    return true;
  }
};

struct SuiteOptions {
  int workers = 1;
  std::vector<std::uint64_t> seeds = suites::default_seeds();
  std::vector<int> harsh_levels{0, 1, 2, 3, 4, 5};  // e4 only
};

// ---------------------------------------------------------------------------
// Helpers

/// Mean AP@0.7 (or @0.5) over the scenes of one scenario in a report.
inline std::optional<double> scenario_mean(const EvalReport& r, const std::string& scenario, bool at70 = true) {
  double sum = 0.0;
  int n = 0;
  for (const SceneScore& s : r.scenes) {
    if (s.scenario != scenario) continue;
    const auto& v = at70 ? s.ap70 : s.ap50;
    if (v) {
      sum += *v;
      ++n;
    }
  }
  if (n == 0) return std::nullopt;
  return sum / n;
}

inline std::string fmt(double v, const char* spec = "%.4f") {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

inline std::string fmt(const std::optional<double>& v) { return v ? fmt(*v) : "n/a"; }

/// ap70 <= ap50 for every report of the result, pooled and per scene.
inline Check threshold_monotonicity(const std::vector<std::vector<EvalReport>>& reports) {
  int bad = 0, seen = 0;
  auto test = [&](const std::optional<double>& a50, const std::optional<double>& a70) {
    ++seen;
    if (a50.has_value() != a70.has_value() || (a50 && *a70 > *a50)) ++bad;
  };
  for (const auto& per_cfg : reports)
    for (const EvalReport& r : per_cfg) {
      test(r.ap50, r.ap70);
      test(r.mean_scene_ap50, r.mean_scene_ap70);
      for (const SceneScore& s : r.scenes) test(s.ap50, s.ap70);
    }
  return {"ap70 <= ap50 on every report", bad == 0, std::to_string(bad) + " violations in " + std::to_string(seen)};
}

/// `a - b >= margin` (or `<=` when `at_most`), with absent values failing.
inline Check margin_check(std::string name, const std::optional<double>& a, const std::optional<double>& b,
                          double margin, bool at_most = false) {
  if (!a || !b) return {std::move(name), false, "missing AP"};
  const double d = *a - *b;
  const bool ok = at_most ? d <= margin : d >= margin;
  return {std::move(name), ok, fmt(*a) + " - " + fmt(*b) + " = " + fmt(d, "%+.4f")};
}

inline ExperimentConfig make_config(CpMode mode, std::vector<ScenarioSpec> scenarios, const SuiteOptions& opt) {
  ExperimentConfig c;
  c.cp_mode = mode;
  c.scenarios = std::move(scenarios);
  c.seeds = opt.seeds;
  c.workers = opt.workers;
  return c;
}

inline ExperimentResult run_configs(std::string name, std::vector<ExperimentConfig> configs, int workers) {
  ExperimentResult r;
  r.name = std::move(name);
  r.reports = run_batch(configs, workers);
  r.configs = std::move(configs);
  r.checks.push_back(threshold_monotonicity(r.reports));
  return r;
}

/// One row per (config, noise setting); the table used for ad hoc configs.
inline Table summary_table(const ExperimentResult& r) {
  Table t{{"cp_mode", "range_shape", "noise", "fusion", "ap50", "ap70", "mean_scene_ap50", "mean_scene_ap70"}, {}};
  for (const auto& per_cfg : r.reports)
    for (const EvalReport& e : per_cfg)
      t.rows.push_back({e.config.cp_mode, e.config.range_shape, e.config.noise, e.config.fusion, fmt(e.ap50),
                        fmt(e.ap70), fmt(e.mean_scene_ap50), fmt(e.mean_scene_ap70)});
  return t;
}

// ---------------------------------------------------------------------------
// Studies

inline ExperimentResult e1_v2v_vs_v2x(const SuiteOptions& opt = {}) {
  ExperimentResult r = run_configs(
      "e1", {make_config(CpMode::V2V, suites::full(), opt), make_config(CpMode::V2X, suites::full(), opt)},
      opt.workers);
  const EvalReport& v2v = r.reports[0][0];
  const EvalReport& v2x = r.reports[1][0];

  r.table.header = {"scenario", "V2V_ap70", "V2X_ap70", "V2X_minus_V2V"};
  for (const ScenarioSpec& s : suites::full()) {
    const std::string label = to_string(s.archetype);
    const auto a = scenario_mean(v2v, label), b = scenario_mean(v2x, label);
    r.table.rows.push_back({label, fmt(a), fmt(b), a && b ? fmt(*b - *a, "%+.4f") : "n/a"});
  }
  const auto& a = v2v.mean_scene_ap70;
  const auto& b = v2x.mean_scene_ap70;
  r.table.rows.push_back({"All", fmt(a), fmt(b), a && b ? fmt(*b - *a, "%+.4f") : "n/a"});

  const std::string ramp = to_string(Archetype::MergeRamp), twin = to_string(Archetype::TwinIntersections);
  r.checks.push_back(margin_check("MergeRamp: V2X - V2V >= 0.05", scenario_mean(v2x, ramp),
                                  scenario_mean(v2v, ramp), 0.05));
  r.checks.push_back(margin_check("all scenarios: V2X >= V2V", b, a, 0.0));
  r.checks.push_back(margin_check("TwinIntersections: V2X - V2V <= 0.02", scenario_mean(v2x, twin),
                                  scenario_mean(v2v, twin), 0.02, true));
  return r;
}

inline ExperimentResult e2_range_shape(const SuiteOptions& opt = {}) {
  std::vector<ExperimentConfig> cfgs;
  for (CpMode m : {CpMode::V2X, CpMode::I2X})
    for (RangeShape s : {RangeShape::Rectangle, RangeShape::Square}) {
      cfgs.push_back(make_config(m, suites::intersections(), opt));
      cfgs.back().range_shape = s;
    }
  ExperimentResult r = run_configs("e2", std::move(cfgs), opt.workers);
  auto at = [&r](std::size_t i) -> const EvalReport& { return r.reports[i][0]; };

  r.table.header = {"ego_mode", "Rectangle_ap50", "Rectangle_ap70", "Square_ap50", "Square_ap70"};
  for (std::size_t m = 0; m < 2; ++m)
    r.table.rows.push_back({at(2 * m).config.cp_mode, fmt(at(2 * m).mean_scene_ap50), fmt(at(2 * m).mean_scene_ap70),
                            fmt(at(2 * m + 1).mean_scene_ap50), fmt(at(2 * m + 1).mean_scene_ap70)});

  r.checks.push_back(margin_check("V2X: Rectangle - Square >= 0.02", at(0).mean_scene_ap70, at(1).mean_scene_ap70, 0.02));
  r.checks.push_back(margin_check("I2X: Square - Rectangle >= 0.02", at(3).mean_scene_ap70, at(2).mean_scene_ap70, 0.02));
  return r;
}

inline ExperimentResult e3_v2x_vs_i2x(const SuiteOptions& opt = {}) {
  std::vector<ExperimentConfig> cfgs;
  for (CpMode m : {CpMode::V2X, CpMode::I2X}) {
    cfgs.push_back(make_config(m, suites::full(), opt));
    cfgs.back().noise = {NoiseSetting::perfect(), NoiseSetting::simple(),
                         NoiseSetting::harsh(NoiseSetting::kHarshMaxLevel)};
  }
  ExperimentResult r = run_configs("e3", std::move(cfgs), opt.workers);
  r.table.header = {"noise", "V2X_ap70", "I2X_ap70"};
  for (std::size_t n = 0; n < r.configs[0].noise.size(); ++n)
    r.table.rows.push_back(
        {r.reports[0][n].config.noise, fmt(r.reports[0][n].mean_scene_ap70), fmt(r.reports[1][n].mean_scene_ap70)});
  return r;
}

inline ExperimentResult e4_noise_sweep(const SuiteOptions& opt = {}) {
  if (opt.harsh_levels.size() < 2) throw ConfigError("e4 needs at least two harsh levels");
  std::vector<ExperimentConfig> cfgs;
  for (CpMode m : {CpMode::V2X, CpMode::I2X}) {
    cfgs.push_back(make_config(m, suites::full(), opt));
    cfgs.back().noise.clear();
    for (int k : opt.harsh_levels) {
      try {
        cfgs.back().noise.push_back(NoiseSetting::harsh(k));
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
    }
  }
  ExperimentResult r = run_configs("e4", std::move(cfgs), opt.workers);

  r.table.header = {"level", "sigma_xy_m", "sigma_yaw_deg", "V2X_ap70", "I2X_ap70"};
  for (std::size_t n = 0; n < r.configs[0].noise.size(); ++n) {
    const NoiseSetting& ns = r.configs[0].noise[n];
    r.table.rows.push_back({std::to_string(ns.level), fmt(ns.sigma_xy, "%.2f"), fmt(ns.sigma_yaw_deg, "%.2f"),
                            fmt(r.reports[0][n].mean_scene_ap70), fmt(r.reports[1][n].mean_scene_ap70)});
  }

  constexpr double kWobble = 0.01;
  for (std::size_t m = 0; m < 2; ++m) {
    const auto& series = r.reports[m];
    bool ok = true;
    std::string worst = "none";
    double worst_rise = -1.0;
    for (std::size_t n = 1; n < series.size(); ++n) {
      const auto& prev = series[n - 1].mean_scene_ap70;
      const auto& cur = series[n].mean_scene_ap70;
      if (!prev || !cur) {
        ok = false;
        continue;
      }
      const double rise = *cur - *prev;
      if (rise > worst_rise) {
        worst_rise = rise;
        worst = fmt(rise, "%+.4f") + " at " + series[n].config.noise;
      }
      ok = ok && rise <= kWobble;
    }
    r.checks.push_back({series[0].config.cp_mode + ": AP@0.7 non-increasing in noise level (tol 0.01)", ok,
                        "largest step " + worst});
  }

  const auto& v_first = r.reports[0].front().mean_scene_ap70;
  const auto& v_last = r.reports[0].back().mean_scene_ap70;
  const auto& i_first = r.reports[1].front().mean_scene_ap70;
  const auto& i_last = r.reports[1].back().mean_scene_ap70;
  Check c = margin_check("max noise: I2X > V2X", i_last, v_last, 0.0);
  c.passed = i_last && v_last && *i_last > *v_last;
  r.checks.push_back(c);

  Check drop{"relative drop: I2X < V2X", false, "missing AP"};
  if (v_first && v_last && i_first && i_last && *v_first > 0.0 && *i_first > 0.0) {
    const double dv = (*v_first - *v_last) / *v_first;
    const double di = (*i_first - *i_last) / *i_first;
    drop.passed = di < dv;
    drop.detail = "I2X " + fmt(di) + " vs V2X " + fmt(dv);
  }
  r.checks.push_back(drop);
  return r;
}

/// Ad hoc run of one config file.
inline ExperimentResult run_config(const ExperimentConfig& cfg) {
  ExperimentResult r = run_configs("run", {cfg}, cfg.workers);
  r.table = summary_table(r);
  return r;
}

// ---------------------------------------------------------------------------
// Output documents

/// The report document. Holds everything that defines the numbers and
/// nothing else, so equal runs serialize to equal bytes.
inline Json result_to_json(const ExperimentResult& r) {
  Json j{{"experiment", r.name}, {"passed", r.passed()}};
  j["checks"] = Json::array();
  for (const Check& c : r.checks) j["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  j["runs"] = Json::array();
  for (std::size_t i = 0; i < r.configs.size(); ++i)
    j["runs"].push_back({{"config", config_to_json(r.configs[i])}, {"reports", r.reports[i]}});
  return j;
}

inline std::string scenes_csv(const ExperimentResult& r) {
  std::string out = std::string(kSceneCsvHeader) + "\n";
  for (const auto& per_cfg : r.reports)
    for (const EvalReport& e : per_cfg)
      for (const SceneScore& s : e.scenes) out += scene_csv_row(e.config, s) + "\n";
  return out;
}

}  // namespace infracp
