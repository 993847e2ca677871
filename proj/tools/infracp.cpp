// infracp: command-line front end.
//
//   infracp run <config.json>      evaluate one config file
//   infracp e1 | e2 | e3 | e4      built-in studies
//   infracp generate ...           write a scene as JSON
//   infracp render <scene.json>    BEV snapshot as SVG
//
// Exit status: 0 success, 1 a study check failed, 2 bad input.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "infracp/experiments.hpp"
#include "infracp/serialize.hpp"
#include "infracp/svg.hpp"

namespace fs = std::filesystem;
using namespace infracp;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitBadInput = 2;
constexpr const char* kOutputEnv = "INFRACP_OUTPUT_DIR";

/// --out, then the environment, then the config file, then the default.
fs::path output_dir(const std::string& flag, const std::string& from_config, const std::string& fallback) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kOutputEnv); env && *env) return env;
  if (!from_config.empty()) return from_config;
  return fallback;
}

void write_file(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

Json read_json(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open " + path);
  try {
    return Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

int emit(const ExperimentResult& r, const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "report.json", result_to_json(r).dump(2) + "\n");
  write_file(dir / "table.csv", r.table.to_csv());
  write_file(dir / "scenes.csv", scenes_csv(r));
  if (auto chart = svg::ap_vs_noise(r)) write_file(dir / "ap_vs_noise.svg", *chart);

  std::cout << r.table.to_csv() << '\n';
  for (const Check& c : r.checks)
    std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << c.name << ": " << c.detail << '\n';
  std::cout << "outputs written to " << dir.string() << '\n';
  return r.passed() ? kExitOk : kExitCheckFailed;
}

template <class T>
std::vector<T> parse_list(const std::string& text, const char* what) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const long long v = std::stoll(item, &used);
      if (used != item.size() || v < 0) throw std::invalid_argument(item);
      out.push_back(static_cast<T>(v));
    } catch (const std::exception&) {
      throw ConfigError(std::string("bad ") + what + " list: " + text);
    }
  }
  if (out.empty()) throw ConfigError(std::string("empty ") + what + " list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent collaborative perception simulator and evaluation harness"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string out_flag;
  int workers = 1;
  std::string seeds_flag;
  app.add_option("--out", out_flag, "Output directory (overrides " + std::string(kOutputEnv) + ")");
  app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);

  // run
  auto* run = app.add_subcommand("run", "Evaluate a JSON experiment config");
  std::string config_path, mode_flag, shape_flag, fusion_flag;
  std::vector<std::string> noise_flags;
  run->add_option("config", config_path, "Config file")->required();
  run->add_option("--seeds", seeds_flag, "Comma-separated seeds");
  run->add_option("--cp-mode", mode_flag, "NoFusion, V2V, V2X or I2X");
  run->add_option("--range-shape", shape_flag, "Rectangle or Square");
  run->add_option("--fusion", fusion_flag, "Early, Late, IntermediateSum, IntermediateMax");
  run->add_option("--noise", noise_flags, "Noise setting, repeatable: Perfect, Simple, Harsh(k)");

  // studies
  std::vector<CLI::App*> studies;
  std::string levels_flag;
  for (const char* name : {"e1", "e2", "e3", "e4"}) {
    static const char* const kDesc[] = {"V2V vs V2X per scenario", "Detection-range shape, V2X and I2X",
                                        "V2X vs I2X under Perfect, Simple and Harsh noise",
                                        "V2X vs I2X over the harsh noise sweep"};
    auto* sub = app.add_subcommand(name, kDesc[studies.size()]);
    sub->add_option("--seeds", seeds_flag, "Comma-separated seeds (default 1,2,3,4,5)");
    studies.push_back(sub);
  }
  studies[3]->add_option("--levels", levels_flag, "Comma-separated harsh levels (default 0,1,2,3,4,5)");

  // generate
  auto* gen = app.add_subcommand("generate", "Generate a scene and write it as JSON");
  std::string archetype = "FourWayIntersection", regime = "V2XSet", scene_out;
  ScenarioSpec spec;
  gen->add_option("--archetype", archetype, "FourWayIntersection, ThreeWayIntersection, MergeRamp, TwinIntersections");
  gen->add_option("--regime", regime, "V2XSet or V2XSim");
  gen->add_option("--seed", spec.seed, "Scenario seed");
  gen->add_option("--vehicles", spec.n_vehicle_agents, "Vehicle agents");
  gen->add_option("--infra", spec.n_infra_agents, "Infrastructure agents");
  gen->add_option("--actors", spec.n_actors, "Traffic actors");
  gen->add_option("--density", spec.occluder_density, "Occluder density in [0,1]");
  gen->add_option("--frames", spec.n_frames, "Frames");
  gen->add_option("-o,--output", scene_out, "Output file (default <out>/scene.json)");

  // render
  auto* render = app.add_subcommand("render", "Render a scene JSON file as a BEV SVG");
  std::string scene_path, render_out, render_mode, render_noise = "Perfect";
  svg::RenderOptions ropt;
  render->add_option("scene", scene_path, "Scene file")->required();
  render->add_option("--frame", ropt.frame, "Frame index");
  render->add_option("--mode", render_mode, "Overlay detections of this CP mode");
  render->add_option("--noise", render_noise, "Channel noise for the overlay");
  render->add_option("-o,--output", render_out, "Output file (default <out>/scene.svg)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitBadInput;
  }

  try {
    if (*run) {
      ExperimentConfig cfg = config_from_json(read_json(config_path));
      if (!seeds_flag.empty()) cfg.seeds = parse_list<std::uint64_t>(seeds_flag, "seed");
      try {
        if (!mode_flag.empty()) cfg.cp_mode = cp_mode_from_string(mode_flag);
        if (!shape_flag.empty()) cfg.range_shape = range_shape_from_string(shape_flag);
        if (!fusion_flag.empty()) cfg.fusion = {fusion_kind_from_string(fusion_flag), {}};
        if (!noise_flags.empty()) {
          cfg.noise.clear();
          for (const std::string& n : noise_flags) cfg.noise.push_back(Json(n).get<NoiseSetting>());
        }
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      if (app.get_option("--workers")->count() > 0) cfg.workers = workers;
      validate(cfg);
      return emit(run_config(cfg), output_dir(out_flag, cfg.output_dir, "infracp_out"));
    }

    for (std::size_t k = 0; k < studies.size(); ++k) {
      if (!*studies[k]) continue;
      SuiteOptions opt;
      opt.workers = workers;
      if (!seeds_flag.empty()) opt.seeds = parse_list<std::uint64_t>(seeds_flag, "seed");
      if (!levels_flag.empty()) opt.harsh_levels = parse_list<int>(levels_flag, "level");
      ExperimentResult r = k == 0   ? e1_v2v_vs_v2x(opt)
                           : k == 1 ? e2_range_shape(opt)
                           : k == 2 ? e3_v2x_vs_i2x(opt)
                                    : e4_noise_sweep(opt);
      return emit(r, output_dir(out_flag, "", "infracp_out/" + r.name));
    }

    if (*gen) {
      try {
        spec.archetype = archetype_from_string(archetype);
        spec.regime = regime_from_string(regime);
        spec.validate();
      } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
      }
      const fs::path path = scene_out.empty() ? output_dir(out_flag, "", "infracp_out") / "scene.json" : fs::path(scene_out);
      write_file(path, scene_to_json(generate(spec)).dump() + "\n");
      std::cout << "scene written to " << path.string() << '\n';
      return kExitOk;
    }

    if (*render) {
      Scene scene;
      try {
        scene = scene_from_json(read_json(scene_path));
        if (!render_mode.empty()) ropt.cp_mode = cp_mode_from_string(render_mode);
        ropt.noise = Json(render_noise).get<NoiseSetting>();
      } catch (const ConfigError&) {
        throw;
      } catch (const std::exception& e) {
        throw ConfigError(scene_path + ": " + e.what());
      }
      const fs::path path = render_out.empty() ? output_dir(out_flag, "", "infracp_out") / "scene.svg" : fs::path(render_out);
      write_file(path, svg::render_scene(scene, ropt));
      std::cout << "render written to " << path.string() << '\n';
      return kExitOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitBadInput;
  }
  return kExitOk;
}
