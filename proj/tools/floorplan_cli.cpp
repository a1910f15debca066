#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "floorplan/blp_solver.hpp"
#include "floorplan/pipeline.hpp"
#include "floorplan/scenegen_eval.hpp"

namespace fp = floorplan;
using fp::pipeline::PipelineConfig;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitConfig = 2;
constexpr int kExitInput = 3;
constexpr int kExitBudget = 4;

class FileError : public fp::Error {
 public:
  using Error::Error;
};

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw FileError(path + ": " + e.what());
  }
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FileError("cannot write " + path);
  return out;
}

void write_json(const std::string& path, const json& j) {
  auto out = open_out(path);
  out << j.dump(2) << '\n';
  if (!out) throw FileError("write failed: " + path);
}

fp::opt::FloorplanModel load_floorplan(const std::string& path) {
  const auto j = read_json(path);
  try {
    return fp::opt::floorplan_from_json(j);
  } catch (const json::exception& e) {
    throw FileError(path + ": " + e.what());
  } catch (const fp::Error& e) {
    throw FileError(path + ": " + e.what());
  }
}

fp::landmarks::LandmarkMap load_map(const std::string& path, const fp::landmarks::LandmarkConfig& cfg) {
  const auto j = read_json(path);
  try {
    return fp::landmarks::map_from_json(j, cfg);
  } catch (const fp::landmarks::SchemaVersionMismatch&) {
    throw;
  } catch (const json::exception& e) {
    throw FileError(path + ": " + e.what());
  } catch (const fp::Error& e) {
    throw FileError(path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& s) {
  auto out = open_out(path);
  out << s;
  if (!out) throw FileError("write failed: " + path);
}

json events_to_json(const std::vector<fp::pipeline::FloorplanEvent>& series) {
  json a = json::array();
  for (const auto& e : series) {
    a.push_back({{"frame", e.frame}, {"epoch", e.epoch}, {"objective", e.objective}, {"walls", e.walls},
                 {"optimal", e.optimal}});
  }
  return a;
}

json eval_or_null(const fp::opt::FloorplanModel& m, const std::string& scene_path, const PipelineConfig& cfg) {
  const auto spec = fp::scene::scene_from_json(read_json(scene_path));
  try {
    return fp::scene::report_to_json(
        fp::scene::hausdorff_eval(m, spec, cfg.eval.samples, cfg.eval.seed, cfg.eval.coverage_tol));
  } catch (const fp::scene::EmptyModel& e) {
    std::cerr << "warning: " << e.what() << '\n';
    return nullptr;
  }
}

struct Options {
  std::string config;

  // generate
  std::string scene_in;
  std::string preset;
  std::uint64_t seed = 0;
  std::optional<int> part;
  std::optional<int> frames;
  std::vector<double> frame_offset;
  std::string frames_out;
  std::string scene_out;

  // run
  std::string frames_in;
  std::string map_out;
  std::string floorplan_out;
  std::string svg_out;
  std::string report_out;
  std::string timing_out;
  std::string eval_scene;

  // merge
  std::vector<std::string> maps_in;
  std::string transforms_in;

  // eval and render
  std::string floorplan_in;
  std::string eval_out;
  std::optional<std::size_t> samples;
  std::optional<std::uint64_t> eval_seed;

  std::string config_out;
};

PipelineConfig config_of(const Options& o) {
  return o.config.empty() ? PipelineConfig{} : fp::pipeline::load_config(o.config);
}

int cmd_generate(const Options& o) {
  fp::scene::SceneSpec spec;
  if (!o.scene_in.empty()) {
    spec = fp::scene::scene_from_json(read_json(o.scene_in));
  } else if (o.preset == "five-part") {
    spec = fp::scene::five_part_scene(o.seed, o.part.value_or(-1));
  } else {
    if (o.part) throw FileError("--part only applies to the five-part preset");
    spec = fp::scene::preset_scene(o.preset, o.seed);
  }
  if (o.frames) spec.frames = *o.frames;
  if (!o.frame_offset.empty()) {
    const auto& v = o.frame_offset;
    spec.frame_offset = fp::geometry::RigidTransform::yaw(v[0] * fp::geometry::kPi / 180.0, {v[1], v[2], 0.0});
  }
  fp::scene::validate(spec);
  if (!o.scene_out.empty()) write_json(o.scene_out, fp::scene::scene_to_json(spec));
  auto out = open_out(o.frames_out);
  std::size_t n = 0;
  fp::scene::generate_frames(spec, [&](const fp::stereo::FrameRecord& f) {
    fp::stereo::write_frame(out, f);
    ++n;
  });
  if (!out) throw FileError("write failed: " + o.frames_out);
  std::cerr << "wrote " << n << " frames\n";
  return kExitOk;
}

int cmd_run(const Options& o) {
  const auto cfg = config_of(o);
  std::ifstream in(o.frames_in);
  if (!in) throw FileError("cannot open " + o.frames_in);
  const auto r = fp::pipeline::run_session(cfg, in);

  if (!o.map_out.empty()) write_json(o.map_out, fp::landmarks::map_to_json(r.map));
  if (r.floorplan) {
    if (!o.floorplan_out.empty()) write_json(o.floorplan_out, fp::opt::floorplan_to_json(*r.floorplan));
    if (!o.svg_out.empty()) write_text(o.svg_out, fp::opt::render_svg(*r.floorplan));
  } else {
    std::cerr << "warning: no floorplan reconstructed\n";
  }
  if (!o.report_out.empty()) {
    json rep = {{"frames", r.frames},
                {"malformed", r.malformed},
                {"budget_exceeded", r.budget_exceeded},
                {"landmarks", r.map.landmarks().size()},
                {"valid_landmarks", r.map.valid_count()},
                {"walls", r.floorplan ? r.floorplan->walls.size() : 0},
                {"series", events_to_json(r.series)}};
    if (!o.eval_scene.empty()) rep["eval"] = r.floorplan ? eval_or_null(*r.floorplan, o.eval_scene, cfg) : json();
    write_json(o.report_out, rep);
  }
  if (!o.timing_out.empty()) write_json(o.timing_out, fp::pipeline::timings_to_json(r.timings));

  std::cerr << r.frames << " frames, " << r.malformed << " malformed, "
            << (r.floorplan ? r.floorplan->walls.size() : 0) << " walls, " << r.timings.total << " s\n";
  const bool budget = r.budget_exceeded || (r.floorplan && !r.floorplan->optimal);
  return budget ? kExitBudget : kExitOk;
}

int cmd_merge(const Options& o) {
  const auto cfg = config_of(o);
  std::vector<fp::landmarks::LandmarkMap> maps;
  for (const auto& path : o.maps_in) maps.push_back(load_map(path, cfg.landmarks));
  std::map<std::size_t, fp::geometry::RigidTransform> transforms;
  if (!o.transforms_in.empty()) transforms = fp::pipeline::transforms_from_json(read_json(o.transforms_in));
  const auto m = fp::pipeline::run_merge(cfg, maps, transforms);

  if (!o.map_out.empty()) write_json(o.map_out, fp::landmarks::map_to_json(m.map));
  if (!o.floorplan_out.empty()) write_json(o.floorplan_out, fp::opt::floorplan_to_json(m.floorplan));
  if (!o.svg_out.empty()) write_text(o.svg_out, fp::opt::render_svg(m.floorplan));
  if (!o.report_out.empty()) {
    json rep = {{"maps", maps.size()},
                {"landmarks", m.map.landmarks().size()},
                {"valid_landmarks", m.map.valid_count()},
                {"walls", m.floorplan.walls.size()}};
    if (!o.eval_scene.empty()) rep["eval"] = eval_or_null(m.floorplan, o.eval_scene, cfg);
    write_json(o.report_out, rep);
  }
  std::cerr << maps.size() << " maps merged, " << m.floorplan.walls.size() << " walls\n";
  return m.floorplan.optimal ? kExitOk : kExitBudget;
}

int cmd_eval(const Options& o) {
  auto cfg = config_of(o);
  if (o.samples) cfg.eval.samples = *o.samples;
  if (o.eval_seed) cfg.eval.seed = *o.eval_seed;
  if (cfg.eval.samples == 0) throw fp::pipeline::ConfigError("--samples must be positive");
  const auto model = load_floorplan(o.floorplan_in);
  const auto spec = fp::scene::scene_from_json(read_json(o.eval_scene));
  const auto rep = fp::scene::hausdorff_eval(model, spec, cfg.eval.samples, cfg.eval.seed, cfg.eval.coverage_tol);
  const auto j = fp::scene::report_to_json(rep);
  if (o.eval_out.empty()) {
    std::cout << j.dump(2) << '\n';
  } else {
    write_json(o.eval_out, j);
  }
  return kExitOk;
}

int cmd_render(const Options& o) {
  const auto model = load_floorplan(o.floorplan_in);
  write_text(o.svg_out, fp::opt::render_svg(model));
  return kExitOk;
}

int cmd_config(const Options& o) {
  const auto ini = fp::pipeline::config_to_ini(config_of(o));
  if (o.config_out.empty()) {
    std::cout << ini;
  } else {
    write_text(o.config_out, ini);
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Floorplan reconstruction from stereo frame streams"};
  app.require_subcommand(1);
  Options o;

  auto* gen = app.add_subcommand("generate", "Synthesize a frame stream from a scene");
  auto* scene_opt = gen->add_option("--scene", o.scene_in, "Scene JSON")->check(CLI::ExistingFile);
  auto* preset_opt =
      gen->add_option("--preset", o.preset, "Preset: corner, one-room, door-room, three-room, five-part, grid");
  scene_opt->excludes(preset_opt);
  gen->add_option("--seed", o.seed, "Preset seed")->excludes(scene_opt);
  gen->add_option("--part", o.part, "five-part session: 0-3 a room, 4 the corridor")->check(CLI::Range(0, 4));
  gen->add_option("--frames", o.frames, "Override the frame count (0: follow the whole trajectory)")
      ->check(CLI::NonNegativeNumber);
  gen->add_option("--frame-offset", o.frame_offset, "Recording frame: yaw_deg tx ty")->expected(3);
  gen->add_option("--out", o.frames_out, "Frames JSON-lines output")->required();
  gen->add_option("--scene-out", o.scene_out, "Write the resolved scene JSON");

  auto* run = app.add_subcommand("run", "Process a frame stream into a map and floorplan");
  run->add_option("--config", o.config, "INI config");
  run->add_option("--frames", o.frames_in, "Frames JSON-lines input")->required();
  run->add_option("--map-out", o.map_out, "Landmark map JSON");
  run->add_option("--floorplan-out", o.floorplan_out, "Floorplan JSON");
  run->add_option("--svg-out", o.svg_out, "Floorplan SVG");
  run->add_option("--report-out", o.report_out, "Run report JSON (counts, floorplan series, optional eval)");
  run->add_option("--timing-out", o.timing_out, "Stage timings JSON");
  run->add_option("--scene", o.eval_scene, "Ground-truth scene JSON; adds an eval block to the report");

  auto* merge = app.add_subcommand("merge", "Merge session maps and reconstruct");
  merge->add_option("--config", o.config, "INI config");
  merge->add_option("--map", o.maps_in, "Session map JSON, in merge order (repeat)")->required();
  merge->add_option("--transforms", o.transforms_in, "Transforms JSON taking map k into map 0's frame");
  merge->add_option("--map-out", o.map_out, "Merged map JSON");
  merge->add_option("--floorplan-out", o.floorplan_out, "Floorplan JSON");
  merge->add_option("--svg-out", o.svg_out, "Floorplan SVG");
  merge->add_option("--report-out", o.report_out, "Merge report JSON");
  merge->add_option("--scene", o.eval_scene, "Ground-truth scene JSON; adds an eval block to the report");

  auto* ev = app.add_subcommand("eval", "Score a floorplan against a scene");
  ev->add_option("--config", o.config, "INI config ([eval] section)");
  ev->add_option("--floorplan", o.floorplan_in, "Floorplan JSON")->required();
  ev->add_option("--scene", o.eval_scene, "Ground-truth scene JSON")->required();
  ev->add_option("--samples", o.samples, "Model samples (overrides config)");
  ev->add_option("--seed", o.eval_seed, "Sampling seed (overrides config)");
  ev->add_option("--out", o.eval_out, "Report JSON (default: stdout)");

  auto* render = app.add_subcommand("render", "Render a floorplan JSON to SVG");
  render->add_option("--floorplan", o.floorplan_in, "Floorplan JSON")->required();
  render->add_option("--out", o.svg_out, "SVG output")->required();

  auto* config = app.add_subcommand("config", "Print the effective configuration");
  config->add_option("--config", o.config, "INI config to validate and expand");
  config->add_option("--out", o.config_out, "INI output (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*gen) {
      if (o.scene_in.empty() && o.preset.empty()) throw FileError("generate needs --scene or --preset");
      return cmd_generate(o);
    }
    if (*run) return cmd_run(o);
    if (*merge) return cmd_merge(o);
    if (*ev) return cmd_eval(o);
    if (*render) return cmd_render(o);
    if (*config) return cmd_config(o);
  } catch (const fp::pipeline::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fp::blp::BudgetExceeded& e) {
    std::cerr << "solver budget exceeded without an incumbent: " << e.what() << '\n';
    return kExitBudget;
  } catch (const fp::opt::Infeasible& e) {
    std::cerr << "selection infeasible: " << e.what() << '\n';
    return kExitFailure;
  } catch (const fp::pipeline::InputError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const fp::pipeline::TransformMissing& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const fp::stereo::MalformedFrame& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const fp::landmarks::SchemaVersionMismatch& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const fp::scene::InvalidScene& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const FileError& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const json::exception& e) {
    std::cerr << "input error: " << e.what() << '\n';
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitFailure;
}
