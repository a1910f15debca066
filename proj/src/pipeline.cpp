#include "floorplan/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <chrono>
#include <condition_variable>
#include <fstream>
#include <istream>
#include <mutex>
#include <sstream>
#include <thread>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "floorplan/blp_solver.hpp"

namespace floorplan::pipeline {

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

// ---------------------------------------------------------------------------
// config

struct Key {
  std::string section;
  std::string name;
  std::function<void(const std::string&)> set;
  std::function<std::string()> get;
};

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, end);
}

[[noreturn]] void bad_value(const std::string& sec, const std::string& name, const std::string& v,
                            const std::string& why) {
  throw ConfigError("[" + sec + "] " + name + " = '" + v + "': " + why);
}

template <class T>
T parse_number(const std::string& sec, const std::string& name, const std::string& raw) {
  const auto first = raw.find_first_not_of(" \t");
  const auto last = raw.find_last_not_of(" \t");
  if (first == std::string::npos) bad_value(sec, name, raw, "empty value");
  const char* b = raw.data() + first;
  const char* e = raw.data() + last + 1;
  T v{};
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || ptr != e) bad_value(sec, name, raw, "not a valid number");
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) bad_value(sec, name, raw, "not finite");
  }
  return v;
}

Key real(const char* sec, const char* name, double& ref, double lo, double hi, bool lo_open = false,
         bool hi_open = false) {
  return {sec, name,
          [=, &ref](const std::string& raw) {
            const double v = parse_number<double>(sec, name, raw);
            const bool ok = (lo_open ? v > lo : v >= lo) && (hi_open ? v < hi : v <= hi);
            if (!ok) {
              bad_value(sec, name, raw,
                        std::string("outside ") + (lo_open ? "(" : "[") + format_double(lo) + ", " +
                            format_double(hi) + (hi_open ? ")" : "]"));
            }
            ref = v;
          },
          [&ref] { return format_double(ref); }};
}

template <class T>
Key integer(const char* sec, const char* name, T& ref, T lo, T hi = std::numeric_limits<T>::max()) {
  return {sec, name,
          [=, &ref](const std::string& raw) {
            const T v = parse_number<T>(sec, name, raw);
            if (v < lo || v > hi) {
              bad_value(sec, name, raw, "outside [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            }
            ref = v;
          },
          [&ref] { return std::to_string(ref); }};
}

Key flag(const char* sec, const char* name, bool& ref) {
  return {sec, name,
          [=, &ref](const std::string& raw) {
            if (raw == "true" || raw == "1") {
              ref = true;
            } else if (raw == "false" || raw == "0") {
              ref = false;
            } else {
              bad_value(sec, name, raw, "expected true or false");
            }
          },
          [&ref] { return std::string(ref ? "true" : "false"); }};
}

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<Key> keys(PipelineConfig& c) {
  auto& x = c.extraction;
  auto& l = c.landmarks;
  auto& f = c.floorplan;
  return {
      real("stereo", "max_edge", c.prune.max_edge, 0, kInf, true),
      real("stereo", "max_aspect", c.prune.max_aspect, 1, kInf),
      real("stereo", "min_angle_deg", c.prune.min_angle_deg, 0, 60),

      real("extraction", "eps", x.eps, 0, kInf, true),
      integer("extraction", "min_pts", x.min_pts, 1),
      real("extraction", "w_phi", x.weights.w_phi, 0, kInf),
      real("extraction", "w_psi", x.weights.w_psi, 0, kInf),
      real("extraction", "w_d", x.weights.w_d, 0, kInf),
      integer("extraction", "ransac_iterations", x.ransac_iterations, 1),
      real("extraction", "dist_gate", x.dist_gate, 0, kInf, true),
      real("extraction", "theta_i", x.theta_i, 0, 1, true),
      integer<std::uint64_t>("extraction", "seed", x.seed, 0),
      flag("extraction", "merge_coplanar", x.merge_coplanar),

      real("landmarks", "theta_m_deg", l.theta_m_deg, 0, 90, true, true),
      real("landmarks", "d_m", l.d_m, 0, kInf, true),
      integer("landmarks", "promote_frames", l.promote_frames, 0),
      integer("landmarks", "promote_keyframes", l.promote_keyframes, 0),
      integer<std::size_t>("landmarks", "max_support", l.max_support, 3),
      integer("landmarks", "ransac_iterations", l.ransac_iterations, 1),
      real("landmarks", "dist_gate", l.dist_gate, 0, kInf, true),
      real("landmarks", "theta_i", l.theta_i, 0, 1, true),
      real("landmarks", "prune_gate", l.prune_gate, -kInf, kInf),
      integer<std::uint64_t>("landmarks", "seed", l.seed, 0),

      real("floorplan", "vertical_tol_deg", f.vertical_tol_deg, 0, 90, true, true),
      real("floorplan", "min_extent", f.min_extent, 0, kInf),
      real("floorplan", "line_gate", f.line_gate, 0, kInf, true),
      real("floorplan", "split_gap", f.split_gap, 0, kInf, true),
      integer<std::size_t>("floorplan", "max_support_2d", f.max_support_2d, 1),
      real("floorplan", "theta_r_deg", f.theta_r_deg, 0, 90, false, true),
      real("floorplan", "close_gate", f.close_gate, 0, kInf, true),
      real("floorplan", "extension_min", f.extension_min, 0, kInf),
      real("floorplan", "extension_frac", f.extension_frac, 0, kInf),
      real("floorplan", "bbox_inflate", f.bbox_inflate, 0, kInf),
      real("floorplan", "snap_tol", f.snap_tol, 0, kInf),
      real("floorplan", "lambda_f", f.lambda_f, 0, kInf),
      real("floorplan", "lambda_c", f.lambda_c, 0, kInf),
      real("floorplan", "lambda_m", f.lambda_m, 0, kInf),
      real("floorplan", "eps_f", f.eps_f, -kInf, kInf),
      real("floorplan", "eps_c", f.eps_c, -kInf, kInf),
      real("floorplan", "eps_c_factor", f.eps_c_factor, 0, kInf, true),
      integer("floorplan", "density_k", f.density_k, 1),
      real("floorplan", "collinear_tol_deg", f.collinear_tol_deg, 0, 90, false, true),
      flag("floorplan", "use_trajectory", f.use_trajectory),
      flag("floorplan", "sharp_per_pair", f.sharp_per_pair),

      real("solver", "time_budget_s", f.time_budget_s, 0, kInf, true),
      integer("solver", "iis_max_candidates", f.iis_max_candidates, 0),

      integer("pipeline", "cadence", c.cadence, 1),
      integer("pipeline", "session", c.session, 0),
      flag("pipeline", "abort_on_malformed", c.abort_on_malformed),
      flag("pipeline", "async_reconstruction", c.async_reconstruction),

      integer<std::size_t>("eval", "samples", c.eval.samples, 1),
      integer<std::uint64_t>("eval", "seed", c.eval.seed, 0),
      real("eval", "coverage_tol", c.eval.coverage_tol, 0, kInf, true),
  };
}

}  // namespace

PipelineConfig parse_config(const std::string& ini) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream is(ini);
    pt::ini_parser::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }

  PipelineConfig cfg;
  const auto table = keys(cfg);
  for (const auto& [sec, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + sec + "' outside any section");
    bool known_section = false;
    for (const auto& k : table) known_section |= k.section == sec;
    if (!known_section) throw ConfigError("unknown section [" + sec + "]");
    for (const auto& [name, value] : body) {
      const auto it = std::find_if(table.begin(), table.end(),
                                   [&](const Key& k) { return k.section == sec && k.name == name; });
      if (it == table.end()) throw ConfigError("unknown key '" + name + "' in [" + sec + "]");
      it->set(value.data());
    }
  }
  const auto& f = cfg.floorplan;
  if (f.lambda_f + f.lambda_c + f.lambda_m <= 0.0) throw ConfigError("lambda weights are all zero");
  return cfg;
}

PipelineConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_ini(const PipelineConfig& cfg) {
  PipelineConfig copy = cfg;
  std::string out;
  std::string current;
  for (const auto& k : keys(copy)) {
    if (k.section != current) {
      if (!current.empty()) out += '\n';
      out += "[" + k.section + "]\n";
      current = k.section;
    }
    out += k.name + " = " + k.get() + "\n";
  }
  return out;
}

nlohmann::json timings_to_json(const StageTimings& t) {
  return {{"stages",
           {{"input", t.input},
            {"mesh", t.mesh},
            {"plane_extraction", t.plane_extraction},
            {"landmarks", t.landmarks},
            {"segment_generation", t.segment_generation},
            {"segment_selection", t.segment_selection},
            {"other", t.other}}},
          {"total", t.total},
          {"worker", t.worker},
          {"reconstructions", t.reconstructions},
          {"max_candidates", t.max_candidates}};
}

// ---------------------------------------------------------------------------
// frames

std::vector<landmarks::WorldFeature> FrameProcessor::process(stereo::FrameRecord& f, StageTimings* t) const {
  auto t0 = Clock::now();
  stereo::triangulate_all(f.points, f.K);
  stereo::TriMesh mesh;
  try {
    mesh = stereo::prune_mesh(stereo::build_mesh(f.points), f.points, cfg_.prune);
  } catch (const stereo::DegenerateInput&) {
  }
  if (t) t->mesh += since(t0);

  t0 = Clock::now();
  std::vector<landmarks::WorldFeature> out;
  if (!mesh.triangles.empty()) {
    for (const auto& feat : extraction::extract_planes(mesh, f.points, cfg_.extraction)) {
      landmarks::WorldFeature w;
      w.plane = geometry::transform_plane(feat.plane, f.T_wc);
      w.support.reserve(feat.support.size());
      for (int i : feat.support) w.support.push_back(f.T_wc.apply(f.points[static_cast<std::size_t>(i)].p3));
      out.push_back(std::move(w));
    }
  }
  if (t) t->plane_extraction += since(t0);
  return out;
}

namespace {

// Latest-wins reconstruction worker: at most one job running, one queued.
class Worker {
 public:
  Worker(const opt::FloorplanConfig& cfg) : cfg_(cfg), th_([this] { loop(); }) {}

  ~Worker() { stop(); }

  void post(std::shared_ptr<const landmarks::MapSnapshot> snap, std::int64_t frame) {
    {
      std::lock_guard lock(m_);
      pending_ = std::move(snap);
      pending_frame_ = frame;
    }
    cv_.notify_one();
  }

  void stop() {
    {
      std::lock_guard lock(m_);
      if (stopping_) return;
      stopping_ = true;
      pending_.reset();
    }
    cv_.notify_one();
    th_.join();
  }

  std::vector<FloorplanEvent> events;
  double busy{0.0};
  std::size_t runs{0};
  std::size_t max_candidates{0};
  bool budget_exceeded{false};

 private:
  void loop() {
    for (;;) {
      std::shared_ptr<const landmarks::MapSnapshot> snap;
      std::int64_t frame = 0;
      {
        std::unique_lock lock(m_);
        cv_.wait(lock, [&] { return stopping_ || pending_; });
        if (stopping_) return;
        snap = std::move(pending_);
        frame = pending_frame_;
      }
      const auto t0 = Clock::now();
      opt::ReconstructionTimings rt;
      try {
        const auto m = opt::reconstruct(*snap, cfg_, &rt);
        events.push_back({frame, snap->epoch, m.objective, m.walls.size(), m.optimal});
        budget_exceeded |= !m.optimal;
      } catch (const blp::BudgetExceeded&) {
        budget_exceeded = true;
      } catch (const opt::Infeasible&) {
      }
      busy += since(t0);
      ++runs;
      max_candidates = std::max(max_candidates, rt.candidates);
    }
  }

  const opt::FloorplanConfig& cfg_;
  std::mutex m_;
  std::condition_variable cv_;
  std::shared_ptr<const landmarks::MapSnapshot> pending_;
  std::int64_t pending_frame_{0};
  bool stopping_{false};
  std::thread th_;
};

}  // namespace

SessionResult run_session(const PipelineConfig& cfg, const FrameSource& next) {
  const auto start = Clock::now();
  SessionResult r{landmarks::LandmarkMap(cfg.landmarks, cfg.session), std::nullopt, {}, {}, 0, 0, false};
  auto& t = r.timings;
  FrameProcessor proc(cfg);
  std::unique_ptr<Worker> worker;
  if (cfg.async_reconstruction) worker = std::make_unique<Worker>(cfg.floorplan);

  std::size_t reconstructed_at = 0;  // r.frames when the last synchronous run happened
  std::int64_t last_frame = 0;

  auto reconstruct_now = [&](bool final_run) {
    const auto t0 = Clock::now();
    auto snap = r.map.snapshot();
    opt::ReconstructionTimings rt;
    std::optional<opt::FloorplanModel> model;
    try {
      model = opt::reconstruct(*snap, cfg.floorplan, &rt);
    } catch (const blp::BudgetExceeded&) {
      r.budget_exceeded = true;
    } catch (const opt::Infeasible&) {
      if (final_run) throw;
    }
    const double wall = since(t0);
    t.segment_selection += std::min(rt.selection_s, wall);
    t.segment_generation += wall - std::min(rt.selection_s, wall);
    ++t.reconstructions;
    t.max_candidates = std::max(t.max_candidates, rt.candidates);
    reconstructed_at = r.frames;
    if (model) {
      r.budget_exceeded |= !model->optimal;
      r.series.push_back({last_frame, snap->epoch, model->objective, model->walls.size(), model->optimal});
      r.floorplan = std::move(model);
    } else if (final_run) {
      r.floorplan.reset();
    }
  };

  for (;;) {
    auto t0 = Clock::now();
    std::optional<stereo::FrameRecord> f;
    try {
      f = next();
    } catch (const stereo::MalformedFrame&) {
      t.input += since(t0);
      if (cfg.abort_on_malformed) throw;
      ++r.malformed;
      continue;
    }
    t.input += since(t0);
    if (!f) break;

    std::vector<landmarks::WorldFeature> features;
    try {
      features = proc.process(*f, &t);
    } catch (const stereo::NonPositiveDisparity& e) {
      if (cfg.abort_on_malformed) throw stereo::MalformedFrame(0, e.what());
      ++r.malformed;
      continue;
    }

    t0 = Clock::now();
    for (const auto& w : features) r.map.observe(w, f->frame, f->keyframe);
    r.map.add_pose({cfg.session, f->frame, f->keyframe, f->T_wc});
    if (f->keyframe) r.map.merge_pass();
    t.landmarks += since(t0);
    ++r.frames;
    last_frame = f->frame;

    if (r.frames % static_cast<std::size_t>(cfg.cadence) == 0) {
      if (worker) {
        const auto t1 = Clock::now();
        worker->post(r.map.snapshot(), f->frame);
        t.segment_generation += since(t1);
      } else {
        reconstruct_now(false);
      }
    }
  }

  if (worker) {
    worker->stop();
    r.series = std::move(worker->events);
    r.budget_exceeded |= worker->budget_exceeded;
    t.worker = worker->busy;
    t.reconstructions += worker->runs;
    t.max_candidates = std::max(t.max_candidates, worker->max_candidates);
  }
  // The final floorplan always comes from a run on the final map.
  if (r.frames > 0 && (worker || reconstructed_at != r.frames || !r.floorplan)) {
    reconstruct_now(true);
    if (worker && !r.floorplan) r.floorplan.reset();
  }

  t.total = since(start);
  if (r.frames == 0) {
    t = StageTimings{};
    return r;
  }
  const double named = t.input + t.mesh + t.plane_extraction + t.landmarks + t.segment_generation +
                       t.segment_selection;
  t.other = std::max(0.0, t.total - named);
  t.total = named + t.other;
  return r;
}

SessionResult run_session(const PipelineConfig& cfg, std::vector<stereo::FrameRecord> frames) {
  std::size_t i = 0;
  return run_session(cfg, [&]() -> std::optional<stereo::FrameRecord> {
    if (i == frames.size()) return std::nullopt;
    return std::move(frames[i++]);
  });
}

SessionResult run_session(const PipelineConfig& cfg, std::istream& jsonl) {
  stereo::FrameReader reader(jsonl);
  return run_session(cfg, [&] { return reader.next(); });
}

// ---------------------------------------------------------------------------
// merge

TransformMissing::TransformMissing(std::size_t map_index)
    : Error("no transform given for map " + std::to_string(map_index)) {}

MergeResult run_merge(const PipelineConfig& cfg, const std::vector<landmarks::LandmarkMap>& maps,
                      const std::map<std::size_t, geometry::RigidTransform>& transforms) {
  if (maps.size() < 2) throw InputError("merging needs at least two maps");
  for (std::size_t k = 1; k < maps.size(); ++k) {
    if (!transforms.count(k)) throw TransformMissing(k);
  }
  landmarks::LandmarkMap merged = maps[0];
  for (std::size_t k = 1; k < maps.size(); ++k) {
    merged = landmarks::merge_maps(maps[k], merged, transforms.at(k));
  }
  auto snap = merged.snapshot();
  auto model = opt::reconstruct(*snap, cfg.floorplan);
  return {std::move(merged), std::move(model)};
}

std::map<std::size_t, geometry::RigidTransform> transforms_from_json(const nlohmann::json& j) {
  std::map<std::size_t, geometry::RigidTransform> out;
  try {
    for (const auto& e : j.at("transforms")) {
      const auto k = e.at("map").get<std::size_t>();
      const auto q = e.at("q").get<std::vector<double>>();
      const auto tv = e.at("t").get<std::vector<double>>();
      if (q.size() != 4 || tv.size() != 3) throw InputError("transform needs q[4] and t[3]");
      const Eigen::Quaterniond quat(q[0], q[1], q[2], q[3]);
      if (std::abs(quat.norm() - 1.0) > 1e-6) throw InputError("transform quaternion is not unit length");
      if (!out.emplace(k, geometry::RigidTransform::from_quaternion(quat, {tv[0], tv[1], tv[2]})).second) {
        throw InputError("duplicate transform for map " + std::to_string(k));
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("transforms: ") + e.what());
  }
  return out;
}

}  // namespace floorplan::pipeline
