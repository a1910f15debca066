#include "floorplan/landmark_manager.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>
#include <unordered_set>

#include "floorplan/plane_extraction.hpp"

namespace floorplan::landmarks {

using geometry::deg2rad;
using geometry::normal_angle;
using geometry::Vec3;

namespace {

struct PointHash {
  std::size_t operator()(const Point3& p) const {
    std::size_t h = 0;
    for (int i = 0; i < 3; ++i) {
      h ^= std::hash<double>{}(p[i]) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return h;
  }
};

struct PointEq {
  bool operator()(const Point3& a, const Point3& b) const { return a == b; }
};

Point3 centroid(std::span<const Point3> pts) {
  Point3 c = Point3::Zero();
  for (const auto& p : pts) c += p;
  return pts.empty() ? c : Point3(c / static_cast<double>(pts.size()));
}

}  // namespace

UnknownLandmark::UnknownLandmark(int id) : Error("unknown landmark " + std::to_string(id)) {}

LandmarkMap::LandmarkMap(LandmarkConfig cfg, int session) : cfg_(cfg), session_(session) {}

const PlaneLandmark& LandmarkMap::landmark(int id) const {
  const auto it = landmarks_.find(id);
  if (it == landmarks_.end()) throw UnknownLandmark(id);
  return it->second;
}

std::size_t LandmarkMap::valid_count() const {
  return static_cast<std::size_t>(std::count_if(landmarks_.begin(), landmarks_.end(), [](const auto& kv) {
    return kv.second.state == LandmarkState::kValid;
  }));
}

double LandmarkMap::min_distance(std::span<const Point3> pts, const PlaneCartesian& pl) const {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& p : pts) {
    best = std::min(best, std::abs(pl.signed_distance(p)));
    if (best < cfg_.d_m * 1e-3) break;
  }
  return best;
}

std::optional<int> LandmarkMap::match(const PlaneCartesian& plane,
                                      std::span<const Point3> support) const {
  const double max_angle = deg2rad(cfg_.theta_m_deg);
  std::optional<int> best;
  double best_angle = std::numeric_limits<double>::infinity();
  for (const auto& [id, lm] : landmarks_) {
    const double ang = normal_angle(plane.n, lm.plane.n);
    if (ang >= max_angle || ang >= best_angle) continue;
    if (min_distance(support, lm.plane) >= cfg_.d_m) continue;
    best = id;
    best_angle = ang;
  }
  return best;
}

void LandmarkMap::update_state(PlaneLandmark& lm) const {
  if (lm.state == LandmarkState::kInvalid && lm.frames_observed > cfg_.promote_frames &&
      static_cast<int>(lm.keyframes_observed.size()) > cfg_.promote_keyframes) {
    lm.state = LandmarkState::kValid;
  }
}

void LandmarkMap::cap_support(PlaneLandmark& lm) {
  if (lm.support.size() <= cfg_.max_support) return;
  std::mt19937_64 rng(cfg_.seed ^ (static_cast<std::uint64_t>(lm.id) * 0x9e3779b97f4a7c15ULL) ^
                      lm.support.size());
  std::vector<Point3> kept;
  kept.reserve(cfg_.max_support);
  std::sample(lm.support.begin(), lm.support.end(), std::back_inserter(kept), cfg_.max_support, rng);
  lm.support = std::move(kept);
}

// Re-estimates the plane from the aggregated support, keeping its inliers.
// When the new points drag the inlier ratio below the gate they are
// discarded again.
void LandmarkMap::refit(PlaneLandmark& lm, std::size_t previous_count) {
  if (lm.support.size() >= 3) {
    const std::uint64_t seed =
        cfg_.seed + static_cast<std::uint64_t>(lm.id) * 7919 + lm.keyframes_observed.size();
    const auto fit =
        extraction::ransac_plane(lm.support, cfg_.dist_gate, cfg_.ransac_iterations, seed);
    if (fit.inlier_ratio < cfg_.theta_i) {
      outliers_removed_ += lm.support.size() - std::min(previous_count, lm.support.size());
      lm.support.resize(std::min(previous_count, lm.support.size()));
    } else {
      outliers_removed_ += lm.support.size() - fit.inliers.size();
      std::vector<Point3> kept;
      kept.reserve(fit.inliers.size());
      for (int i : fit.inliers) kept.push_back(lm.support[i]);
      lm.support = std::move(kept);
      lm.plane = fit.plane.canonical();
    }
  }
  cap_support(lm);
}

std::optional<int> LandmarkMap::observe(const WorldFeature& f, std::int64_t frame, bool keyframe) {
  const FrameKey key = frame_key(session_, frame);
  const auto hit = match(f.plane, f.support);
  if (!hit) {
    if (!keyframe) return std::nullopt;
    PlaneLandmark lm;
    lm.plane = f.plane.canonical();
    lm.support = f.support;
    lm.frames_observed = 1;
    lm.keyframes_observed.insert(key);
    lm.observations.push_back({key, true, 0.0});
    const int id = insert(std::move(lm));
    cap_support(landmarks_.at(id));
    return id;
  }
  PlaneLandmark& lm = landmarks_.at(*hit);
  const bool repeat = !lm.observations.empty() && lm.observations.back().frame == key;
  const double residual = std::abs(lm.plane.signed_distance(centroid(f.support)));
  if (!repeat) {
    ++lm.frames_observed;
    lm.observations.push_back({key, keyframe, residual});
  } else {
    lm.observations.back().residual = std::max(lm.observations.back().residual, residual);
  }
  if (keyframe) {
    lm.keyframes_observed.insert(key);
    lm.observations.back().keyframe = true;
    const std::size_t before = lm.support.size();
    lm.support.insert(lm.support.end(), f.support.begin(), f.support.end());
    refit(lm, before);
  }
  update_state(lm);
  return *hit;
}

void LandmarkMap::demote(int id) {
  const auto it = landmarks_.find(id);
  if (it == landmarks_.end()) throw UnknownLandmark(id);
  if (it->second.keyframes_observed.size() <= 1) it->second.state = LandmarkState::kInvalid;
}

int LandmarkMap::prune_observations() {
  if (cfg_.prune_gate <= 0.0) return 0;
  int dropped = 0;
  for (auto& [id, lm] : landmarks_) {
    std::vector<Observation> kept;
    for (const auto& o : lm.observations) {
      if (o.residual <= cfg_.prune_gate) {
        kept.push_back(o);
        continue;
      }
      ++dropped;
      --lm.frames_observed;
      if (o.keyframe) lm.keyframes_observed.erase(o.frame);
    }
    lm.observations = std::move(kept);
    demote(id);
  }
  return dropped;
}

bool LandmarkMap::mergeable(const PlaneLandmark& a, const PlaneLandmark& b) const {
  if (normal_angle(a.plane.n, b.plane.n) >= deg2rad(cfg_.theta_m_deg)) return false;
  return min_distance(a.support, b.plane) < cfg_.d_m && min_distance(b.support, a.plane) < cfg_.d_m;
}

void LandmarkMap::absorb(int winner, int loser) {
  if (winner == loser) throw PreconditionNotMet("cannot merge a landmark with itself");
  auto wit = landmarks_.find(winner);
  auto lit = landmarks_.find(loser);
  if (wit == landmarks_.end()) throw UnknownLandmark(winner);
  if (lit == landmarks_.end()) throw UnknownLandmark(loser);
  PlaneLandmark& w = wit->second;
  PlaneLandmark& l = lit->second;

  std::unordered_set<Point3, PointHash, PointEq> present(w.support.begin(), w.support.end());
  const std::size_t before = w.support.size();
  for (const auto& p : l.support) {
    if (present.insert(p).second) w.support.push_back(p);
  }
  w.frames_observed += l.frames_observed;
  w.keyframes_observed.insert(l.keyframes_observed.begin(), l.keyframes_observed.end());
  w.observations.insert(w.observations.end(), l.observations.begin(), l.observations.end());
  std::stable_sort(w.observations.begin(), w.observations.end(),
                   [](const Observation& x, const Observation& y) { return x.frame < y.frame; });
  if (l.state == LandmarkState::kValid) w.state = LandmarkState::kValid;
  landmarks_.erase(lit);
  if (w.support.size() > before) refit(w, before);
  update_state(w);
}

int LandmarkMap::merge_landmarks(int a, int b) {
  const PlaneLandmark& la = landmark(a);
  const PlaneLandmark& lb = landmark(b);
  if (a == b || !mergeable(la, lb)) {
    throw PreconditionNotMet("landmarks " + std::to_string(a) + " and " + std::to_string(b) +
                             " do not satisfy the merge precondition");
  }
  const auto ka = la.keyframes_observed.size();
  const auto kb = lb.keyframes_observed.size();
  const bool a_wins = ka != kb ? ka > kb : a < b;
  const int winner = a_wins ? a : b;
  absorb(winner, a_wins ? b : a);
  return winner;
}

int LandmarkMap::merge_pass() {
  int merges = 0;
  bool changed = true;
  while (changed) {
    changed = false;
    for (auto it = landmarks_.begin(); it != landmarks_.end() && !changed; ++it) {
      for (auto jt = std::next(it); jt != landmarks_.end(); ++jt) {
        if (!mergeable(it->second, jt->second)) continue;
        merge_landmarks(it->first, jt->first);
        ++merges;
        changed = true;
        break;
      }
    }
  }
  return merges;
}

std::shared_ptr<const MapSnapshot> LandmarkMap::snapshot() {
  auto snap = std::make_shared<MapSnapshot>();
  for (const auto& [id, lm] : landmarks_) {
    if (lm.state == LandmarkState::kValid) snap->landmarks.push_back(lm);
  }
  snap->trajectory = trajectory_;
  snap->epoch = ++epoch_;
  return snap;
}

int LandmarkMap::insert(PlaneLandmark lm) {
  lm.id = next_id_++;
  const int id = lm.id;
  landmarks_.emplace(id, std::move(lm));
  return id;
}

LandmarkMap LandmarkMap::restore(LandmarkConfig cfg, int session, std::map<int, PlaneLandmark> lms,
                                 std::vector<TrajectoryPose> trajectory, int next_id,
                                 std::uint64_t epoch) {
  LandmarkMap m(cfg, session);
  m.landmarks_ = std::move(lms);
  m.trajectory_ = std::move(trajectory);
  m.next_id_ = next_id;
  for (const auto& [id, lm] : m.landmarks_) m.next_id_ = std::max(m.next_id_, id + 1);
  m.epoch_ = epoch;
  return m;
}

LandmarkMap merge_maps(const LandmarkMap& current, const LandmarkMap& matching,
                       const RigidTransform& T_cm) {
  LandmarkMap out = matching;
  const std::set<int> original = [&] {
    std::set<int> ids;
    for (const auto& [id, lm] : matching.landmarks()) ids.insert(id);
    return ids;
  }();
  const double max_angle = deg2rad(matching.config().theta_m_deg);

  for (const auto& [cid, lm] : current.landmarks()) {
    PlaneLandmark moved = lm;
    moved.plane = geometry::transform_plane(lm.plane, T_cm).canonical();
    for (auto& p : moved.support) p = T_cm.apply(p);

    // Duplicate of a matching-map landmark: the matching landmark wins.
    std::optional<int> dup;
    double dup_angle = std::numeric_limits<double>::infinity();
    for (int mid : original) {
      const auto& target = out.landmarks().find(mid);
      if (target == out.landmarks().end()) continue;
      const double ang = normal_angle(moved.plane.n, target->second.plane.n);
      if (ang >= max_angle || ang >= dup_angle) continue;
      if (!out.mergeable(moved, target->second)) continue;
      dup = mid;
      dup_angle = ang;
    }
    const int nid = out.insert(std::move(moved));
    if (dup) out.absorb(*dup, nid);
  }
  for (const auto& pose : current.trajectory()) {
    TrajectoryPose t = pose;
    t.T_wc = T_cm.compose(pose.T_wc);
    out.add_pose(t);
  }
  out.merge_pass();
  return out;
}

namespace {

nlohmann::json plane_json(const PlaneCartesian& pl) {
  return {{"n", {pl.n.x(), pl.n.y(), pl.n.z()}}, {"d", pl.d}};
}

PlaneCartesian plane_from(const nlohmann::json& j) {
  PlaneCartesian pl;
  const auto& n = j.at("n");
  pl.n = Vec3(n.at(0).get<double>(), n.at(1).get<double>(), n.at(2).get<double>());
  pl.d = j.at("d").get<double>();
  return pl;
}

// Rotation stored as a row-major matrix so that maps round-trip exactly.
nlohmann::json pose_json(const TrajectoryPose& p) {
  const auto& R = p.T_wc.rotation;
  const auto& t = p.T_wc.translation;
  nlohmann::json r = nlohmann::json::array();
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) r.push_back(R(i, k));
  return {{"session", p.session},
          {"frame", p.frame},
          {"keyframe", p.keyframe},
          {"R", std::move(r)},
          {"t", {t.x(), t.y(), t.z()}}};
}

TrajectoryPose pose_from(const nlohmann::json& j) {
  TrajectoryPose p;
  p.session = j.at("session").get<int>();
  p.frame = j.at("frame").get<std::int64_t>();
  p.keyframe = j.at("keyframe").get<bool>();
  const auto& r = j.at("R");
  for (int i = 0; i < 3; ++i)
    for (int k = 0; k < 3; ++k) p.T_wc.rotation(i, k) = r.at(3 * i + k).get<double>();
  const auto& t = j.at("t");
  p.T_wc.translation = Vec3(t.at(0).get<double>(), t.at(1).get<double>(), t.at(2).get<double>());
  if (!p.T_wc.valid()) throw Error("trajectory pose rotation is not a rotation");
  return p;
}

}  // namespace

nlohmann::json map_to_json(const LandmarkMap& map) {
  nlohmann::json lms = nlohmann::json::array();
  for (const auto& [id, lm] : map.landmarks()) {
    nlohmann::json support = nlohmann::json::array();
    for (const auto& p : lm.support) support.push_back({p.x(), p.y(), p.z()});
    nlohmann::json obs = nlohmann::json::array();
    for (const auto& o : lm.observations) obs.push_back({o.frame, o.keyframe, o.residual});
    lms.push_back({{"id", id},
                   {"plane", plane_json(lm.plane)},
                   {"state", lm.state == LandmarkState::kValid ? "valid" : "invalid"},
                   {"frames_observed", lm.frames_observed},
                   {"keyframes_observed", lm.keyframes_observed},
                   {"observations", std::move(obs)},
                   {"support", std::move(support)}});
  }
  nlohmann::json traj = nlohmann::json::array();
  for (const auto& p : map.trajectory()) traj.push_back(pose_json(p));
  return {{"schema_version", kMapSchemaVersion},
          {"session", map.session()},
          {"next_id", map.next_id()},
          {"epoch", map.epoch()},
          {"landmarks", std::move(lms)},
          {"trajectory", std::move(traj)}};
}

LandmarkMap map_from_json(const nlohmann::json& j, const LandmarkConfig& cfg) {
  const int version = j.at("schema_version").get<int>();
  if (version != kMapSchemaVersion) {
    throw SchemaVersionMismatch("map schema_version " + std::to_string(version) + ", expected " +
                                std::to_string(kMapSchemaVersion));
  }
  std::map<int, PlaneLandmark> lms;
  for (const auto& jl : j.at("landmarks")) {
    PlaneLandmark lm;
    lm.id = jl.at("id").get<int>();
    lm.plane = plane_from(jl.at("plane"));
    const auto state = jl.at("state").get<std::string>();
    if (state != "valid" && state != "invalid") throw Error("bad landmark state '" + state + "'");
    lm.state = state == "valid" ? LandmarkState::kValid : LandmarkState::kInvalid;
    lm.frames_observed = jl.at("frames_observed").get<int>();
    lm.keyframes_observed = jl.at("keyframes_observed").get<std::set<FrameKey>>();
    for (const auto& o : jl.at("observations")) {
      lm.observations.push_back({o.at(0).get<FrameKey>(), o.at(1).get<bool>(), o.at(2).get<double>()});
    }
    for (const auto& p : jl.at("support")) {
      lm.support.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>());
    }
    lms.emplace(lm.id, std::move(lm));
  }
  std::vector<TrajectoryPose> traj;
  for (const auto& p : j.at("trajectory")) traj.push_back(pose_from(p));
  return LandmarkMap::restore(cfg, j.at("session").get<int>(), std::move(lms), std::move(traj),
                              j.at("next_id").get<int>(), j.at("epoch").get<std::uint64_t>());
}

}  // namespace floorplan::landmarks
