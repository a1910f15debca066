#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "floorplan/blp_solver.hpp"
#include "floorplan/geometry.hpp"
#include "floorplan/landmark_manager.hpp"

namespace floorplan::opt {

using geometry::Point2;
using geometry::Segment2;

struct FloorplanConfig {
  double vertical_tol_deg = 10.0;
  double min_extent = 0.2;        ///< meters; shorter projected segments are dropped
  double line_gate = 0.05;        ///< support farther than this from the projected line is ignored
  double split_gap = 0.5;         ///< support gaps wider than this split a wall segment
  std::size_t max_support_2d = 2000;
  double theta_r_deg = 10.0;
  double close_gate = 0.06;       ///< "sufficiently close" for regularization
  double extension_min = 1.0;     ///< per-end extension is max(extension_min,
  double extension_frac = 0.2;    ///< extension_frac * length)
  double bbox_inflate = 0.1;
  double snap_tol = 0.05;         ///< collinear extended ends this close to another end are merged
  double lambda_f = 0.4;
  double lambda_c = 0.4;
  double lambda_m = 0.2;
  double eps_f = 0.0;             ///< <= 0: average candidate-support distance
  double eps_c = 0.0;             ///< <= 0: eps_c_factor * density
  double eps_c_factor = 10.0;
  int density_k = 10;
  double collinear_tol_deg = 5.0;
  bool use_trajectory = true;
  bool sharp_per_pair = false;    ///< count every non-collinear selected pair instead of vertices
  double time_budget_s = 10.0;
  int iis_max_candidates = 30;
};

struct WallSegment2D {
  Segment2 seg;
  std::vector<Point2> support2d;
  int source_landmark{-1};
};

struct CandidateSegment {
  Segment2 seg;
  std::vector<Point2> support2d;
  std::array<int, 2> endpoints{-1, -1};
  bool crossed_by_trajectory{false};
};

struct IntersectionVertex {
  int id{0};
  Point2 position;
  std::vector<int> incident;  ///< candidate indices, ascending
};

struct Arrangement {
  std::vector<CandidateSegment> candidates;
  std::vector<IntersectionVertex> vertices;
};

using Polyline = std::vector<Point2>;

class DegenerateExtent : public Error {
 public:
  explicit DegenerateExtent(double span);
};

/// Reported (not thrown) when a vertex has more than four crossed candidates.
struct InfeasibleVertex {
  int vertex;
  int crossed;
};

class Infeasible : public Error {
 public:
  Infeasible(std::string msg, std::vector<std::string> conflicting_rows);
  std::vector<std::string> conflicting_rows;  ///< irreducible subset, empty when not computed
};

/// Valid landmarks whose normal lies within vertical_tol of horizontal.
[[nodiscard]] std::vector<landmarks::PlaneLandmark> select_wall_landmarks(
    const landmarks::MapSnapshot& snapshot, double vertical_tol_deg);

/// Projects a wall landmark to the ground. Throws DegenerateExtent.
[[nodiscard]] WallSegment2D project_and_fit(const landmarks::PlaneLandmark& lm,
                                            const FloorplanConfig& cfg);

/// Splits a segment where consecutive projected support points are more than
/// `gap` apart. Pieces shorter than min_extent are dropped.
[[nodiscard]] std::vector<WallSegment2D> split_at_gaps(const WallSegment2D& s, double gap,
                                                       double min_extent);

/// Pairwise merging of near-parallel segments sharing enough close support,
/// to a fixed point, visiting pairs in lexicographic order.
[[nodiscard]] std::vector<WallSegment2D> regularize(std::vector<WallSegment2D> segments,
                                                    const FloorplanConfig& cfg);

/// Total least-squares line through the points, as a segment spanning their projections.
[[nodiscard]] Segment2 fit_segment(std::span<const Point2> pts);

/// Extends, intersects and splits the segments into atomic candidates.
[[nodiscard]] Arrangement build_arrangement(const std::vector<WallSegment2D>& segments,
                                            const std::vector<Polyline>& trajectory,
                                            const FloorplanConfig& cfg);

/// Per-candidate fitting score f(c).
[[nodiscard]] double fitting_score(const CandidateSegment& c, double eps_f);

/// Length of c covered by consecutive support projections closer than eps_c.
[[nodiscard]] double covered_length(const CandidateSegment& c, double eps_c);

/// Average distance between candidates and their own support points.
[[nodiscard]] double average_support_distance(const Arrangement& arr);

/// Average over points of the mean distance to their k nearest neighbours.
[[nodiscard]] double point_density(std::span<const Point2> pts, int k);

/// Whether some pair of selected incident candidates at v is non-collinear.
[[nodiscard]] bool is_sharp(const Arrangement& arr, int v, std::span<const std::uint8_t> selected,
                            double collinear_tol_deg);

struct Energies {
  double fitting{1.0};
  double coverage{0.0};
  double complexity{0.0};
};

struct SelectionProblem {
  Arrangement arrangement;
  double eps_f{0.0};
  double eps_c{0.0};
  double total_support{0.0};          ///< |P|
  std::vector<double> fit;            ///< f(c_i)
  std::vector<double> uncovered;      ///< 1 - len_cov / len
  blp::BinaryProgram program;         ///< x_i is variable i
  double constant{0.0};               ///< objective offset not carried by the program
  int complexity_norm{0};             ///< M, or the pair count with sharp_per_pair
  std::vector<InfeasibleVertex> warnings;
  FloorplanConfig cfg;

  // Auxiliary variable layout.
  struct PairVar {
    int y, i, j, vertex;
  };
  std::vector<int> degree_var;   ///< z per vertex, -1 when the vertex has no indicator
  std::vector<int> sharp_var;    ///< s per vertex, -1 when absent
  std::vector<PairVar> pair_vars;
};

[[nodiscard]] SelectionProblem build_problem(Arrangement arr, const FloorplanConfig& cfg);

/// Energy terms recomputed from their definitions for a candidate selection.
[[nodiscard]] Energies evaluate_energies(const SelectionProblem& prob,
                                         std::span<const std::uint8_t> selected);

/// Full program assignment for a candidate selection: each auxiliary takes the
/// value its definition implies.
[[nodiscard]] std::vector<std::uint8_t> complete_assignment(const SelectionProblem& prob,
                                                            std::span<const std::uint8_t> selected);

[[nodiscard]] double weighted_energy(const Energies& e, const FloorplanConfig& cfg);

struct FloorplanModel {
  std::vector<Point2> vertices;
  std::vector<std::array<int, 2>> walls;
  std::vector<int> selected;            ///< candidate indices
  std::vector<Segment2> openings;       ///< candidates excluded by the trajectory
  std::vector<Polyline> trajectory;
  std::vector<Point2> support;          ///< subsampled support for rendering
  Energies energies;
  double objective{0.0};
  bool optimal{true};
  double gap{0.0};
  long nodes_explored{0};
  std::uint64_t epoch{0};

  [[nodiscard]] std::vector<Segment2> wall_segments() const;
};

/// Solves the selection problem. Throws Infeasible (with an irreducible row
/// subset for small instances). When the time budget runs out the incumbent
/// is returned with optimal = false; with no incumbent blp::BudgetExceeded
/// propagates.
[[nodiscard]] FloorplanModel assemble_and_solve(const SelectionProblem& prob);

struct ReconstructionTimings {
  double generation_s{0.0};
  double selection_s{0.0};
  std::size_t candidates{0};
};

/// Keyframe positions of each session as ground-plane polylines.
[[nodiscard]] std::vector<Polyline> trajectory_polylines(
    const std::vector<landmarks::TrajectoryPose>& poses);

/// Wall segments from a snapshot, before the arrangement.
[[nodiscard]] std::vector<WallSegment2D> wall_segments(const landmarks::MapSnapshot& snap,
                                                       const FloorplanConfig& cfg);

/// Snapshot to floorplan.
[[nodiscard]] FloorplanModel reconstruct(const landmarks::MapSnapshot& snap,
                                         const FloorplanConfig& cfg,
                                         ReconstructionTimings* timings = nullptr);

[[nodiscard]] nlohmann::json floorplan_to_json(const FloorplanModel& m);
[[nodiscard]] FloorplanModel floorplan_from_json(const nlohmann::json& j);
[[nodiscard]] std::string render_svg(const FloorplanModel& m);

}  // namespace floorplan::opt
