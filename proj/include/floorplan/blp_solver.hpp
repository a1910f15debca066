#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "floorplan/errors.hpp"

namespace floorplan::blp {

enum class Relation { kLe, kEq, kGe };

struct Term {
  int var;
  double coef;
};

struct Row {
  std::vector<Term> terms;
  Relation rel = Relation::kLe;
  double rhs = 0.0;
  std::string name;  ///< optional; used by the LP dump
};

/// min objective.x subject to rows, x in {0,1}^n.
struct BinaryProgram {
  int n = 0;
  std::vector<double> objective;
  std::vector<Row> rows;
  std::vector<std::string> var_names;  ///< optional, n entries when present

  int add_var(double cost, std::string name = {});
  int add_row(std::vector<Term> terms, Relation rel, double rhs, std::string name = {});
};

enum class Status { kOptimal, kInfeasible };

struct Solution {
  std::vector<std::uint8_t> assignment;
  double objective = 0.0;
  Status status = Status::kInfeasible;
  long nodes_explored = 0;
  double root_bound = 0.0;  ///< lower bound proven at the root
};

struct Feasibility {
  bool feasible = true;
  std::vector<int> violated_rows;
};

/// Thrown when the time budget runs out. Carries the best incumbent found (if
/// any) and the remaining optimality gap.
class BudgetExceeded : public Error {
 public:
  BudgetExceeded(Solution incumbent, bool has_incumbent, double gap);
  Solution incumbent;
  bool has_incumbent;
  double gap;
};

/// Row activity tolerance used by check_feasible.
inline constexpr double kFeasTol = 1e-9;

[[nodiscard]] Feasibility check_feasible(const BinaryProgram& p, std::span<const std::uint8_t> x);

/// objective.x summed in index order.
[[nodiscard]] double evaluate(const BinaryProgram& p, std::span<const std::uint8_t> x);

/// Exact branch-and-bound. Node bounds come from the continuous relaxation
/// (bounded-variable simplex), turned into a certified Lagrangian bound from
/// its duals, so an inaccurate relaxation only costs nodes. Depth-first;
/// branching on the most fractional relaxation variable, lowest index first.
[[nodiscard]] Solution solve(const BinaryProgram& p, double time_budget_s = 10.0);

/// Continuous relaxation result, exposed for tests and diagnostics.
struct LpRelaxation {
  bool feasible = false;
  bool converged = false;
  double objective = 0.0;  ///< primal value of the returned point
  double bound = 0.0;      ///< certified lower bound on the relaxation
  std::vector<double> x;
  /// Costs net of the bound's multipliers: flipping x_j away from its
  /// bound-minimizing value raises the bound by |reduced_costs[j]|.
  std::vector<double> reduced_costs;
};

[[nodiscard]] LpRelaxation solve_relaxation(const BinaryProgram& p);

/// Plain-text LP dump (see docs/lp_format.md) and its reader.
[[nodiscard]] std::string to_lp_string(const BinaryProgram& p);
[[nodiscard]] BinaryProgram parse_lp(std::string_view text);

}  // namespace floorplan::blp
