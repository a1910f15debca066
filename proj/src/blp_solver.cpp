#include "floorplan/blp_solver.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>

namespace floorplan::blp {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kPivotTol = 1e-9;
constexpr double kCostTol = 1e-10;
constexpr double kIntTol = 1e-6;
constexpr double kPruneTol = 1e-9;

bool row_holds(Relation rel, double activity, double rhs) {
  switch (rel) {
    case Relation::kLe:
      return activity <= rhs + kFeasTol;
    case Relation::kGe:
      return activity >= rhs - kFeasTol;
    case Relation::kEq:
      return std::abs(activity - rhs) <= kFeasTol;
  }
  return false;
}

// Bounded-variable primal simplex on a dense tableau. Structural columns live
// in [0, 1]; every row owns one unit column (its slack, or an artificial) from
// which the row dual is read back.
class BoundedSimplex {
 public:
  BoundedSimplex(int n, const std::vector<double>& cost, const std::vector<Row>& rows)
      : n_(n), m_(static_cast<int>(rows.size())), cost_(cost), rows_(rows) {}

  LpRelaxation run() {
    build();
    LpRelaxation out;
    if (!iterate(phase_cost(true))) {
      out.bound = lagrangian_bound();
      return finish(out, false);
    }
    double infeas = 0.0;
    for (int i = 0; i < m_; ++i) {
      if (is_artificial(head_[i])) infeas += beta_[i];
    }
    if (infeas > 1e-7) {
      out.feasible = false;
      out.converged = true;
      return out;
    }
    for (int j = first_art_; j < cols_; ++j) ub_[j] = 0.0;
    out.feasible = true;
    out.converged = iterate(phase_cost(false));
    warm_ = out.converged;
    out.bound = lagrangian_bound();
    return finish(out, true);
  }

  // Re-solves from the last optimal basis with structurals fixed per `fix`
  // (-1 free). Only bounds change, so the basis stays dual feasible once
  // each free nonbasic column sits at the bound its reduced cost prefers; a
  // bounded dual simplex then restores primal feasibility. converged = false
  // asks the caller for a cold solve (no warm basis, apparent infeasibility,
  // or the iteration cap).
  LpRelaxation resolve(const std::vector<std::int8_t>& fix) {
    LpRelaxation out;
    if (!warm_) {
      const auto cold = run();
      if (!cold.feasible || !cold.converged) return out;
    }
    warm_ = false;
    for (int j = 0; j < n_; ++j) {
      const double old = at_upper_[j] ? ub_[j] : lb_[j];
      lb_[j] = fix[j] == 1 ? 1.0 : 0.0;
      ub_[j] = fix[j] == 0 ? 0.0 : 1.0;
      if (basic_row_[j] >= 0) continue;
      at_upper_[j] = lb_[j] < ub_[j] && d_[j] < 0.0;
      const double delta = (at_upper_[j] ? ub_[j] : lb_[j]) - old;
      if (delta == 0.0) continue;
      for (int i = 0; i < m_; ++i) beta_[i] -= at(i, j) * delta;
    }
    if (!dual_loop() || !primal_loop()) return out;
    warm_ = true;
    out.converged = true;
    out.bound = lagrangian_bound();
    return finish(out, true);
  }

 private:
  bool is_artificial(int j) const { return j >= first_art_; }

  void build() {
    // Count slack columns first so artificials come last.
    std::vector<int> slack_col(m_, -1);
    int col = n_;
    for (int i = 0; i < m_; ++i) {
      if (rows_[i].rel != Relation::kEq) slack_col[i] = col++;
    }
    first_art_ = col;
    // Residuals with every structural at its lower bound 0.
    std::vector<int> art_col(m_, -1);
    std::vector<double> art_sign(m_, 1.0);
    for (int i = 0; i < m_; ++i) {
      const double r = rows_[i].rhs;
      const double s = rows_[i].rel == Relation::kLe ? 1.0 : -1.0;
      const bool slack_ok = slack_col[i] >= 0 && s * r >= 0.0;
      if (!slack_ok) {
        art_col[i] = col++;
        art_sign[i] = r >= 0.0 ? 1.0 : -1.0;
      }
    }
    cols_ = col;
    T_.assign(static_cast<std::size_t>(m_) * cols_, 0.0);
    lb_.assign(cols_, 0.0);
    ub_.assign(cols_, kInf);
    for (int j = 0; j < n_; ++j) ub_[j] = 1.0;
    at_upper_.assign(cols_, 0);
    basic_row_.assign(cols_, -1);
    head_.assign(m_, -1);
    beta_.assign(m_, 0.0);
    unit_col_.assign(m_, -1);
    unit_sign_.assign(m_, 1.0);
    for (int i = 0; i < m_; ++i) {
      for (const auto& t : rows_[i].terms) at(i, t.var) += t.coef;
      if (slack_col[i] >= 0) {
        const double s = rows_[i].rel == Relation::kLe ? 1.0 : -1.0;
        at(i, slack_col[i]) = s;
        unit_col_[i] = slack_col[i];
        unit_sign_[i] = s;
      }
      if (art_col[i] >= 0) {
        at(i, art_col[i]) = art_sign[i];
        if (unit_col_[i] < 0) {
          unit_col_[i] = art_col[i];
          unit_sign_[i] = art_sign[i];
        }
      }
      const int basic = art_col[i] >= 0 ? art_col[i] : slack_col[i];
      // Normalise the row so the basic column has coefficient +1.
      const double piv = at(i, basic);
      if (piv != 1.0) {
        for (int j = 0; j < cols_; ++j) at(i, j) /= piv;
      }
      head_[i] = basic;
      basic_row_[basic] = i;
      beta_[i] = rows_[i].rhs / piv;
    }
  }

  std::vector<double> phase_cost(bool phase1) const {
    std::vector<double> c(cols_, 0.0);
    if (phase1) {
      for (int j = first_art_; j < cols_; ++j) c[j] = 1.0;
    } else {
      for (int j = 0; j < n_; ++j) c[j] = cost_[j];
    }
    return c;
  }

  double& at(int i, int j) { return T_[static_cast<std::size_t>(i) * cols_ + j]; }
  double at(int i, int j) const { return T_[static_cast<std::size_t>(i) * cols_ + j]; }

  bool iterate(const std::vector<double>& c) {
    // Reduced costs d = c - c_B T.
    d_ = c;
    for (int i = 0; i < m_; ++i) {
      const double cb = c[head_[i]];
      if (cb == 0.0) continue;
      for (int j = 0; j < cols_; ++j) d_[j] -= cb * at(i, j);
    }
    return primal_loop();
  }

  bool primal_loop() {
    const long max_iter = 50L * (m_ + cols_) + 1000;
    int degenerate_streak = 0;
    for (long iter = 0; iter < max_iter; ++iter) {
      const bool bland = degenerate_streak > 50;
      int q = -1;
      double best = 0.0;
      for (int j = 0; j < cols_; ++j) {
        if (basic_row_[j] >= 0 || ub_[j] <= lb_[j]) continue;
        const double score = at_upper_[j] ? d_[j] : -d_[j];
        if (score <= kCostTol) continue;
        if (bland) {
          q = j;
          break;
        }
        if (score > best) {
          best = score;
          q = j;
        }
      }
      if (q < 0) return true;

      const double dir = at_upper_[q] ? -1.0 : 1.0;
      double theta = ub_[q] - lb_[q];
      int leave = -1;
      double leave_alpha = 0.0;
      for (int i = 0; i < m_; ++i) {
        const double alpha = dir * at(i, q);
        const int h = head_[i];
        double lim;
        if (alpha > kPivotTol) {
          lim = (beta_[i] - lb_[h]) / alpha;
        } else if (alpha < -kPivotTol && ub_[h] < kInf) {
          lim = (ub_[h] - beta_[i]) / -alpha;
        } else {
          continue;
        }
        lim = std::max(lim, 0.0);
        if (lim < theta - 1e-12) {
          theta = lim;
          leave = i;
          leave_alpha = alpha;
        } else if (leave >= 0 && lim <= theta + 1e-12 &&
                   (bland ? h < head_[leave] : std::abs(alpha) > std::abs(leave_alpha))) {
          theta = std::min(theta, lim);
          leave = i;
          leave_alpha = alpha;
        }
      }
      if (theta == kInf) return false;  // unbounded; cannot happen with bounded structurals
      degenerate_streak = theta < 1e-12 ? degenerate_streak + 1 : 0;

      for (int i = 0; i < m_; ++i) beta_[i] -= dir * at(i, q) * theta;
      if (leave < 0) {
        at_upper_[q] = !at_upper_[q];
        continue;
      }
      const int out = head_[leave];
      const double entering_value = at_upper_[q] ? ub_[q] - theta : lb_[q] + theta;
      at_upper_[out] = leave_alpha < 0.0 ? 1 : 0;
      basic_row_[out] = -1;
      head_[leave] = q;
      basic_row_[q] = leave;
      at_upper_[q] = 0;
      beta_[leave] = entering_value;
      pivot(leave, q);
    }
    return false;
  }

  bool dual_loop() {
    constexpr double kPrimalTol = 1e-9;
    const long max_iter = 10L * (m_ + cols_) + 1000;
    for (long iter = 0; iter < max_iter; ++iter) {
      int r = -1;
      double worst = kPrimalTol;
      for (int i = 0; i < m_; ++i) {
        const int h = head_[i];
        const double viol = std::max(lb_[h] - beta_[i], beta_[i] - ub_[h]);
        if (viol > worst) {
          worst = viol;
          r = i;
        }
      }
      if (r < 0) return true;
      const int h = head_[r];
      const bool raise = beta_[r] < lb_[h];
      const double target = raise ? lb_[h] : ub_[h];
      // x_h moves by -a * dx_j; pick the column that keeps every reduced
      // cost on its side longest.
      int q = -1;
      double best = kInf, best_alpha = 0.0;
      for (int j = 0; j < cols_; ++j) {
        if (basic_row_[j] >= 0 || ub_[j] <= lb_[j]) continue;
        const double a = at(r, j);
        if (std::abs(a) <= kPivotTol) continue;
        const bool up = !at_upper_[j];
        if (raise ? !((a < 0.0 && up) || (a > 0.0 && !up)) : !((a > 0.0 && up) || (a < 0.0 && !up))) continue;
        const double ratio = std::max(0.0, up ? d_[j] : -d_[j]) / std::abs(a);
        if (ratio < best - 1e-12 || (ratio <= best + 1e-12 && std::abs(a) > std::abs(best_alpha))) {
          best = std::min(best, ratio);
          q = j;
          best_alpha = a;
        }
      }
      if (q < 0) return false;  // row r certifies infeasibility; left to the cold path
      const double dx = (beta_[r] - target) / at(r, q);
      for (int i = 0; i < m_; ++i) beta_[i] -= at(i, q) * dx;
      const double entering_value = (at_upper_[q] ? ub_[q] : lb_[q]) + dx;
      at_upper_[h] = raise ? 0 : 1;
      basic_row_[h] = -1;
      head_[r] = q;
      basic_row_[q] = r;
      at_upper_[q] = 0;
      beta_[r] = entering_value;
      pivot(r, q);
    }
    return false;
  }

  void pivot(int r, int q) {
    const double piv = at(r, q);
    double* row_r = &T_[static_cast<std::size_t>(r) * cols_];
    for (int j = 0; j < cols_; ++j) row_r[j] /= piv;
    row_r[q] = 1.0;
    // The tableau stays sparse; only the pivot row's nonzeros change anything.
    nz_.clear();
    for (int j = 0; j < cols_; ++j) {
      if (row_r[j] != 0.0) nz_.push_back(j);
    }
    for (int i = 0; i < m_; ++i) {
      if (i == r) continue;
      double* row_i = &T_[static_cast<std::size_t>(i) * cols_];
      const double f = row_i[q];
      if (f == 0.0) continue;
      for (int j : nz_) row_i[j] -= f * row_r[j];
      row_i[q] = 0.0;
    }
    const double f = d_[q];
    if (f != 0.0) {
      for (int j : nz_) d_[j] -= f * row_r[j];
      d_[q] = 0.0;
    }
  }

  // Weak Lagrangian duality with the tableau's row duals, clipped to the sign
  // each relation admits; valid for any multipliers.
  double lagrangian_bound() {
    std::vector<double> y(m_, 0.0);
    for (int i = 0; i < m_; ++i) {
      double yi = -d_[unit_col_[i]] / unit_sign_[i];
      if (rows_[i].rel == Relation::kLe) yi = std::min(yi, 0.0);
      if (rows_[i].rel == Relation::kGe) yi = std::max(yi, 0.0);
      y[i] = yi;
    }
    std::vector<double> reduced(cost_.begin(), cost_.end());
    double bound = 0.0;
    for (int i = 0; i < m_; ++i) {
      if (y[i] == 0.0) continue;
      bound += y[i] * rows_[i].rhs;
      for (const auto& t : rows_[i].terms) reduced[t.var] -= y[i] * t.coef;
    }
    for (int j = 0; j < n_; ++j) bound += std::min(reduced[j] * lb_[j], reduced[j] * ub_[j]);
    reduced_ = std::move(reduced);
    return bound;
  }

  LpRelaxation finish(LpRelaxation out, bool feasible) {
    out.x.assign(n_, 0.0);
    for (int j = 0; j < n_; ++j) {
      out.x[j] = basic_row_[j] >= 0 ? std::clamp(beta_[basic_row_[j]], 0.0, 1.0)
                                    : (at_upper_[j] ? ub_[j] : lb_[j]);
    }
    out.objective = 0.0;
    for (int j = 0; j < n_; ++j) out.objective += cost_[j] * out.x[j];
    out.feasible = feasible;
    out.reduced_costs = reduced_;
    return out;
  }

  int n_;
  int m_;
  const std::vector<double>& cost_;
  const std::vector<Row>& rows_;
  int cols_ = 0;
  int first_art_ = 0;
  std::vector<double> T_;
  std::vector<double> lb_, ub_, beta_, d_;
  std::vector<std::uint8_t> at_upper_;
  std::vector<int> basic_row_, head_, unit_col_;
  std::vector<double> unit_sign_;
  std::vector<double> reduced_;
  std::vector<int> nz_;
  bool warm_ = false;
};

// Node subproblem: free variables only, fixed ones folded into the rhs.
struct Reduced {
  std::vector<int> to_orig;
  std::vector<double> cost;
  std::vector<Row> rows;
  double fixed_cost = 0.0;
  bool infeasible = false;
};

Reduced reduce(const BinaryProgram& p, const std::vector<std::int8_t>& fix) {
  Reduced r;
  std::vector<int> to_red(p.n, -1);
  for (int j = 0; j < p.n; ++j) {
    if (fix[j] < 0) {
      to_red[j] = static_cast<int>(r.to_orig.size());
      r.to_orig.push_back(j);
      r.cost.push_back(p.objective[j]);
    } else if (fix[j] == 1) {
      r.fixed_cost += p.objective[j];
    }
  }
  for (const auto& row : p.rows) {
    Row out;
    out.rel = row.rel;
    out.rhs = row.rhs;
    double lo = 0.0, hi = 0.0;
    for (const auto& t : row.terms) {
      if (fix[t.var] >= 0) {
        out.rhs -= t.coef * fix[t.var];
      } else {
        out.terms.push_back({to_red[t.var], t.coef});
        (t.coef > 0 ? hi : lo) += t.coef;
      }
    }
    if (out.terms.empty()) {
      if (!row_holds(row.rel, 0.0, out.rhs)) r.infeasible = true;
      continue;
    }
    // Rows that hold for every point of the box add nothing to the relaxation.
    if (row.rel == Relation::kLe && hi <= out.rhs + kFeasTol) continue;
    if (row.rel == Relation::kGe && lo >= out.rhs - kFeasTol) continue;
    r.rows.push_back(std::move(out));
  }
  return r;
}

class Propagator {
 public:
  explicit Propagator(const BinaryProgram& p) : p_(p), var_rows_(p.n) {
    for (std::size_t i = 0; i < p.rows.size(); ++i) {
      for (const auto& t : p.rows[i].terms) var_rows_[t.var].push_back(static_cast<int>(i));
    }
  }

  // Fixes forced binaries; false when some row cannot be satisfied.
  bool run(std::vector<std::int8_t>& fix) const {
    std::vector<int> work(p_.rows.size());
    std::iota(work.begin(), work.end(), 0);
    std::vector<std::uint8_t> queued(p_.rows.size(), 1);
    for (std::size_t head = 0; head < work.size(); ++head) {
      const int ri = work[head];
      queued[ri] = 0;
      const Row& row = p_.rows[ri];
      double fixed = 0.0, lo = 0.0, hi = 0.0;
      for (const auto& t : row.terms) {
        if (fix[t.var] >= 0) {
          fixed += t.coef * fix[t.var];
        } else {
          (t.coef > 0 ? hi : lo) += t.coef;
        }
      }
      lo += fixed;
      hi += fixed;
      const bool upper = row.rel != Relation::kGe;
      const bool lower = row.rel != Relation::kLe;
      if (upper && lo > row.rhs + kFeasTol) return false;
      if (lower && hi < row.rhs - kFeasTol) return false;
      for (const auto& t : row.terms) {
        if (fix[t.var] >= 0) continue;
        const double a = std::abs(t.coef);
        std::int8_t forced = -1;
        if (upper && lo + a > row.rhs + kFeasTol) forced = t.coef > 0 ? 0 : 1;
        if (lower && hi - a < row.rhs - kFeasTol) {
          const std::int8_t f = t.coef > 0 ? 1 : 0;
          if (forced >= 0 && forced != f) return false;
          forced = f;
        }
        if (forced < 0) continue;
        fix[t.var] = forced;
        lo += t.coef * forced - std::min(0.0, t.coef);
        hi += t.coef * forced - std::max(0.0, t.coef);
        for (int other : var_rows_[t.var]) {
          if (!queued[other]) {
            queued[other] = 1;
            work.push_back(other);
          }
        }
      }
      if (upper && lo > row.rhs + kFeasTol) return false;
      if (lower && hi < row.rhs - kFeasTol) return false;
    }
    return true;
  }

 private:
  const BinaryProgram& p_;
  std::vector<std::vector<int>> var_rows_;
};

}  // namespace

int BinaryProgram::add_var(double cost, std::string name) {
  objective.push_back(cost);
  if (!name.empty() || !var_names.empty()) {
    var_names.resize(n);
    var_names.push_back(std::move(name));
  }
  return n++;
}

int BinaryProgram::add_row(std::vector<Term> terms, Relation rel, double rhs, std::string name) {
  rows.push_back({std::move(terms), rel, rhs, std::move(name)});
  return static_cast<int>(rows.size()) - 1;
}

BudgetExceeded::BudgetExceeded(Solution inc, bool has, double g)
    : Error("solver time budget exceeded"), incumbent(std::move(inc)), has_incumbent(has), gap(g) {}

Feasibility check_feasible(const BinaryProgram& p, std::span<const std::uint8_t> x) {
  Feasibility f;
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    double activity = 0.0;
    for (const auto& t : p.rows[i].terms) activity += t.coef * x[t.var];
    if (!row_holds(p.rows[i].rel, activity, p.rows[i].rhs)) {
      f.feasible = false;
      f.violated_rows.push_back(static_cast<int>(i));
    }
  }
  return f;
}

double evaluate(const BinaryProgram& p, std::span<const std::uint8_t> x) {
  double v = 0.0;
  for (int j = 0; j < p.n; ++j) v += x[j] ? p.objective[j] : 0.0;
  return v;
}

LpRelaxation solve_relaxation(const BinaryProgram& p) {
  BoundedSimplex lp(p.n, p.objective, p.rows);
  return lp.run();
}

Solution solve(const BinaryProgram& p, double time_budget_s) {
  using Clock = std::chrono::steady_clock;
  const auto deadline =
      Clock::now() + std::chrono::duration_cast<Clock::duration>(
                         std::chrono::duration<double>(std::max(time_budget_s, 0.0)));

  Solution best;
  best.status = Status::kInfeasible;
  best.objective = kInf;
  bool have = false;
  const Propagator propagator(p);

  auto offer = [&](const std::vector<std::uint8_t>& x) {
    if (!check_feasible(p, x).feasible) return;
    const double v = evaluate(p, x);
    if (!have || v < best.objective) {
      best.assignment = x;
      best.objective = v;
      best.status = Status::kOptimal;
      have = true;
    }
  };

  struct Node {
    std::vector<std::int8_t> fix;
    double parent_bound;
  };
  std::vector<Node> stack;
  stack.push_back({std::vector<std::int8_t>(p.n, -1), -kInf});
  long nodes = 0;
  bool root = true;
  Reduced root_red;
  std::optional<BoundedSimplex> warm;
  best.root_bound = kInf;

  while (!stack.empty()) {
    if (Clock::now() > deadline) {
      double open_bound = kInf;
      for (const auto& nd : stack) open_bound = std::min(open_bound, nd.parent_bound);
      best.nodes_explored = nodes;
      const double gap = have ? best.objective - open_bound : kInf;
      throw BudgetExceeded(best, have, gap);
    }
    Node node = std::move(stack.back());
    stack.pop_back();
    if (have && node.parent_bound >= best.objective - kPruneTol) continue;
    ++nodes;
    const bool is_root = root;
    root = false;

    if (!propagator.run(node.fix)) continue;

    // The root's reduced program is solved once; deeper nodes only tighten
    // bounds on it and re-solve from the previous basis. A node the warm
    // start cannot settle falls back to a cold solve of its own reduction.
    std::vector<std::uint8_t> x(p.n, 0);
    for (int j = 0; j < p.n; ++j) x[j] = node.fix[j] == 1;
    const Reduced* red = nullptr;
    Reduced cold_red;
    LpRelaxation rel;
    if (is_root) {
      root_red = reduce(p, node.fix);
      if (root_red.infeasible) continue;
      if (root_red.to_orig.empty()) {
        best.root_bound = root_red.fixed_cost;
        offer(x);
        continue;
      }
      red = &root_red;
      warm.emplace(static_cast<int>(root_red.to_orig.size()), root_red.cost, root_red.rows);
      rel = warm->run();
    } else {
      std::vector<std::int8_t> fix(root_red.to_orig.size());
      for (std::size_t k = 0; k < fix.size(); ++k) fix[k] = node.fix[root_red.to_orig[k]];
      rel = warm->resolve(fix);
      red = &root_red;
      if (!rel.converged) {
        cold_red = reduce(p, node.fix);
        if (cold_red.infeasible) continue;
        if (cold_red.to_orig.empty()) {
          offer(x);
          continue;
        }
        red = &cold_red;
        rel = BoundedSimplex(static_cast<int>(cold_red.to_orig.size()), cold_red.cost, cold_red.rows).run();
      }
    }
    if (!rel.feasible && rel.converged) continue;
    double bound = red->fixed_cost + rel.bound;
    if (is_root) best.root_bound = bound;
    if (have && bound >= best.objective - kPruneTol) continue;

    // Rounding heuristic.
    for (std::size_t k = 0; k < red->to_orig.size(); ++k) x[red->to_orig[k]] = rel.x[k] >= 0.5;
    offer(x);
    if (have && bound >= best.objective - kPruneTol) continue;

    // Reduced-cost fixing: moving x_j off its bound-minimizing value costs
    // at least |r_j|, which rules out any improvement on the incumbent.
    if (have) {
      int fixed = 0;
      for (std::size_t k = 0; k < red->to_orig.size(); ++k) {
        if (node.fix[red->to_orig[k]] >= 0) continue;
        const double r = rel.reduced_costs[k];
        if (bound + std::abs(r) < best.objective - kPruneTol) continue;
        node.fix[red->to_orig[k]] = r > 0.0 ? 0 : 1;
        ++fixed;
      }
      if (fixed > 0) {
        node.parent_bound = bound;
        stack.push_back(std::move(node));
        continue;
      }
    }

    int branch = -1;
    double frac_best = -1.0;
    for (std::size_t k = 0; k < red->to_orig.size(); ++k) {
      if (node.fix[red->to_orig[k]] >= 0) continue;
      const double f = std::min(rel.x[k], 1.0 - rel.x[k]);
      if (f > frac_best + 1e-12) {
        frac_best = f;
        branch = static_cast<int>(k);
      }
    }
    if (branch < 0) continue;  // every variable fixed; the point was offered above
    if (frac_best <= kIntTol) {
      // Integral relaxation point. Its rounding was offered above; keep
      // branching only if it was not accepted as an incumbent at this bound.
      if (have && std::abs(best.objective - (red->fixed_cost + rel.objective)) <= kPruneTol &&
          rel.converged) {
        continue;
      }
    }
    const int var = red->to_orig[branch];
    const std::int8_t near = rel.x[branch] >= 0.5 ? 1 : 0;
    Node far_node{node.fix, bound};
    far_node.fix[var] = static_cast<std::int8_t>(1 - near);
    node.fix[var] = near;
    node.parent_bound = bound;
    stack.push_back(std::move(far_node));
    stack.push_back(std::move(node));
  }
  best.nodes_explored = nodes;
  if (!have) {
    best.assignment.assign(p.n, 0);
    best.objective = 0.0;
    best.status = Status::kInfeasible;
  }
  return best;
}

std::string to_lp_string(const BinaryProgram& p) {
  auto name = [&](int j) {
    return j < static_cast<int>(p.var_names.size()) && !p.var_names[j].empty()
               ? p.var_names[j]
               : "x" + std::to_string(j);
  };
  std::ostringstream os;
  os.precision(17);
  auto terms = [&](const std::vector<Term>& ts) {
    if (ts.empty()) os << " 0";
    for (const auto& t : ts) {
      os << (t.coef < 0 ? " - " : " + ") << std::abs(t.coef) << ' ' << name(t.var);
    }
  };
  os << "\\ binary program: " << p.n << " variables, " << p.rows.size() << " rows\n";
  os << "minimize\n obj:";
  std::vector<Term> obj;
  for (int j = 0; j < p.n; ++j) obj.push_back({j, p.objective[j]});
  terms(obj);
  os << "\nsubject to\n";
  for (std::size_t i = 0; i < p.rows.size(); ++i) {
    const auto& r = p.rows[i];
    os << ' ' << (r.name.empty() ? "r" + std::to_string(i) : r.name) << ':';
    terms(r.terms);
    os << (r.rel == Relation::kLe ? " <= " : r.rel == Relation::kGe ? " >= " : " = ") << r.rhs
       << '\n';
  }
  os << "binary\n";
  for (int j = 0; j < p.n; ++j) os << ' ' << name(j) << '\n';
  os << "end\n";
  return os.str();
}

namespace {

class LpReader {
 public:
  explicit LpReader(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line[0] == '\\') continue;
      std::istringstream ls(line);
      std::string tok;
      while (ls >> tok) toks_.push_back(tok);
    }
  }

  BinaryProgram parse() {
    expect("minimize");
    // Objective terms refer to names; collect then resolve after "binary".
    struct RawRow {
      std::vector<std::pair<std::string, double>> terms;
      Relation rel;
      double rhs;
      std::string name;
    };
    std::vector<std::pair<std::string, double>> obj;
    if (peek_label()) next();
    read_terms(obj);
    expect("subject");
    expect("to");
    std::vector<RawRow> rows;
    while (peek() != "binary") {
      RawRow r;
      if (peek_label()) {
        r.name = next();
        r.name.pop_back();
      }
      read_terms(r.terms);
      const std::string op = next();
      if (op == "<=") {
        r.rel = Relation::kLe;
      } else if (op == ">=") {
        r.rel = Relation::kGe;
      } else if (op == "=") {
        r.rel = Relation::kEq;
      } else {
        throw Error("LP parse: expected relation, got '" + op + "'");
      }
      r.rhs = number(next());
      rows.push_back(std::move(r));
    }
    expect("binary");
    BinaryProgram p;
    std::vector<std::string> names;
    while (peek() != "end") names.push_back(next());
    expect("end");
    auto index = [&](const std::string& nm) {
      const auto it = std::find(names.begin(), names.end(), nm);
      if (it == names.end()) throw Error("LP parse: undeclared variable '" + nm + "'");
      return static_cast<int>(it - names.begin());
    };
    p.n = static_cast<int>(names.size());
    p.objective.assign(p.n, 0.0);
    bool default_names = true;
    for (int j = 0; j < p.n; ++j) default_names &= names[j] == "x" + std::to_string(j);
    if (!default_names) p.var_names = names;
    for (const auto& [nm, c] : obj) p.objective[index(nm)] += c;
    for (auto& r : rows) {
      Row row;
      for (const auto& [nm, c] : r.terms) row.terms.push_back({index(nm), c});
      row.rel = r.rel;
      row.rhs = r.rhs;
      if (r.name != "r" + std::to_string(p.rows.size())) row.name = r.name;
      p.rows.push_back(std::move(row));
    }
    return p;
  }

 private:
  const std::string& peek() const {
    if (pos_ >= toks_.size()) throw Error("LP parse: unexpected end of input");
    return toks_[pos_];
  }
  std::string next() {
    std::string t = peek();
    ++pos_;
    return t;
  }
  bool peek_label() const { return pos_ < toks_.size() && toks_[pos_].back() == ':'; }
  void expect(const std::string& word) {
    if (next() != word) throw Error("LP parse: expected '" + word + "'");
  }
  static double number(const std::string& s) {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw Error("LP parse: bad number '" + s + "'");
    return v;
  }
  static bool is_number(const std::string& s) {
    return !s.empty() && (std::isdigit(static_cast<unsigned char>(s[0])) || s[0] == '.' ||
                          ((s[0] == '-' || s[0] == '+') && s.size() > 1));
  }
  static bool is_relation(const std::string& s) { return s == "<=" || s == ">=" || s == "="; }

  // [sign] coef name ... ; a bare "0" (optionally followed by a name) means no terms.
  void read_terms(std::vector<std::pair<std::string, double>>& out) {
    while (pos_ < toks_.size()) {
      const std::string& t = peek();
      if (is_relation(t) || t == "subject") return;
      double sign = 1.0;
      if (t == "+" || t == "-") {
        sign = t == "-" ? -1.0 : 1.0;
        next();
      }
      const double coef = number(next());
      if (pos_ < toks_.size() && !is_relation(peek()) && peek() != "subject" &&
          peek() != "+" && peek() != "-" && !is_number(peek())) {
        const std::string nm = next();
        out.emplace_back(nm, sign * coef);
      }
    }
  }

  std::vector<std::string> toks_;
  std::size_t pos_ = 0;
};

}  // namespace

BinaryProgram parse_lp(std::string_view text) { return LpReader(text).parse(); }

}  // namespace floorplan::blp
