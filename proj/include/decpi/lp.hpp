#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "decpi/common.hpp"

namespace decpi::lp {

enum class Status { optimal, infeasible, unbounded, iteration_limit };

/// Dense linear program: maximize c'x subject to row constraints and
/// x_j >= 0 for every variable not marked free.
struct Problem {
  int num_vars = 0;
  std::vector<double> objective;
  std::vector<double> rows;  // row-major, num_rows x num_vars
  std::vector<double> rhs;
  std::vector<char> rel;  // 'L' (<=), 'G' (>=), 'E' (=)
  std::vector<std::uint8_t> free_var;
  std::string name = "lp";

  explicit Problem(int vars = 0) { reset(vars); }

  void reset(int vars) {
    num_vars = vars;
    objective.assign(vars, 0.0);
    free_var.assign(vars, 0);
    rows.clear();
    rhs.clear();
    rel.clear();
  }

  int num_rows() const { return static_cast<int>(rhs.size()); }

  void add_row(std::span<const double> coeffs, char relation, double b) {
    rows.insert(rows.end(), coeffs.begin(), coeffs.end());
    rel.push_back(relation);
    rhs.push_back(b);
  }

  double coeff(int r, int j) const { return rows[static_cast<std::size_t>(r) * num_vars + j]; }
};

struct Solution {
  Status status = Status::infeasible;
  double objective = 0.0;
  std::vector<double> x;
  std::vector<double> dual;  // one multiplier per row
};

/// Writes the problem in CPLEX LP interchange format.
inline void write_lp_format(const Problem& p, const std::string& path) {
  std::ofstream out(path);
  out << "\\ " << p.name << "\nMaximize\n obj:";
  for (int j = 0; j < p.num_vars; ++j) {
    if (p.objective[j] == 0.0) continue;
    char buf[64];
    std::snprintf(buf, sizeof buf, " %+.17g x%d", p.objective[j], j);
    out << buf;
  }
  out << "\nSubject To\n";
  for (int r = 0; r < p.num_rows(); ++r) {
    out << " c" << r << ":";
    for (int j = 0; j < p.num_vars; ++j) {
      double a = p.coeff(r, j);
      if (a == 0.0) continue;
      char buf[64];
      std::snprintf(buf, sizeof buf, " %+.17g x%d", a, j);
      out << buf;
    }
    const char* op = p.rel[r] == 'L' ? "<=" : (p.rel[r] == 'G' ? ">=" : "=");
    char buf[48];
    std::snprintf(buf, sizeof buf, " %s %.17g\n", op, p.rhs[r]);
    out << buf;
  }
  out << "Bounds\n";
  for (int j = 0; j < p.num_vars; ++j)
    if (p.free_var[j]) out << " x" << j << " free\n";
  out << "End\n";
}

namespace detail {

// Two-phase primal simplex on the full tableau. Deterministic pivot rules:
// Dantzig entering with lowest-index ties, falling back to Bland's rule when
// the objective stagnates, so degenerate problems cannot cycle.
class Simplex {
 public:
  Simplex(const Problem& p, long long max_iters) : prob_(p), max_iters_(max_iters) { build(); }

  Solution run() {
    Solution sol;
    if (!phase1()) {
      sol.status = feasible_ ? Status::iteration_limit : Status::infeasible;
      return sol;
    }
    Status st = phase2();
    sol.status = st;
    if (st != Status::optimal) return sol;
    extract(sol);
    return sol;
  }

 private:
  static constexpr double kCoeffEps = 1e-9;   // reduced-cost threshold
  static constexpr double kPivotEps = 1e-9;   // minimum pivot magnitude
  static constexpr double kRatioEps = 1e-9;

  const Problem& prob_;
  long long max_iters_;
  int m_ = 0, ncol_ = 0;
  std::vector<double> tab_;   // m x (ncol + 1); last column is rhs
  std::vector<double> obj_;   // ncol + 1
  std::vector<int> basis_;
  std::vector<int> var_col_;      // structural var -> tableau column (plus part)
  std::vector<int> var_neg_col_;  // free vars: minus part, else -1
  std::vector<int> row_dual_col_;
  std::vector<double> row_dual_sign_;
  std::vector<std::uint8_t> artificial_;
  bool feasible_ = false;
  long long iters_ = 0;

  double& at(int r, int c) { return tab_[static_cast<std::size_t>(r) * (ncol_ + 1) + c]; }
  double at(int r, int c) const { return tab_[static_cast<std::size_t>(r) * (ncol_ + 1) + c]; }

  void build() {
    m_ = prob_.num_rows();
    int n = prob_.num_vars;
    var_col_.resize(n);
    var_neg_col_.assign(n, -1);
    int col = 0;
    for (int j = 0; j < n; ++j) {
      var_col_[j] = col++;
      if (prob_.free_var[j]) var_neg_col_[j] = col++;
    }
    // One slack/surplus or artificial per row, sized below.
    std::vector<char> norm_rel(m_);
    std::vector<double> norm_sign(m_, 1.0);
    int extra = 0;
    for (int r = 0; r < m_; ++r) {
      char rl = prob_.rel[r];
      double sign = 1.0;
      if (prob_.rhs[r] < 0.0) {
        sign = -1.0;
        rl = rl == 'L' ? 'G' : (rl == 'G' ? 'L' : 'E');
      }
      norm_rel[r] = rl;
      norm_sign[r] = sign;
      extra += rl == 'G' ? 2 : 1;  // surplus + artificial, or slack/artificial
    }
    ncol_ = col + extra;
    tab_.assign(static_cast<std::size_t>(m_) * (ncol_ + 1), 0.0);
    obj_.assign(ncol_ + 1, 0.0);
    basis_.assign(m_, -1);
    artificial_.assign(ncol_, 0);
    row_dual_col_.assign(m_, -1);
    row_dual_sign_.assign(m_, 1.0);

    int next = col;
    for (int r = 0; r < m_; ++r) {
      double sign = norm_sign[r];
      for (int j = 0; j < n; ++j) {
        double a = sign * prob_.coeff(r, j);
        if (a == 0.0) continue;
        at(r, var_col_[j]) = a;
        if (var_neg_col_[j] >= 0) at(r, var_neg_col_[j]) = -a;
      }
      at(r, ncol_) = sign * prob_.rhs[r];
      switch (norm_rel[r]) {
        case 'L': {
          int s = next++;
          at(r, s) = 1.0;
          basis_[r] = s;
          row_dual_col_[r] = s;
          row_dual_sign_[r] = sign;
          break;
        }
        case 'G': {
          int s = next++;
          at(r, s) = -1.0;
          int a = next++;
          at(r, a) = 1.0;
          artificial_[a] = 1;
          basis_[r] = a;
          row_dual_col_[r] = s;
          row_dual_sign_[r] = -sign;
          break;
        }
        default: {
          int a = next++;
          at(r, a) = 1.0;
          artificial_[a] = 1;
          basis_[r] = a;
          row_dual_col_[r] = a;
          row_dual_sign_[r] = sign;
          break;
        }
      }
    }
  }

  void pivot(int pr, int pc) {
    double piv = at(pr, pc);
    double inv = 1.0 / piv;
    double* prow = &tab_[static_cast<std::size_t>(pr) * (ncol_ + 1)];
    for (int c = 0; c <= ncol_; ++c) prow[c] *= inv;
    prow[pc] = 1.0;
    for (int r = 0; r < m_; ++r) {
      if (r == pr) continue;
      double f = at(r, pc);
      if (f == 0.0) continue;
      double* row = &tab_[static_cast<std::size_t>(r) * (ncol_ + 1)];
      for (int c = 0; c <= ncol_; ++c) row[c] -= f * prow[c];
      row[pc] = 0.0;
    }
    double f = obj_[pc];
    if (f != 0.0) {
      for (int c = 0; c <= ncol_; ++c) obj_[c] -= f * prow[c];
      obj_[pc] = 0.0;
    }
    basis_[pr] = pc;
    ++iters_;
  }

  int choose_entering(bool bland, bool allow_artificial) const {
    int best = -1;
    double best_val = -kCoeffEps;
    for (int c = 0; c < ncol_; ++c) {
      if (!allow_artificial && artificial_[c]) continue;
      double v = obj_[c];
      if (v < best_val) {
        if (bland) return c;
        best_val = v;
        best = c;
      }
    }
    return best;
  }

  int choose_leaving(int pc, bool bland) const {
    int best = -1;
    double best_ratio = std::numeric_limits<double>::infinity();
    double best_piv = 0.0;
    for (int r = 0; r < m_; ++r) {
      double a = at(r, pc);
      if (a <= kPivotEps) continue;
      double ratio = at(r, ncol_) / a;
      if (ratio < best_ratio - kRatioEps) {
        best_ratio = ratio;
        best = r;
        best_piv = a;
      } else if (ratio <= best_ratio + kRatioEps) {
        bool better;
        if (bland) {
          // Bland: lowest basic column index among ties (no cycling).
          better = basis_[r] < basis_[best];
        } else {
          // Prefer kicking artificials, then the larger pivot; keeping the
          // incumbent on remaining ties selects the lowest row.
          better = false;
          if (artificial_[basis_[r]] != artificial_[basis_[best]])
            better = artificial_[basis_[r]];
          else if (std::abs(a - best_piv) > kRatioEps)
            better = a > best_piv;
        }
        if (better) {
          best_ratio = std::min(best_ratio, ratio);
          best = r;
          best_piv = a;
        }
      }
    }
    return best;
  }

  /// Runs pivots until the current objective row is optimal.
  Status iterate(bool allow_artificial) {
    long long stagnant = 0;
    bool bland = false;
    double last_obj = obj_[ncol_];
    while (true) {
      int pc = choose_entering(bland, allow_artificial);
      if (pc < 0) return Status::optimal;
      int pr = choose_leaving(pc, bland);
      if (pr < 0) return Status::unbounded;
      pivot(pr, pc);
      if (iters_ > max_iters_) return Status::iteration_limit;
      if (obj_[ncol_] > last_obj + 1e-12) {
        stagnant = 0;
        last_obj = obj_[ncol_];
        bland = false;
      } else if (++stagnant > 2LL * (m_ + 4)) {
        bland = true;  // anti-cycling
      }
    }
  }

  bool phase1() {
    bool need = false;
    obj_.assign(ncol_ + 1, 0.0);
    for (int c = 0; c < ncol_; ++c)
      if (artificial_[c]) {
        obj_[c] = 1.0;  // minimize sum of artificials == maximize -sum
        need = true;
      }
    if (!need) {
      feasible_ = true;
      return true;
    }
    for (int r = 0; r < m_; ++r) {
      if (!artificial_[basis_[r]]) continue;
      double* row = &tab_[static_cast<std::size_t>(r) * (ncol_ + 1)];
      for (int c = 0; c <= ncol_; ++c) obj_[c] -= row[c];
    }
    Status st = iterate(true);
    if (st == Status::iteration_limit) return false;
    if (obj_[ncol_] < -1e-7) {
      feasible_ = false;
      return false;
    }
    feasible_ = true;
    // Drive remaining artificials out of the basis where possible.
    for (int r = 0; r < m_; ++r) {
      if (!artificial_[basis_[r]]) continue;
      int pc = -1;
      for (int c = 0; c < ncol_; ++c) {
        if (artificial_[c]) continue;
        if (std::abs(at(r, c)) > 1e-7) {
          pc = c;
          break;
        }
      }
      if (pc >= 0) pivot(r, pc);
      // else: redundant row; its artificial stays basic at value zero.
    }
    return true;
  }

  Status phase2() {
    obj_.assign(ncol_ + 1, 0.0);
    for (int j = 0; j < prob_.num_vars; ++j) {
      obj_[var_col_[j]] = -prob_.objective[j];
      if (var_neg_col_[j] >= 0) obj_[var_neg_col_[j]] = prob_.objective[j];
    }
    for (int r = 0; r < m_; ++r) {
      double f = obj_[basis_[r]];
      if (f == 0.0) continue;
      double* row = &tab_[static_cast<std::size_t>(r) * (ncol_ + 1)];
      for (int c = 0; c <= ncol_; ++c) obj_[c] -= f * row[c];
      obj_[basis_[r]] = 0.0;
    }
    return iterate(false);
  }

  void extract(Solution& sol) const {
    std::vector<double> col_val(ncol_, 0.0);
    for (int r = 0; r < m_; ++r) col_val[basis_[r]] = at(r, ncol_);
    sol.x.assign(prob_.num_vars, 0.0);
    for (int j = 0; j < prob_.num_vars; ++j) {
      sol.x[j] = col_val[var_col_[j]];
      if (var_neg_col_[j] >= 0) sol.x[j] -= col_val[var_neg_col_[j]];
    }
    sol.objective = 0.0;
    for (int j = 0; j < prob_.num_vars; ++j) sol.objective += prob_.objective[j] * sol.x[j];
    sol.dual.assign(m_, 0.0);
    for (int r = 0; r < m_; ++r)
      sol.dual[r] = row_dual_sign_[r] * obj_[row_dual_col_[r]];
  }
};

}  // namespace detail

inline Solution solve(const Problem& p, long long max_iters = 0) {
  if (max_iters <= 0) max_iters = 200LL * (p.num_rows() + p.num_vars) + 20000;
  detail::Simplex simplex(p, max_iters);
  return simplex.run();
}

struct GameSolution {
  double value = 0.0;
  std::vector<double> row_strategy;  // maximizer, length n
  std::vector<double> col_strategy;  // minimizer, length m
};

/// Solves the zero-sum matrix game value = max_{x in simplex} min_k (x'G)_k
/// for a row-major n x m payoff matrix G (payoffs to the row player).
/// The LP is formulated over whichever side has fewer strategies; the other
/// side's optimal mixture is recovered from the dual multipliers.
inline GameSolution solve_matrix_game(std::span<const double> payoff, int n, int m,
                                      const std::string& dump_path = {}) {
  if (n <= 0 || m <= 0) throw InternalError("empty game");
  double scale = 0.0;
  for (double v : payoff) scale = std::max(scale, std::abs(v));
  if (scale < 1.0) scale = 1.0;

  GameSolution gs;
  gs.row_strategy.assign(n, 0.0);
  gs.col_strategy.assign(m, 0.0);

  const bool column_lp = n <= m;  // build the LP with fewer rows
  Problem p(0);
  std::vector<double> buf;
  if (column_lp) {
    // Variables y (m) and w free; minimize w == maximize -w subject to
    // sum_k G[j][k] y_k <= w for every j, sum y = 1.
    p.reset(m + 1);
    p.free_var[m] = 1;
    p.objective[m] = -1.0;
    p.name = "game-col";
    buf.assign(m + 1, 0.0);
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < m; ++k) buf[k] = payoff[static_cast<std::size_t>(j) * m + k] / scale;
      buf[m] = -1.0;
      p.add_row(buf, 'L', 0.0);
    }
    std::fill(buf.begin(), buf.end() - 1, 1.0);
    buf[m] = 0.0;
    p.add_row(buf, 'E', 1.0);
  } else {
    // Variables x (n) and v free; maximize v subject to
    // v <= sum_j x_j G[j][k] for every k, sum x = 1.
    p.reset(n + 1);
    p.free_var[n] = 1;
    p.objective[n] = 1.0;
    p.name = "game-row";
    buf.assign(n + 1, 0.0);
    for (int k = 0; k < m; ++k) {
      for (int j = 0; j < n; ++j) buf[j] = -payoff[static_cast<std::size_t>(j) * m + k] / scale;
      buf[n] = 1.0;
      p.add_row(buf, 'L', 0.0);
    }
    std::fill(buf.begin(), buf.end() - 1, 1.0);
    buf[n] = 0.0;
    p.add_row(buf, 'E', 1.0);
  }
  if (!dump_path.empty()) write_lp_format(p, dump_path);

  Solution sol = solve(p);
  if (sol.status != Status::optimal)
    throw InternalError("matrix game LP did not reach optimality");

  if (column_lp) {
    gs.value = -sol.objective * scale;
    for (int k = 0; k < m; ++k) gs.col_strategy[k] = std::max(0.0, sol.x[k]);
    // Duals of the n improvement rows carry the row player's mixture.
    for (int j = 0; j < n; ++j) gs.row_strategy[j] = std::max(0.0, sol.dual[j]);
  } else {
    gs.value = sol.objective * scale;
    for (int j = 0; j < n; ++j) gs.row_strategy[j] = std::max(0.0, sol.x[j]);
    for (int k = 0; k < m; ++k) gs.col_strategy[k] = std::max(0.0, sol.dual[k]);
  }
  normalize_in_place(gs.row_strategy);
  normalize_in_place(gs.col_strategy);

  // Certify the returned row mixture: its guaranteed payoff must match the
  // reported value, otherwise the dual extraction went wrong.
  double worst = std::numeric_limits<double>::infinity();
  for (int k = 0; k < m; ++k) {
    double v = 0.0;
    for (int j = 0; j < n; ++j)
      v += gs.row_strategy[j] * payoff[static_cast<std::size_t>(j) * m + k];
    worst = std::min(worst, v);
  }
  if (std::abs(worst - gs.value) > 1e-6 * scale)
    throw InternalError("matrix game certificate failed: value " + std::to_string(gs.value) +
                        " vs achieved " + std::to_string(worst));
  gs.value = worst;  // report the certified objective of the returned mixture
  return gs;
}

}  // namespace decpi::lp
