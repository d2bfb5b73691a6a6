#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decpi/evaluate.hpp"
#include "decpi/lp.hpp"

namespace decpi {

/// Result of a dominance test: `distribution` mixes the remaining nodes of
/// the same controller (indexed with the removed node skipped) and `epsilon`
/// is the objective achieved by that distribution (the LP optimum when the
/// linear program was solved, a lower bound when the single-node screen
/// accepted first).
struct DominanceWitness {
  bool device = false;
  int agent = -1;
  int node = 0;
  std::vector<double> distribution;
  double epsilon = 0.0;
};

/// New parameters installed by a bounded backup. For a local node,
/// `action_probs[qc*A + a]` carries x(qc, a) and
/// `next_probs[((qc*A + a)*O + o)*Q + q']` carries x(qc, a, o, q');
/// for a device node `action_probs` carries x(qc').
struct BackupWitness {
  bool device = false;
  int agent = -1;
  int node = 0;
  std::vector<double> action_probs;
  std::vector<double> next_probs;
  double epsilon = 0.0;
};

namespace detail {

inline int next_lp_id() {
  static int id = 0;
  return id++;
}

inline std::string lp_dump_path(const SolveConfig& cfg, const char* kind) {
  if (cfg.lp_dump_dir.empty()) return {};
  return cfg.lp_dump_dir + "/" + std::to_string(next_lp_id()) + "-" + kind + ".lp";
}

/// Enumerates the joint-index offsets of every (q_c, q_-i) context, i.e. the
/// joint index with agent `agent`'s coordinate held at zero.
inline std::vector<long long> context_offsets(const ValueTable& vt, int agent) {
  std::vector<long long> out;
  const auto& radix = vt.joint.radix;
  std::vector<int> digits(radix.size(), 0);
  while (true) {
    long long base = 0;
    for (std::size_t i = 0; i < radix.size(); ++i) base += digits[i] * vt.joint.stride[i];
    out.push_back(base);
    int i = static_cast<int>(radix.size()) - 1;
    while (i >= 0) {
      if (static_cast<int>(i) == agent + 1) {  // skip the pruned agent's digit
        --i;
        continue;
      }
      if (++digits[i] < radix[i]) break;
      digits[i] = 0;
      --i;
    }
    if (i < 0) break;
  }
  return out;
}

/// Warm-start table for the controller with `dead` removed from `agent`
/// (agent == -1 removes a device node): values are carried over node-by-node.
inline ValueTable gather_after_removal(const ValueTable& vt, int agent, int dead) {
  ValueTable out;
  out.num_states = vt.num_states;
  out.device_size = vt.device_size - (agent < 0 ? 1 : 0);
  out.local_sizes = vt.local_sizes;
  if (agent >= 0) out.local_sizes[agent] -= 1;
  std::vector<int> radix{out.device_size};
  for (int s : out.local_sizes) radix.push_back(s);
  out.joint = MixedRadix(radix);
  out.v.resize(out.joint.total * out.num_states);
  const int dim = agent + 1;  // digit position in the joint radix
  std::vector<int> digits(radix.size(), 0);
  for (long long j = 0; j < out.joint.total; ++j) {
    std::vector<int> old_digits(digits.begin(), digits.end());
    if (old_digits[dim] >= dead) ++old_digits[dim];
    long long oj = vt.joint.encode(old_digits);
    for (int s = 0; s < out.num_states; ++s) out.v[j * out.num_states + s] = vt.at(oj, s);
    out.joint.advance(digits);
  }
  return out;
}

}  // namespace detail

/// Removes device node `dead`, redirecting transitions into it through
/// `witness` (a distribution over the remaining device nodes).
inline JointController merge_out_device(const JointController& jc, int dead,
                                        std::span<const double> witness) {
  JointController out;
  const int n = jc.device.num_nodes;
  out.device.num_nodes = n - 1;
  out.device.trans.assign(static_cast<std::size_t>(n - 1) * (n - 1), 0.0);
  auto old_of = [&](int qc) { return qc < dead ? qc : qc + 1; };
  for (int qc = 0; qc < n - 1; ++qc) {
    double redirected = jc.device.prob(old_of(qc), dead);
    for (int qc2 = 0; qc2 < n - 1; ++qc2)
      out.device.prob(qc, qc2) = jc.device.prob(old_of(qc), old_of(qc2)) +
                                 redirected * witness[qc2];
  }
  for (const auto& lc : jc.locals) {
    LocalController nl;
    nl.num_nodes = lc.num_nodes;
    nl.num_device = n - 1;
    nl.num_actions = lc.num_actions;
    nl.num_obs = lc.num_obs;
    nl.allocate();
    for (int q = 0; q < lc.num_nodes; ++q)
      for (int qc = 0; qc < n - 1; ++qc)
        for (int a = 0; a < lc.num_actions; ++a) {
          nl.psi(q, qc, a) = lc.psi(q, old_of(qc), a);
          for (int o = 0; o < lc.num_obs; ++o)
            for (int q2 = 0; q2 < lc.num_nodes; ++q2)
              nl.eta(q, qc, a, o, q2) = lc.eta(q, old_of(qc), a, o, q2);
        }
    out.locals.push_back(std::move(nl));
  }
  return out;
}

/// Controller reduction for one local node (dual dominance LP): looks for a
/// distribution over the other nodes whose mixed value weakly dominates the
/// node at every (state, other-agent nodes, device node) context, within
/// `slack`. Returns the merged controller on success.
inline std::optional<std::pair<JointController, DominanceWitness>> reduce_local_node(
    const DecPomdp& m, const JointController& jc, const ValueTable& vt, int agent, int node,
    double slack = 0.0, const SolveConfig& cfg = {}) {
  const int Q = jc.locals[agent].num_nodes;
  if (Q < 2) throw ValidationError("reduce_local_node requires at least two nodes");
  const int S = vt.num_states;
  const long long stride = vt.joint.stride[agent + 1];
  auto contexts = detail::context_offsets(vt, agent);
  const int n = Q - 1;
  const int mcols = static_cast<int>(contexts.size()) * S;
  const double accept_at = -slack - cfg.tol.lp_accept;

  auto candidate = [&](int j) { return j < node ? j : j + 1; };

  DominanceWitness w;
  w.agent = agent;
  w.node = node;

  if (cfg.dominance_screen) {
    int best_j = -1;
    double best_min = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      long long off = candidate(j) * stride, noff = static_cast<long long>(node) * stride;
      double worst = std::numeric_limits<double>::infinity();
      for (long long base : contexts) {
        for (int s = 0; s < S; ++s) {
          double d = vt.at(base + off, s) - vt.at(base + noff, s);
          if (d < worst) worst = d;
        }
        if (worst < best_min) break;
      }
      if (worst > best_min) {
        best_min = worst;
        best_j = j;
      }
    }
    if (best_min >= accept_at && best_j >= 0) {
      w.distribution.assign(n, 0.0);
      w.distribution[best_j] = 1.0;
      w.epsilon = best_min;
      JointController out = jc;
      out.locals[agent].merge_out(node, w.distribution);
      return std::make_pair(std::move(out), std::move(w));
    }
  }

  std::vector<double> payoff(static_cast<std::size_t>(n) * mcols);
  for (int j = 0; j < n; ++j) {
    long long off = candidate(j) * stride, noff = static_cast<long long>(node) * stride;
    double* row = &payoff[static_cast<std::size_t>(j) * mcols];
    int k = 0;
    for (long long base : contexts)
      for (int s = 0; s < S; ++s) row[k++] = vt.at(base + off, s) - vt.at(base + noff, s);
  }
  auto gs = lp::solve_matrix_game(payoff, n, mcols, detail::lp_dump_path(cfg, "reduce-local"));
  if (gs.value < accept_at) return std::nullopt;
  w.distribution = gs.row_strategy;
  w.epsilon = gs.value;
  JointController out = jc;
  out.locals[agent].merge_out(node, w.distribution);
  return std::make_pair(std::move(out), std::move(w));
}

/// Controller reduction for a correlation-device node (Table 6b analogue).
inline std::optional<std::pair<JointController, DominanceWitness>> reduce_device_node(
    const DecPomdp& m, const JointController& jc, const ValueTable& vt, int node,
    double slack = 0.0, const SolveConfig& cfg = {}) {
  const int Q = jc.device.num_nodes;
  if (Q < 2) throw ValidationError("reduce_device_node requires at least two device nodes");
  const int S = vt.num_states;
  const long long stride = vt.joint.stride[0];
  auto contexts = detail::context_offsets(vt, -1);
  const int n = Q - 1;
  const int mcols = static_cast<int>(contexts.size()) * S;
  const double accept_at = -slack - cfg.tol.lp_accept;
  auto candidate = [&](int j) { return j < node ? j : j + 1; };

  DominanceWitness w;
  w.device = true;
  w.node = node;

  if (cfg.dominance_screen) {
    int best_j = -1;
    double best_min = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      long long off = candidate(j) * stride, noff = static_cast<long long>(node) * stride;
      double worst = std::numeric_limits<double>::infinity();
      for (long long base : contexts)
        for (int s = 0; s < S; ++s)
          worst = std::min(worst, vt.at(base + off, s) - vt.at(base + noff, s));
      if (worst > best_min) {
        best_min = worst;
        best_j = j;
      }
    }
    if (best_min >= accept_at && best_j >= 0) {
      w.distribution.assign(n, 0.0);
      w.distribution[best_j] = 1.0;
      w.epsilon = best_min;
      return std::make_pair(merge_out_device(jc, node, w.distribution), std::move(w));
    }
  }

  std::vector<double> payoff(static_cast<std::size_t>(n) * mcols);
  for (int j = 0; j < n; ++j) {
    long long off = candidate(j) * stride, noff = static_cast<long long>(node) * stride;
    double* row = &payoff[static_cast<std::size_t>(j) * mcols];
    int k = 0;
    for (long long base : contexts)
      for (int s = 0; s < S; ++s) row[k++] = vt.at(base + off, s) - vt.at(base + noff, s);
  }
  auto gs = lp::solve_matrix_game(payoff, n, mcols, detail::lp_dump_path(cfg, "reduce-device"));
  if (gs.value < accept_at) return std::nullopt;
  w.distribution = gs.row_strategy;
  w.epsilon = gs.value;
  return std::make_pair(merge_out_device(jc, node, w.distribution), std::move(w));
}

struct ReduceAllResult {
  JointController controller;
  ValueTable values;  // evaluation of the returned controller
  std::vector<int> removed;  // device first, then one entry per agent
  long long total_removed() const {
    long long t = 0;
    for (int r : removed) t += r;
    return t;
  }
};

/// Round-robin reduction sweep: device first, then agents in index order,
/// nodes in ascending index, re-evaluating after every successful merge.
/// Stops when a full cycle removes nothing; the result cannot be reduced
/// further by any single-node merge at the given slack.
inline ReduceAllResult reduce_all(const DecPomdp& m, JointController jc, double slack = 0.0,
                                  const SolveConfig& cfg = {}) {
  ReduceAllResult res;
  res.removed.assign(jc.num_agents() + 1, 0);
  ValueTable vt = evaluate(m, jc, cfg);
  bool removed_any = true;
  while (removed_any) {
    removed_any = false;
    for (int ctrl = -1; ctrl < jc.num_agents(); ++ctrl) {
      int pos = 0;
      while (true) {
        int count = ctrl < 0 ? jc.device.num_nodes : jc.locals[ctrl].num_nodes;
        if (count < 2 || pos >= count) break;
        auto attempt = ctrl < 0 ? reduce_device_node(m, jc, vt, pos, slack, cfg)
                                : reduce_local_node(m, jc, vt, ctrl, pos, slack, cfg);
        if (attempt) {
          jc = std::move(attempt->first);
          ValueTable warm = detail::gather_after_removal(vt, ctrl, pos);
          vt = evaluate(m, jc, cfg, &warm);
          ++res.removed[ctrl + 1];
          removed_any = true;
          // the node that shifted into `pos` is examined next
        } else {
          ++pos;
        }
      }
    }
  }
  res.controller = std::move(jc);
  res.values = std::move(vt);
  return res;
}

/// Bounded backup of one local node: re-optimizes P(a_i, q_i' | q_c, q_i, o_i)
/// against the frozen value table so that no (state, other nodes, device)
/// entry loses value. The incumbent parameters are always feasible, so the
/// optimum is nonnegative up to the evaluation residual.
inline std::pair<JointController, BackupWitness> bounded_backup_local(
    const DecPomdp& m, const JointController& jc, const ValueTable& vt, int agent, int node,
    const SolveConfig& cfg = {}) {
  const auto& lc = jc.locals[agent];
  const int A = lc.num_actions, O = lc.num_obs, Q = lc.num_nodes, QC = jc.device.num_nodes;
  const int S = vt.num_states;
  detail::Compiled c(m, jc);
  const long long stride_i = vt.joint.stride[agent + 1];

  const int base2 = QC * A;  // offset of the x(qc, a, o, q') block
  const int nvars = QC * A + QC * A * O * Q + 1;
  const int eps_var = nvars - 1;
  lp::Problem p(nvars);
  p.name = "bounded-local";
  p.free_var[eps_var] = 1;
  p.objective[eps_var] = 1.0;
  auto avar = [&](int qc, int a) { return qc * A + a; };
  auto tvar = [&](int qc, int a, int o, int q2) {
    return base2 + ((qc * A + a) * O + o) * Q + q2;
  };

  // Improvement rows: one per (s, q_-i, q_c) context.
  auto contexts = detail::context_offsets(vt, agent);
  std::vector<double> row(nvars);
  std::vector<int> digits(vt.joint.radix.size());
  for (long long base : contexts) {
    vt.joint.decode(base, digits);
    const int qc = digits[0];
    // action-selection supports of the other agents at this context
    std::vector<const std::vector<detail::Entry>*> others;
    std::vector<int> other_ids;
    for (int j = 0; j < m.num_agents; ++j) {
      if (j == agent) continue;
      others.push_back(&c.psi_row(j, digits[j + 1], qc));
      other_ids.push_back(j);
    }
    for (int s = 0; s < S; ++s) {
      std::fill(row.begin(), row.end(), 0.0);
      row[eps_var] = 1.0;
      // enumerate the other agents' joint actions
      std::vector<std::size_t> pick(others.size(), 0);
      while (true) {
        double wa = 1.0;
        int ja_others = 0;
        for (std::size_t k = 0; k < others.size(); ++k) {
          const auto& [a, pa] = (*others[k])[pick[k]];
          wa *= pa;
          ja_others += a * static_cast<int>(m.action_space.stride[other_ids[k]]);
        }
        for (int a = 0; a < A; ++a) {
          int ja = ja_others + a * static_cast<int>(m.action_space.stride[agent]);
          row[avar(qc, a)] -= wa * m.rew(ja, s);
          for (const auto& [s2, pt] : c.trans_rows[static_cast<std::size_t>(ja) * S + s]) {
            for (const auto& [jo, po] : c.obs_rows[static_cast<std::size_t>(ja) * S + s2]) {
              const int o_i = c.jo_comp[agent][jo];
              double w0 = wa * pt * po * m.discount;
              std::vector<const std::vector<detail::Entry>*> erows(others.size());
              for (std::size_t k = 0; k < others.size(); ++k)
                erows[k] = &c.eta_row(other_ids[k], digits[other_ids[k] + 1], qc,
                                      (*others[k])[pick[k]].first, c.jo_comp[other_ids[k]][jo]);
              // successor mixture over the device and the other agents
              for (const auto& [qc2, pc] : c.dev[qc]) {
                std::vector<std::size_t> epick(others.size(), 0);
                while (true) {
                  double we = w0 * pc;
                  long long succ_base = qc2 * vt.joint.stride[0];
                  for (std::size_t k = 0; k < others.size(); ++k) {
                    const auto& [q2, pe] = (*erows[k])[epick[k]];
                    we *= pe;
                    succ_base += q2 * vt.joint.stride[other_ids[k] + 1];
                  }
                  for (int q2 = 0; q2 < Q; ++q2)
                    row[tvar(qc, a, o_i, q2)] -= we * vt.at(succ_base + q2 * stride_i, s2);
                  int k = static_cast<int>(others.size()) - 1;
                  while (k >= 0 && ++epick[k] == erows[k]->size()) epick[k--] = 0;
                  if (k < 0) break;
                }
              }
            }
          }
        }
        int k = static_cast<int>(others.size()) - 1;
        while (k >= 0 && ++pick[k] == others[k]->size()) pick[k--] = 0;
        if (k < 0) break;
      }
      long long jnode = base + static_cast<long long>(node) * stride_i;
      p.add_row(row, 'L', -vt.at(jnode, s));
    }
  }
  // Probability structure.
  for (int qc = 0; qc < QC; ++qc) {
    std::fill(row.begin(), row.end(), 0.0);
    for (int a = 0; a < A; ++a) row[avar(qc, a)] = 1.0;
    p.add_row(row, 'E', 1.0);
  }
  for (int qc = 0; qc < QC; ++qc)
    for (int a = 0; a < A; ++a)
      for (int o = 0; o < O; ++o) {
        std::fill(row.begin(), row.end(), 0.0);
        for (int q2 = 0; q2 < Q; ++q2) row[tvar(qc, a, o, q2)] = 1.0;
        row[avar(qc, a)] = -1.0;
        p.add_row(row, 'E', 0.0);
      }

  if (!cfg.lp_dump_dir.empty()) lp::write_lp_format(p, detail::lp_dump_path(cfg, p.name.c_str()));
  auto sol = lp::solve(p);
  if (sol.status != lp::Status::optimal)
    throw InternalError("bounded backup LP failed (status " +
                        std::to_string(static_cast<int>(sol.status)) + ")");

  BackupWitness w;
  w.agent = agent;
  w.node = node;
  w.epsilon = sol.objective;
  w.action_probs.assign(sol.x.begin(), sol.x.begin() + QC * A);
  w.next_probs.assign(sol.x.begin() + base2, sol.x.begin() + base2 + QC * A * O * Q);

  JointController out = jc;
  auto& nl = out.locals[agent];
  for (int qc = 0; qc < QC; ++qc) {
    double total = 0.0;
    for (int a = 0; a < A; ++a) total += std::max(0.0, w.action_probs[avar(qc, a)]);
    if (total <= 0.0) throw InternalError("bounded backup returned a zero action row");
    for (int a = 0; a < A; ++a) {
      double xa = std::max(0.0, w.action_probs[avar(qc, a)]);
      nl.psi(node, qc, a) = xa / total;
      auto dest = [&](int o) { return nl.eta_row_mut(node, qc, a, o); };
      if (xa > 1e-12) {
        for (int o = 0; o < O; ++o) {
          auto r = dest(o);
          double rs = 0.0;
          for (int q2 = 0; q2 < Q; ++q2)
            rs += std::max(0.0, w.next_probs[((qc * A + a) * O + o) * Q + q2]);
          if (rs <= 0.0) continue;  // keep the old row
          for (int q2 = 0; q2 < Q; ++q2)
            r[q2] = std::max(0.0, w.next_probs[((qc * A + a) * O + o) * Q + q2]) / rs;
        }
      }
      // actions with zero mass keep their old (irrelevant) transition rows
    }
  }
  return {std::move(out), std::move(w)};
}

/// Bounded backup of one correlation-device node (Table 7b analogue): finds a
/// replacement transition distribution x(q_c') for the node.
inline std::pair<JointController, BackupWitness> bounded_backup_device(
    const DecPomdp& m, const JointController& jc, const ValueTable& vt, int node,
    const SolveConfig& cfg = {}) {
  const int QC = jc.device.num_nodes;
  const int S = vt.num_states;
  detail::Compiled c(m, jc);
  const int nvars = QC + 1;
  const int eps_var = QC;
  lp::Problem p(nvars);
  p.name = "bounded-device";
  p.free_var[eps_var] = 1;
  p.objective[eps_var] = 1.0;

  const int n = m.num_agents;
  std::vector<double> row(nvars);
  std::vector<int> digits(vt.joint.radix.size(), 0);
  std::vector<const std::vector<detail::Entry>*> act_rows(n);
  std::vector<const std::vector<detail::Entry>*> eta_rows(n);
  std::vector<std::size_t> pick(n, 0);
  // Iterate every joint node with device coordinate == node.
  for (long long local = 0; local < vt.joint.total / QC; ++local) {
    long long jfull = static_cast<long long>(node) * vt.joint.stride[0] + local;
    vt.joint.decode(jfull, digits);
    for (int i = 0; i < n; ++i) act_rows[i] = &c.psi_row(i, digits[i + 1], node);
    for (int s = 0; s < S; ++s) {
      std::fill(row.begin(), row.end(), 0.0);
      row[eps_var] = 1.0;
      double constant = 0.0;
      std::fill(pick.begin(), pick.end(), 0);
      while (true) {
        double pa = 1.0;
        int ja = 0;
        for (int i = 0; i < n; ++i) {
          const auto& [a, pr] = (*act_rows[i])[pick[i]];
          pa *= pr;
          ja += a * static_cast<int>(m.action_space.stride[i]);
        }
        constant += pa * m.rew(ja, s);
        for (const auto& [s2, pt] : c.trans_rows[static_cast<std::size_t>(ja) * S + s]) {
          for (const auto& [jo, po] : c.obs_rows[static_cast<std::size_t>(ja) * S + s2]) {
            for (int i = 0; i < n; ++i)
              eta_rows[i] = &c.eta_row(i, digits[i + 1], node, (*act_rows[i])[pick[i]].first,
                                       c.jo_comp[i][jo]);
            double w0 = pa * pt * po * m.discount;
            // enumerate local successors; the device successor is the variable
            std::vector<std::size_t> epick(n, 0);
            while (true) {
              double we = w0;
              long long succ_local = 0;
              for (int i = 0; i < n; ++i) {
                const auto& [q2, pe] = (*eta_rows[i])[epick[i]];
                we *= pe;
                succ_local += q2 * vt.joint.stride[i + 1];
              }
              for (int qc2 = 0; qc2 < QC; ++qc2)
                row[qc2] -= we * vt.at(succ_local + qc2 * vt.joint.stride[0], s2);
              int k = n - 1;
              while (k >= 0 && ++epick[k] == eta_rows[k]->size()) epick[k--] = 0;
              if (k < 0) break;
            }
          }
        }
        int i = n - 1;
        while (i >= 0 && ++pick[i] == act_rows[i]->size()) pick[i--] = 0;
        if (i < 0) break;
      }
      p.add_row(row, 'L', constant - vt.at(jfull, s));
    }
  }
  std::fill(row.begin(), row.end(), 0.0);
  for (int qc2 = 0; qc2 < QC; ++qc2) row[qc2] = 1.0;
  p.add_row(row, 'E', 1.0);

  if (!cfg.lp_dump_dir.empty()) lp::write_lp_format(p, detail::lp_dump_path(cfg, p.name.c_str()));
  auto sol = lp::solve(p);
  if (sol.status != lp::Status::optimal) throw InternalError("bounded device backup LP failed");

  BackupWitness w;
  w.device = true;
  w.node = node;
  w.epsilon = sol.objective;
  w.action_probs.assign(sol.x.begin(), sol.x.begin() + QC);

  JointController out = jc;
  double total = 0.0;
  for (int qc2 = 0; qc2 < QC; ++qc2) total += std::max(0.0, w.action_probs[qc2]);
  if (total <= 0.0) throw InternalError("device backup returned a zero transition row");
  for (int qc2 = 0; qc2 < QC; ++qc2)
    out.device.prob(node, qc2) = std::max(0.0, w.action_probs[qc2]) / total;
  return {std::move(out), std::move(w)};
}

struct BoundedRunResult {
  JointController controller;
  std::vector<double> value_trace;  // V(b0) before any step, then after each
};

/// Random restart protocol for bounded backups: build a deterministic
/// controller with uniformly drawn outcomes, then repeatedly pick a node
/// uniformly at random (device and local nodes pooled) and bounded-back it.
inline BoundedRunResult bounded_pi_run(const DecPomdp& m, std::span<const int> sizes,
                                       int device_size, int steps, std::uint64_t seed,
                                       const SolveConfig& cfg = {}) {
  Rng rng(seed);
  JointController jc;
  jc.device.num_nodes = device_size;
  jc.device.trans.assign(static_cast<std::size_t>(device_size) * device_size, 0.0);
  for (int qc = 0; qc < device_size; ++qc) jc.device.prob(qc, rng.uniform_int(device_size)) = 1.0;
  for (int i = 0; i < m.num_agents; ++i) {
    LocalController lc;
    lc.num_nodes = sizes[i];
    lc.num_device = device_size;
    lc.num_actions = m.num_actions(i);
    lc.num_obs = m.num_obs(i);
    lc.allocate();
    for (int q = 0; q < lc.num_nodes; ++q)
      for (int qc = 0; qc < device_size; ++qc) {
        lc.psi(q, qc, rng.uniform_int(lc.num_actions)) = 1.0;
        for (int a = 0; a < lc.num_actions; ++a)
          for (int o = 0; o < lc.num_obs; ++o)
            lc.eta(q, qc, a, o, rng.uniform_int(lc.num_nodes)) = 1.0;
      }
    jc.locals.push_back(std::move(lc));
  }

  BoundedRunResult res;
  ValueTable vt = evaluate(m, jc, cfg);
  res.value_trace.push_back(value_at_belief(vt, m.start()).value);
  int total_nodes = device_size;
  for (int i = 0; i < m.num_agents; ++i) total_nodes += sizes[i];
  for (int step = 0; step < steps; ++step) {
    int pick = rng.uniform_int(total_nodes);
    std::pair<JointController, BackupWitness> next =
        pick < device_size
            ? bounded_backup_device(m, jc, vt, pick, cfg)
            : [&] {
                int rest = pick - device_size;
                int agent = 0;
                while (rest >= sizes[agent]) rest -= sizes[agent++];
                return bounded_backup_local(m, jc, vt, agent, rest, cfg);
              }();
    jc = std::move(next.first);
    vt = evaluate(m, jc, cfg, &vt);
    res.value_trace.push_back(value_at_belief(vt, m.start()).value);
  }
  res.controller = std::move(jc);
  return res;
}

}  // namespace decpi
