#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "decpi/solver.hpp"

namespace decpi {

struct BeliefPoint {
  BeliefState belief;
  std::vector<std::pair<int, int>> path;  // (action, observation) from b0
};

struct AgentBeliefSet {
  int agent = 0;
  int target_k = 0;
  std::vector<BeliefPoint> points;
};

struct BeliefPointSet {
  std::vector<AgentBeliefSet> per_agent;
};

/// Breadth-first expansion of reachable beliefs for one agent under the
/// fixed other-agent policy: from b0, expand every (action, observation)
/// pair with positive likelihood, deduplicating within L-inf 1e-9, until k
/// points are collected or the reachable set closes. On closure before k the
/// expansion restarts with a seeded random action order; a closed set stays
/// closed, so fewer than k points may be returned.
inline AgentBeliefSet generate_belief_points(const DecPomdp& m, const BeliefState& b0, int k,
                                             int agent, const FixedAgentPolicy& others,
                                             std::uint64_t seed) {
  AgentBeliefSet set;
  set.agent = agent;
  set.target_k = k;
  set.points.push_back({b0, {}});
  Rng rng(seed);
  const int A = m.num_actions(agent), O = m.num_obs(agent);

  auto known = [&](const BeliefState& b) {
    for (const auto& p : set.points)
      if (linf_distance(p.belief, b) <= 1e-9) return true;
    return false;
  };

  std::vector<int> action_order(A);
  for (int a = 0; a < A; ++a) action_order[a] = a;

  for (int pass = 0; pass <= 2 && static_cast<int>(set.points.size()) < k; ++pass) {
    if (pass > 0) {  // diversify: reshuffle the action order and re-expand
      for (int a = A - 1; a > 0; --a) std::swap(action_order[a], action_order[rng.uniform_int(a + 1)]);
    }
    bool grew = true;
    while (grew && static_cast<int>(set.points.size()) < k) {
      grew = false;
      for (std::size_t idx = 0; idx < set.points.size(); ++idx) {
        BeliefPoint point = set.points[idx];  // copy: the vector may grow
        for (int ai = 0; ai < A && static_cast<int>(set.points.size()) < k; ++ai) {
          int a = action_order[ai];
          auto like = observation_likelihood(m, point.belief, agent, a, others);
          for (int o = 0; o < O && static_cast<int>(set.points.size()) < k; ++o) {
            if (like[o] <= 1e-12) continue;
            BeliefState next = belief_update(m, point.belief, agent, a, o, others);
            if (known(next)) continue;
            BeliefPoint bp;
            bp.belief = std::move(next);
            bp.path = point.path;
            bp.path.emplace_back(a, o);
            set.points.push_back(std::move(bp));
            grew = true;
          }
        }
      }
    }
    if (static_cast<int>(set.points.size()) >= k) break;
  }
  return set;
}

/// Serializes belief-point sets (one point per line: agent, path, probs).
inline std::string serialize_belief_points(const BeliefPointSet& set) {
  std::ostringstream out;
  char buf[64];
  for (const auto& agent_set : set.per_agent) {
    out << "agent " << agent_set.agent << " k " << agent_set.target_k << "\n";
    for (const auto& p : agent_set.points) {
      out << "point :";
      for (auto [a, o] : p.path) out << ' ' << a << '/' << o;
      out << " :";
      for (double v : p.belief.probs) {
        std::snprintf(buf, sizeof buf, " %.17g", v);
        out << buf;
      }
      out << "\n";
    }
  }
  return out.str();
}

/// Keeps the nodes that contribute the highest value at each belief point:
/// the argmax joint node per point plus everything those nodes can reach.
/// Retaining the successor closure leaves no dangling transitions, so every
/// surviving node keeps its exact value; the point-based pruning pass does
/// the actual merging afterwards. Never empties a controller.
inline JointController retain_best_nodes(const DecPomdp& m, const JointController& jc,
                                         const ValueTable& vt, const BeliefPointSet& points) {
  const int n = jc.num_agents();
  std::vector<const BeliefPoint*> all;
  for (const auto& agent_set : points.per_agent)
    for (const auto& p : agent_set.points) all.push_back(&p);
  if (all.empty()) return jc;

  std::vector<std::vector<char>> keep(n);
  for (int i = 0; i < n; ++i) keep[i].assign(jc.locals[i].num_nodes, 0);
  for (std::size_t pi = 0; pi < all.size(); ++pi) {
    BeliefValue bv = value_at_belief(vt, all[pi]->belief);
    for (int i = 0; i < n; ++i) keep[i][bv.local_nodes[i]] = 1;
  }
  // close each agent's kept set under reachability
  for (int i = 0; i < n; ++i) {
    const auto& lc = jc.locals[i];
    std::vector<int> frontier;
    for (int q = 0; q < lc.num_nodes; ++q)
      if (keep[i][q]) frontier.push_back(q);
    while (!frontier.empty()) {
      int q = frontier.back();
      frontier.pop_back();
      for (int qc = 0; qc < lc.num_device; ++qc)
        for (int a = 0; a < lc.num_actions; ++a) {
          if (lc.psi(q, qc, a) <= 0.0) continue;
          for (int o = 0; o < lc.num_obs; ++o)
            for (int q2 = 0; q2 < lc.num_nodes; ++q2)
              if (lc.eta(q, qc, a, o, q2) > 0.0 && !keep[i][q2]) {
                keep[i][q2] = 1;
                frontier.push_back(q2);
              }
        }
    }
  }

  bool all_kept = true;
  for (int i = 0; i < n; ++i)
    for (char kq : keep[i])
      if (!kq) all_kept = false;
  if (all_kept) return jc;

  JointController out;
  out.device = jc.device;
  for (int i = 0; i < n; ++i) {
    const auto& lc = jc.locals[i];
    std::vector<int> new_index(lc.num_nodes, -1);
    std::vector<int> kept;
    for (int q = 0; q < lc.num_nodes; ++q)
      if (keep[i][q]) {
        new_index[q] = static_cast<int>(kept.size());
        kept.push_back(q);
      }
    LocalController nl;
    nl.num_nodes = static_cast<int>(kept.size());
    nl.num_device = lc.num_device;
    nl.num_actions = lc.num_actions;
    nl.num_obs = lc.num_obs;
    nl.allocate();
    for (int q = 0; q < nl.num_nodes; ++q) {
      int oq = kept[q];
      for (int qc = 0; qc < lc.num_device; ++qc)
        for (int a = 0; a < lc.num_actions; ++a) {
          nl.psi(q, qc, a) = lc.psi(oq, qc, a);
          for (int o = 0; o < lc.num_obs; ++o) {
            double sum = 0.0;
            for (int q2 = 0; q2 < lc.num_nodes; ++q2)
              if (keep[i][q2] && lc.eta(oq, qc, a, o, q2) > 0.0)
                sum += (nl.eta(q, qc, a, o, new_index[q2]) = lc.eta(oq, qc, a, o, q2));
            // rows of zero-probability actions may have pointed at deleted
            // nodes; closure guarantees this never happens on taken actions
            if (std::abs(sum - 1.0) > 1e-12) {
              auto row = nl.eta_row_mut(q, qc, a, o);
              if (sum <= 0.0)
                row[q] = 1.0;
              else
                for (auto& p : row) p /= sum;
            }
          }
        }
    }
    out.locals.push_back(std::move(nl));
  }
  return out;
}

/// Point-based dominance test (one distribution across all points): prunes
/// `node` when some mixture of the other nodes is at least as good at every
/// (belief point, other-agent node combination), then merges it out exactly
/// like a controller reduction.
inline std::optional<std::pair<JointController, DominanceWitness>> point_prune_node(
    const DecPomdp& m, const JointController& jc, const ValueTable& vt, int agent, int node,
    const AgentBeliefSet& points, const SolveConfig& cfg = {}) {
  const int Q = jc.locals[agent].num_nodes;
  if (Q < 2) throw ValidationError("point_prune_node requires at least two nodes");
  const int S = vt.num_states;
  const long long stride = vt.joint.stride[agent + 1];
  auto contexts = detail::context_offsets(vt, agent);
  const int n = Q - 1;
  const int mcols = static_cast<int>(contexts.size() * points.points.size());
  auto candidate = [&](int j) { return j < node ? j : j + 1; };

  std::vector<double> payoff(static_cast<std::size_t>(n) * mcols);
  for (int j = 0; j < n; ++j) {
    long long off = candidate(j) * stride, noff = static_cast<long long>(node) * stride;
    double* row = &payoff[static_cast<std::size_t>(j) * mcols];
    int k = 0;
    for (const auto& p : points.points) {
      for (long long base : contexts) {
        double d = 0.0;
        for (int s = 0; s < S; ++s)
          d += p.belief[s] * (vt.at(base + off, s) - vt.at(base + noff, s));
        row[k++] = d;
      }
    }
  }
  auto gs = lp::solve_matrix_game(payoff, n, mcols, detail::lp_dump_path(cfg, "point-prune"));
  if (gs.value < -cfg.tol.lp_accept) return std::nullopt;
  DominanceWitness w;
  w.agent = agent;
  w.node = node;
  w.distribution = gs.row_strategy;
  w.epsilon = gs.value;
  JointController out = jc;
  out.locals[agent].merge_out(node, w.distribution);
  return std::make_pair(std::move(out), std::move(w));
}

struct HpiOptions {
  int k = 10;
  std::uint64_t seed = 1;
  std::vector<AgentPolicy> fixed_policies;  // one per agent; empty -> uniform
  int max_iterations = -1;
  std::optional<JointController> initial;  // default: first action of each agent
};

/// Heuristic policy iteration: belief sets are generated once up front, then
/// each iteration backs up, keeps the per-point argmax nodes, and runs
/// point-based pruning sweeps. No correlation device is used. Terminates when
/// controller sizes and parameters stop changing (within 1e-9) or a cap hits.
inline std::tuple<JointController, IterationLog, BeliefPointSet> heuristic_policy_iteration(
    const DecPomdp& m, const BeliefState& b0, const HpiOptions& opts,
    const SolveConfig& cfg = {}, const IterationSink& sink = {}) {
  using clock = std::chrono::steady_clock;
  const auto run_start = clock::now();
  auto elapsed = [&](clock::time_point since) {
    return std::chrono::duration<double>(clock::now() - since).count();
  };

  std::vector<AgentPolicy> policies = opts.fixed_policies;
  if (policies.empty())
    for (int i = 0; i < m.num_agents; ++i) policies.push_back(AgentPolicy::uniform(m, i));

  BeliefPointSet points;
  for (int i = 0; i < m.num_agents; ++i) {
    FixedAgentPolicy others = product_policy(m, i, policies);
    points.per_agent.push_back(
        generate_belief_points(m, b0, opts.k, i, others, opts.seed + i));
  }

  JointController jc = opts.initial ? *opts.initial : make_initial(m, 0);
  IterationLog log;
  std::vector<long long> exh(m.num_agents);
  for (int i = 0; i < m.num_agents; ++i) exh[i] = jc.locals[i].num_nodes;

  auto record = [&](int t, const ValueTable& vt, double secs, long long prunes) {
    IterationRecord rec;
    rec.t = t;
    rec.sizes = jc.sizes();
    rec.device_size = jc.device.num_nodes;
    rec.exhaustive_sizes = exh;
    rec.value_b0 = value_at_belief(vt, b0).value;
    rec.seconds = secs;
    rec.reductions = prunes;
    rec.bounded_steps = 0;
    log.rows.push_back(rec);
    if (sink) sink(rec, jc);
  };

  {
    ValueTable vt = evaluate(m, jc, cfg);
    record(0, vt, 0.0, 0);
  }

  int t = 0;
  while (true) {
    if (opts.max_iterations >= 0 && t >= opts.max_iterations) {
      log.reason = StopReason::max_iterations;
      break;
    }
    if (elapsed(run_start) > cfg.wallclock_limit_s) {
      log.reason = StopReason::wallclock;
      break;
    }
    auto iter_start = clock::now();
    JointController prev = jc;
    ++t;
    try {
      jc = exhaustive_backup(m, jc, cfg);
    } catch (const CapacityError&) {
      log.reason = StopReason::capacity;
      --t;
      break;
    }
    ValueTable vt = evaluate(m, jc, cfg);
    jc = retain_best_nodes(m, jc, vt, points);
    vt = evaluate(m, jc, cfg);
    long long prunes = 0;
    bool pruned_any = true;
    while (pruned_any) {
      pruned_any = false;
      for (int i = 0; i < m.num_agents; ++i) {
        int pos = 0;
        while (jc.locals[i].num_nodes >= 2 && pos < jc.locals[i].num_nodes) {
          auto attempt = point_prune_node(m, jc, vt, i, pos, points.per_agent[i], cfg);
          if (attempt) {
            jc = std::move(attempt->first);
            ValueTable warm = detail::gather_after_removal(vt, i, pos);
            vt = evaluate(m, jc, cfg, &warm);
            ++prunes;
            pruned_any = true;
          } else {
            ++pos;
          }
        }
      }
    }
    for (int i = 0; i < m.num_agents; ++i)
      exh[i] = exhaustive_size_step(exh[i], m.num_actions(i), m.num_obs(i));
    record(t, vt, elapsed(iter_start), prunes);

    // Convergence: identical sizes and parameters.
    if (prev.sizes() == jc.sizes() && prev.device.num_nodes == jc.device.num_nodes) {
      double diff = 0.0;
      for (int i = 0; i < m.num_agents; ++i) {
        const auto& a = prev.locals[i];
        const auto& b = jc.locals[i];
        for (std::size_t x = 0; x < a.action_probs.size(); ++x)
          diff = std::max(diff, std::abs(a.action_probs[x] - b.action_probs[x]));
        for (std::size_t x = 0; x < a.next_probs.size(); ++x)
          diff = std::max(diff, std::abs(a.next_probs[x] - b.next_probs[x]));
      }
      if (diff <= 1e-9) {
        log.reason = StopReason::converged;
        break;
      }
    }
  }
  return {std::move(jc), std::move(log), std::move(points)};
}

}  // namespace decpi
