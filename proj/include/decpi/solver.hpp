#pragma once

#include <chrono>
#include <cstdio>
#include <functional>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "decpi/transform.hpp"

namespace decpi {

/// Appends, per agent, one deterministic node for every (action,
/// observation -> old node mapping) pair. Old nodes and their parameters are
/// retained and the correlation device is untouched; new-node transitions
/// target only old nodes.
inline JointController exhaustive_backup(const DecPomdp& m, const JointController& jc,
                                         const SolveConfig& cfg = {}) {
  JointController out;
  out.device = jc.device;
  for (int i = 0; i < m.num_agents; ++i) {
    const auto& lc = jc.locals[i];
    const int Q = lc.num_nodes, A = lc.num_actions, O = lc.num_obs, QC = lc.num_device;
    long long mappings = 1;
    for (int o = 0; o < O; ++o) {
      mappings *= Q;
      if (mappings > cfg.max_local_nodes * 2LL)
        throw CapacityError("exhaustive backup would exceed the node cap for agent " +
                            std::to_string(i));
    }
    long long added = static_cast<long long>(A) * mappings;
    if (Q + added > cfg.max_local_nodes)
      throw CapacityError("exhaustive backup would grow agent " + std::to_string(i) + " to " +
                          std::to_string(Q + added) + " nodes (cap " +
                          std::to_string(cfg.max_local_nodes) + ")");

    LocalController nl;
    nl.num_nodes = static_cast<int>(Q + added);
    nl.num_device = QC;
    nl.num_actions = A;
    nl.num_obs = O;
    nl.allocate();
    for (int q = 0; q < Q; ++q)
      for (int qc = 0; qc < QC; ++qc)
        for (int a = 0; a < A; ++a) {
          nl.psi(q, qc, a) = lc.psi(q, qc, a);
          for (int o = 0; o < O; ++o)
            for (int q2 = 0; q2 < Q; ++q2)
              nl.eta(q, qc, a, o, q2) = lc.eta(q, qc, a, o, q2);
        }
    // New nodes in (action, observation mapping) order; the mapping is a
    // mixed-radix number over observations with observation 0 most
    // significant, each digit an old-node index.
    std::vector<int> map(O, 0);
    for (int a = 0; a < A; ++a) {
      std::fill(map.begin(), map.end(), 0);
      for (long long idx = 0;; ++idx) {
        int q = static_cast<int>(Q + a * mappings + idx);
        for (int qc = 0; qc < QC; ++qc) {
          nl.psi(q, qc, a) = 1.0;
          for (int a2 = 0; a2 < A; ++a2)
            for (int o = 0; o < O; ++o) nl.eta(q, qc, a2, o, map[o]) = 1.0;
        }
        int o = O - 1;
        while (o >= 0 && ++map[o] == Q) map[o--] = 0;
        if (o < 0) break;
      }
    }
    out.locals.push_back(std::move(nl));
  }
  return out;
}

/// Smallest t with beta^(t+1) * r_max / (1 - beta) <= epsilon.
inline int termination_iterations(double beta, double r_max, double epsilon) {
  if (beta < 0.0 || beta >= 1.0) throw ValidationError("discount must lie in [0, 1)");
  if (r_max < 0.0) throw ValidationError("r_max must be nonnegative");
  if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
  if (r_max == 0.0 || beta == 0.0) return 0;
  double tail = beta * r_max / (1.0 - beta);  // t = 0
  int t = 0;
  while (tail > epsilon) {
    tail *= beta;
    ++t;
    if (t > 100000000) throw InternalError("termination bound did not converge");
  }
  return t;
}

/// Would-be controller sizes under pure exhaustive backups:
/// e(0) = initial size, e(t) = |A_i| * e(t-1)^{|Omega_i|}, saturating.
inline long long exhaustive_size_step(long long prev, int num_actions, int num_obs) {
  const long long cap = std::numeric_limits<long long>::max();
  long long v = num_actions;
  for (int o = 0; o < num_obs; ++o) {
    if (prev != 0 && v > cap / prev) return cap;
    v *= prev;
  }
  return v;
}

enum class StopReason { epsilon_bound, converged, capacity, wallclock, max_iterations };

inline const char* to_string(StopReason r) {
  switch (r) {
    case StopReason::epsilon_bound: return "epsilon-bound";
    case StopReason::converged: return "converged";
    case StopReason::capacity: return "capacity";
    case StopReason::wallclock: return "wall-clock";
    default: return "max-iters";
  }
}

struct IterationRecord {
  int t = 0;
  std::vector<int> sizes;
  int device_size = 1;
  std::vector<long long> exhaustive_sizes;
  double value_b0 = 0.0;
  double seconds = 0.0;  // wall time spent on this iteration
  long long reductions = 0;
  long long bounded_steps = 0;
};

struct IterationLog {
  std::vector<IterationRecord> rows;
  StopReason reason = StopReason::epsilon_bound;

  int iterations_completed() const { return rows.empty() ? 0 : rows.back().t; }
};

using IterationSink = std::function<void(const IterationRecord&, const JointController&)>;

struct PolicyIterationOptions {
  double epsilon = 0.01;
  bool bounded_updates = false;
  double vpt_slack = 0.0;
  int max_iterations = -1;  // negative: run to the epsilon bound
};

namespace detail {

/// One full cycle of bounded backups over every node (device first, then
/// agents ascending, nodes ascending). Returns the summed positive epsilons.
inline double bounded_update_cycle(const DecPomdp& m, JointController& jc, ValueTable& vt,
                                   long long& steps, const SolveConfig& cfg) {
  double gain = 0.0;
  for (int qc = 0; qc < jc.device.num_nodes; ++qc) {
    auto [next, w] = bounded_backup_device(m, jc, vt, qc, cfg);
    jc = std::move(next);
    vt = evaluate(m, jc, cfg, &vt);
    gain += std::max(0.0, w.epsilon);
    ++steps;
  }
  for (int i = 0; i < jc.num_agents(); ++i)
    for (int q = 0; q < jc.locals[i].num_nodes; ++q) {
      auto [next, w] = bounded_backup_local(m, jc, vt, i, q, cfg);
      jc = std::move(next);
      vt = evaluate(m, jc, cfg, &vt);
      gain += std::max(0.0, w.epsilon);
      ++steps;
    }
  return gain;
}

}  // namespace detail

/// Policy iteration: evaluate, exhaustive backup, value-preserving
/// transformations (reductions, then optional bounded-update cycles), then
/// the discount-based epsilon test. Capacity and wall-clock limits end the
/// run cleanly with the partial log.
inline std::pair<JointController, IterationLog> policy_iteration(
    const DecPomdp& m, JointController jc, const PolicyIterationOptions& opts,
    const SolveConfig& cfg = {}, const IterationSink& sink = {}) {
  using clock = std::chrono::steady_clock;
  const auto run_start = clock::now();
  auto elapsed = [&](clock::time_point since) {
    return std::chrono::duration<double>(clock::now() - since).count();
  };

  IterationLog log;
  const double r_max = m.max_abs_reward();
  std::vector<long long> exh(m.num_agents);
  for (int i = 0; i < m.num_agents; ++i) exh[i] = jc.locals[i].num_nodes;

  auto record = [&](int t, const ValueTable& vt, double secs, long long reductions,
                    long long bsteps) {
    IterationRecord rec;
    rec.t = t;
    rec.sizes = jc.sizes();
    rec.device_size = jc.device.num_nodes;
    rec.exhaustive_sizes = exh;
    rec.value_b0 = value_at_belief(vt, m.start()).value;
    rec.seconds = secs;
    rec.reductions = reductions;
    rec.bounded_steps = bsteps;
    log.rows.push_back(rec);
    if (sink) sink(rec, jc);
  };

  {
    auto t0 = clock::now();
    ValueTable vt = evaluate(m, jc, cfg);
    record(0, vt, elapsed(t0), 0, 0);
  }

  int t = 0;
  while (true) {
    double tail = std::pow(m.discount, t + 1) * r_max / (1.0 - m.discount);
    if (tail <= opts.epsilon) {
      log.reason = StopReason::epsilon_bound;
      break;
    }
    if (opts.max_iterations >= 0 && t >= opts.max_iterations) {
      log.reason = StopReason::max_iterations;
      break;
    }
    if (elapsed(run_start) > cfg.wallclock_limit_s) {
      log.reason = StopReason::wallclock;
      break;
    }
    auto iter_start = clock::now();
    ++t;
    try {
      jc = exhaustive_backup(m, jc, cfg);
    } catch (const CapacityError&) {
      log.reason = StopReason::capacity;
      --t;
      break;
    }
    ReduceAllResult red = reduce_all(m, std::move(jc), opts.vpt_slack, cfg);
    jc = std::move(red.controller);
    ValueTable vt = std::move(red.values);
    long long bounded_steps = 0;
    if (opts.bounded_updates) {
      for (int cycle = 0; cycle < 200; ++cycle) {
        double gain = detail::bounded_update_cycle(m, jc, vt, bounded_steps, cfg);
        if (gain < cfg.tol.improve_stop) break;
        if (elapsed(run_start) > cfg.wallclock_limit_s) break;
      }
    }
    for (int i = 0; i < m.num_agents; ++i)
      exh[i] = exhaustive_size_step(exh[i], m.num_actions(i), m.num_obs(i));
    record(t, vt, elapsed(iter_start), red.total_removed(), bounded_steps);
  }
  return {std::move(jc), std::move(log)};
}

/// CSV rendering of an iteration log; `provenance` lines are emitted first as
/// '#' comments. Timing can be suppressed for byte-identical reruns.
inline std::string iteration_csv(const IterationLog& log, int num_agents,
                                 std::span<const std::string> provenance,
                                 bool with_timing = true) {
  std::ostringstream out;
  for (const auto& line : provenance) out << "# " << line << "\n";
  out << "t";
  for (int i = 0; i < num_agents; ++i) out << ",size_" << i;
  out << ",device_size";
  for (int i = 0; i < num_agents; ++i) out << ",exhaustive_" << i;
  out << ",value_b0,seconds,reductions,bounded_steps\n";
  char buf[64];
  for (const auto& r : log.rows) {
    out << r.t;
    for (int s : r.sizes) out << ',' << s;
    out << ',' << r.device_size;
    for (long long e : r.exhaustive_sizes) out << ',' << e;
    std::snprintf(buf, sizeof buf, "%.17g", r.value_b0);
    out << ',' << buf;
    std::snprintf(buf, sizeof buf, "%.3f", with_timing ? r.seconds : 0.0);
    out << ',' << buf;
    out << ',' << r.reductions << ',' << r.bounded_steps << "\n";
  }
  return out.str();
}

}  // namespace decpi
