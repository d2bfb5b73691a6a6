#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "decpi/evaluate.hpp"

namespace decpi {

/// Number of depth-t policy trees for one agent with `tail_nodes` choices at
/// the leaves: |A|^((|O|^t - 1)/(|O| - 1)) * tail^(|O|^t), saturating.
inline long long policy_tree_count(int num_actions, int num_obs, int t, int tail_nodes) {
  const long long cap = std::numeric_limits<long long>::max();
  auto mul = [&](long long a, long long b) { return (b != 0 && a > cap / b) ? cap : a * b; };
  long long leaves = 1;  // |O|^t
  long long internal = 0;  // (|O|^t - 1)/(|O| - 1) = number of internal nodes
  for (int d = 0; d < t; ++d) {
    internal += leaves;
    leaves = mul(leaves, num_obs);
    if (leaves == cap) return cap;
  }
  long long count = 1;
  for (long long i = 0; i < internal; ++i) count = mul(count, num_actions);
  for (long long i = 0; i < leaves; ++i) count = mul(count, tail_nodes);
  return count;
}

namespace oracle_detail {

/// Deterministic depth-t policy tree: at depth 0 the node designates a tail
/// controller node, otherwise an action and one subtree per observation.
struct Tree {
  int action = -1;
  int leaf_node = -1;
  std::vector<int> children;  // indices into the next-lower depth layer
};

/// All trees of the given depth, layered by depth (layer[0] = leaves).
inline std::vector<std::vector<Tree>> enumerate_trees(int num_actions, int num_obs, int depth,
                                                      int tail_nodes, long long cap) {
  std::vector<std::vector<Tree>> layers(depth + 1);
  for (int q = 0; q < tail_nodes; ++q) {
    Tree t;
    t.leaf_node = q;
    layers[0].push_back(t);
  }
  for (int d = 1; d <= depth; ++d) {
    const long long below = static_cast<long long>(layers[d - 1].size());
    for (int a = 0; a < num_actions; ++a) {
      std::vector<int> pick(num_obs, 0);
      while (true) {
        Tree t;
        t.action = a;
        t.children = pick;
        layers[d].push_back(t);
        if (static_cast<long long>(layers[d].size()) > cap)
          throw CapacityError("policy tree enumeration exceeds the cap");
        int o = num_obs - 1;
        while (o >= 0 && ++pick[o] == below) pick[o--] = 0;
        if (o < 0) break;
      }
    }
  }
  return layers;
}

}  // namespace oracle_detail

/// Exact maximum, over all joint deterministic depth-t policy trees with
/// leaves in `tail`, of the t-step discounted reward from `b` plus the
/// discounted tail value at the reached (state, joint node) distribution.
/// Full expectation, no sampling. The initial device node is part of the max.
inline double best_tree_value(const DecPomdp& m, const JointController& tail, int t,
                              const BeliefState& b, long long cap = 1000000) {
  const int n = m.num_agents;
  ValueTable vt = evaluate(m, tail);

  long long joint_trees = 1;
  for (int i = 0; i < n; ++i) {
    long long c = policy_tree_count(m.num_actions(i), m.num_obs(i), t, tail.locals[i].num_nodes);
    if (c > cap / std::max(1LL, joint_trees))
      throw CapacityError("joint policy tree space exceeds the cap");
    joint_trees *= c;
  }

  std::vector<std::vector<std::vector<oracle_detail::Tree>>> layers(n);
  for (int i = 0; i < n; ++i)
    layers[i] = oracle_detail::enumerate_trees(m.num_actions(i), m.num_obs(i), t,
                                               tail.locals[i].num_nodes, cap);

  const int S = m.num_states();
  const int QC = tail.device.num_nodes;

  // Device marginal after each step (independent of actions/observations).
  std::vector<std::vector<double>> dev(t + 1, std::vector<double>(QC, 0.0));

  // Expected value of a joint subtree at depth d from an unnormalized state
  // distribution; the device marginal at the tail is dev[t].
  std::vector<int> digits(n);
  auto value_rec = [&](auto&& self, const std::vector<int>& nodes, int depth,
                       const std::vector<double>& dist) -> double {
    if (depth == 0) {
      double total = 0.0;
      for (int qc = 0; qc < QC; ++qc) {
        double pd = dev[t][qc];
        if (pd <= 0.0) continue;
        long long base = qc * vt.joint.stride[0];
        for (int i = 0; i < n; ++i)
          base += static_cast<long long>(layers[i][0][nodes[i]].leaf_node) *
                  vt.joint.stride[i + 1];
        for (int s = 0; s < S; ++s) total += pd * dist[s] * vt.at(base, s);
      }
      return total;
    }
    int ja = 0;
    for (int i = 0; i < n; ++i)
      ja += layers[i][depth][nodes[i]].action * static_cast<int>(m.action_space.stride[i]);
    double total = 0.0;
    for (int s = 0; s < S; ++s) total += dist[s] * m.rew(ja, s);
    std::vector<double> reached(S, 0.0);
    for (int s = 0; s < S; ++s) {
      if (dist[s] <= 0.0) continue;
      for (int s2 = 0; s2 < S; ++s2) reached[s2] += dist[s] * m.trans(ja, s, s2);
    }
    std::vector<int> child(n);
    std::vector<double> next(S);
    for (int jo = 0; jo < m.num_joint_obs(); ++jo) {
      double mass = 0.0;
      for (int s2 = 0; s2 < S; ++s2) {
        next[s2] = reached[s2] * m.obs(ja, s2, jo);
        mass += next[s2];
      }
      if (mass <= 0.0) continue;
      for (int i = 0; i < n; ++i)
        child[i] = layers[i][depth][nodes[i]].children[m.agent_obs(jo, i)];
      total += m.discount * self(self, child, depth - 1, next);
    }
    return total;
  };

  double best = -std::numeric_limits<double>::infinity();
  std::vector<double> dist = b.probs;
  for (int qc0 = 0; qc0 < QC; ++qc0) {
    // evolve the device marginal from its initial node
    for (auto& row : dev) std::fill(row.begin(), row.end(), 0.0);
    dev[0][qc0] = 1.0;
    for (int d = 1; d <= t; ++d)
      for (int qc = 0; qc < QC; ++qc)
        for (int qc2 = 0; qc2 < QC; ++qc2) dev[d][qc2] += dev[d - 1][qc] * tail.device.prob(qc, qc2);

    std::vector<int> nodes(n, 0);
    while (true) {
      best = std::max(best, value_rec(value_rec, nodes, t, dist));
      int i = n - 1;
      while (i >= 0 && ++nodes[i] == static_cast<int>(layers[i][t].size())) nodes[i--] = 0;
      if (i < 0) break;
    }
  }
  return best;
}

struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  long long episodes = 0;
};

/// Horizon after which the truncated tail is below `bound`.
inline int mc_horizon(const DecPomdp& m, double bound) {
  if (m.discount == 0.0) return 1;
  double tail = m.max_abs_reward() / (1.0 - m.discount);
  int h = 0;
  while (tail > bound && h < 100000) {
    tail *= m.discount;
    ++h;
  }
  return std::max(h, 1);
}

/// Simulates the joint controller and averages the discounted return.
/// Reproducible: episode e draws from a generator seeded by (seed, e), and
/// the reduction runs in episode order.
inline McEstimate monte_carlo_value(const DecPomdp& m, const JointController& jc,
                                    const BeliefState& start, long long start_joint,
                                    long long episodes, int horizon, std::uint64_t seed) {
  const int n = m.num_agents;
  std::vector<int> digits(n + 1);
  jc.joint_space().decode(start_joint, digits);

  double mean = 0.0, m2 = 0.0;  // Welford running moments
  std::vector<int> q(n), a(n);
  for (long long ep = 0; ep < episodes; ++ep) {
    Rng rng(seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(ep + 1));
    int s = rng.sample(start.probs);
    int qc = digits[0];
    for (int i = 0; i < n; ++i) q[i] = digits[i + 1];
    double ret = 0.0, disc = 1.0;
    for (int step = 0; step < horizon; ++step) {
      int ja = 0;
      for (int i = 0; i < n; ++i) {
        a[i] = rng.sample(jc.locals[i].psi_row(q[i], qc));
        ja += a[i] * static_cast<int>(m.action_space.stride[i]);
      }
      ret += disc * m.rew(ja, s);
      disc *= m.discount;
      int s2 = rng.sample({&m.transition[(static_cast<std::size_t>(ja) * m.num_states() + s) *
                                         m.num_states()],
                           static_cast<std::size_t>(m.num_states())});
      int jo = rng.sample({&m.observation[(static_cast<std::size_t>(ja) * m.num_states() + s2) *
                                          m.num_joint_obs()],
                           static_cast<std::size_t>(m.num_joint_obs())});
      for (int i = 0; i < n; ++i)
        q[i] = rng.sample(jc.locals[i].eta_row(q[i], qc, a[i], m.agent_obs(jo, i)));
      qc = rng.sample(jc.device.row(qc));
      s = s2;
    }
    double delta = ret - mean;
    mean += delta / static_cast<double>(ep + 1);
    m2 += delta * (ret - mean);
  }
  McEstimate est;
  est.episodes = episodes;
  est.mean = mean;
  est.stderr_ =
      episodes > 1 ? std::sqrt(std::max(0.0, m2) / (episodes - 1) / episodes) : 0.0;
  return est;
}

struct MemorylessResult {
  double best_worst_value = 0.0;
  std::vector<std::vector<double>> distributions;  // per agent, over actions
};

namespace oracle_detail {

inline void grid_distributions(int num_actions, int steps,
                               std::vector<std::vector<double>>& out) {
  std::vector<int> parts(num_actions, 0);
  auto rec = [&](auto&& self, int idx, int left) -> void {
    if (idx == num_actions - 1) {
      parts[idx] = left;
      std::vector<double> d(num_actions);
      for (int i = 0; i < num_actions; ++i) d[i] = static_cast<double>(parts[i]) / steps;
      out.push_back(std::move(d));
      return;
    }
    for (int take = 0; take <= left; ++take) {
      parts[idx] = take;
      self(self, idx + 1, left - take);
    }
  };
  rec(rec, 0, steps);
}

}  // namespace oracle_detail

/// Grid search over independent memoryless policies (product distributions
/// sampled at `resolution`); for each candidate the stationary discounted
/// value per state is solved exactly, and the max over policies of the min
/// over states is returned.
inline MemorylessResult memoryless_independent_search(const DecPomdp& m, double resolution) {
  if (m.num_agents != 2) throw ValidationError("memoryless search supports two agents");
  const int steps = std::max(1, static_cast<int>(std::lround(1.0 / resolution)));
  std::vector<std::vector<double>> g1, g2;
  oracle_detail::grid_distributions(m.num_actions(0), steps, g1);
  oracle_detail::grid_distributions(m.num_actions(1), steps, g2);
  if (g1.size() * g2.size() > 50000000ULL) throw CapacityError("policy grid too large");

  const int S = m.num_states();
  Eigen::MatrixXd P(S, S);
  Eigen::VectorXd r(S);
  MemorylessResult best;
  best.best_worst_value = -std::numeric_limits<double>::infinity();
  for (const auto& d1 : g1) {
    for (const auto& d2 : g2) {
      P.setZero();
      r.setZero();
      for (int a1 = 0; a1 < m.num_actions(0); ++a1) {
        if (d1[a1] <= 0.0) continue;
        for (int a2 = 0; a2 < m.num_actions(1); ++a2) {
          double pa = d1[a1] * d2[a2];
          if (pa <= 0.0) continue;
          int ja = a1 * static_cast<int>(m.action_space.stride[0]) + a2;
          for (int s = 0; s < S; ++s) {
            r(s) += pa * m.rew(ja, s);
            for (int s2 = 0; s2 < S; ++s2) P(s, s2) += pa * m.trans(ja, s, s2);
          }
        }
      }
      Eigen::VectorXd v =
          (Eigen::MatrixXd::Identity(S, S) - m.discount * P).partialPivLu().solve(r);
      double worst = v.minCoeff();
      if (worst > best.best_worst_value) {
        best.best_worst_value = worst;
        best.distributions = {d1, d2};
      }
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Seeded random instances for property suites.
// ---------------------------------------------------------------------------

struct RandomModelSpec {
  int num_agents = 2;
  int min_states = 2, max_states = 3;
  int min_actions = 1, max_actions = 2;
  int min_obs = 1, max_obs = 2;
  double discount = 0.9;
};

inline DecPomdp random_model(std::uint64_t seed, const RandomModelSpec& spec = {}) {
  Rng rng(seed);
  DecPomdp m;
  m.name = "random-" + std::to_string(seed);
  m.num_agents = spec.num_agents;
  m.discount = spec.discount;
  int S = spec.min_states + rng.uniform_int(spec.max_states - spec.min_states + 1);
  for (int s = 0; s < S; ++s) m.state_names.push_back("s" + std::to_string(s));
  for (int i = 0; i < m.num_agents; ++i) {
    int A = spec.min_actions + rng.uniform_int(spec.max_actions - spec.min_actions + 1);
    int O = spec.min_obs + rng.uniform_int(spec.max_obs - spec.min_obs + 1);
    std::vector<std::string> an, on;
    for (int a = 0; a < A; ++a) an.push_back("a" + std::to_string(a));
    for (int o = 0; o < O; ++o) on.push_back("o" + std::to_string(o));
    m.action_names.push_back(an);
    m.obs_names.push_back(on);
  }
  m.init_spaces();
  m.allocate_tables();
  auto random_row = [&](double* row, int len) {
    double sum = 0.0;
    for (int i = 0; i < len; ++i) {
      row[i] = 0.05 + rng.uniform01();
      sum += row[i];
    }
    for (int i = 0; i < len; ++i) row[i] /= sum;
  };
  m.initial_belief.resize(S);
  random_row(m.initial_belief.data(), S);
  for (int ja = 0; ja < m.num_joint_actions(); ++ja) {
    for (int s = 0; s < S; ++s) {
      random_row(&m.transition[(static_cast<std::size_t>(ja) * S + s) * S], S);
      m.rew(ja, s) = -1.0 + 2.0 * rng.uniform01();
    }
    for (int s2 = 0; s2 < S; ++s2)
      random_row(&m.observation[(static_cast<std::size_t>(ja) * S + s2) * m.num_joint_obs()],
                 m.num_joint_obs());
  }
  m.validate();
  return m;
}

/// Random joint controller; `stochastic` draws dense distributions, otherwise
/// deterministic rows with uniformly drawn outcomes.
inline JointController random_controller(const DecPomdp& m, std::span<const int> sizes,
                                         int device_size, std::uint64_t seed,
                                         bool stochastic = true) {
  Rng rng(seed);
  JointController jc;
  jc.device.num_nodes = device_size;
  jc.device.trans.assign(static_cast<std::size_t>(device_size) * device_size, 0.0);
  auto random_row = [&](std::span<double> row) {
    double sum = 0.0;
    for (auto& p : row) {
      p = 0.05 + rng.uniform01();
      sum += p;
    }
    for (auto& p : row) p /= sum;
  };
  for (int qc = 0; qc < device_size; ++qc) {
    if (stochastic)
      random_row({&jc.device.trans[static_cast<std::size_t>(qc) * device_size],
                  static_cast<std::size_t>(device_size)});
    else
      jc.device.prob(qc, rng.uniform_int(device_size)) = 1.0;
  }
  for (int i = 0; i < m.num_agents; ++i) {
    LocalController lc;
    lc.num_nodes = sizes[i];
    lc.num_device = device_size;
    lc.num_actions = m.num_actions(i);
    lc.num_obs = m.num_obs(i);
    lc.allocate();
    for (int q = 0; q < lc.num_nodes; ++q)
      for (int qc = 0; qc < device_size; ++qc) {
        if (stochastic) {
          random_row({&lc.action_probs[lc.psi_index(q, qc, 0)],
                      static_cast<std::size_t>(lc.num_actions)});
        } else {
          lc.psi(q, qc, rng.uniform_int(lc.num_actions)) = 1.0;
        }
        for (int a = 0; a < lc.num_actions; ++a)
          for (int o = 0; o < lc.num_obs; ++o) {
            if (stochastic)
              random_row(lc.eta_row_mut(q, qc, a, o));
            else
              lc.eta(q, qc, a, o, rng.uniform_int(lc.num_nodes)) = 1.0;
          }
      }
    jc.locals.push_back(std::move(lc));
  }
  return jc;
}

}  // namespace decpi
