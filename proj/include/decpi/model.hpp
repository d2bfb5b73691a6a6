#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "decpi/common.hpp"

namespace decpi {

/// Distribution over system states.
struct BeliefState {
  std::vector<double> probs;

  int num_states() const { return static_cast<int>(probs.size()); }
  double operator[](int s) const { return probs[s]; }

  void validate(double tol = 1e-9) const {
    if (!is_distribution(probs, tol))
      throw ValidationError("belief state is not a probability distribution");
  }

  static BeliefState point(int num_states, int s) {
    BeliefState b;
    b.probs.assign(num_states, 0.0);
    b.probs[s] = 1.0;
    return b;
  }

  static BeliefState uniform(int num_states) {
    BeliefState b;
    b.probs.assign(num_states, 1.0 / num_states);
    return b;
  }
};

inline double linf_distance(const BeliefState& a, const BeliefState& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.probs.size(); ++i)
    d = std::max(d, std::abs(a.probs[i] - b.probs[i]));
  return d;
}

inline double l1_distance(const BeliefState& a, const BeliefState& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.probs.size(); ++i) d += std::abs(a.probs[i] - b.probs[i]);
  return d;
}

/// Discounted DEC-POMDP with dense joint tables. Joint actions and joint
/// observations use mixed-radix indices with agent 0 most significant.
struct DecPomdp {
  std::string name;
  int num_agents = 0;
  double discount = 0.0;
  std::vector<std::string> state_names;
  std::vector<std::vector<std::string>> action_names;  // [agent][action]
  std::vector<std::vector<std::string>> obs_names;     // [agent][observation]
  std::vector<double> initial_belief;

  std::vector<double> transition;   // [ja][s][s']
  std::vector<double> observation;  // [ja][s'][jo]
  std::vector<double> reward;       // [ja][s]

  MixedRadix action_space;  // per-agent action counts
  MixedRadix obs_space;     // per-agent observation counts

  int num_states() const { return static_cast<int>(state_names.size()); }
  int num_actions(int agent) const { return static_cast<int>(action_names[agent].size()); }
  int num_obs(int agent) const { return static_cast<int>(obs_names[agent].size()); }
  int num_joint_actions() const { return static_cast<int>(action_space.total); }
  int num_joint_obs() const { return static_cast<int>(obs_space.total); }

  void init_spaces() {
    std::vector<int> acts(num_agents), obs(num_agents);
    for (int i = 0; i < num_agents; ++i) {
      acts[i] = num_actions(i);
      obs[i] = num_obs(i);
    }
    action_space = MixedRadix(acts);
    obs_space = MixedRadix(obs);
  }

  void allocate_tables() {
    const std::size_t s = num_states();
    transition.assign(static_cast<std::size_t>(num_joint_actions()) * s * s, 0.0);
    observation.assign(static_cast<std::size_t>(num_joint_actions()) * s * num_joint_obs(), 0.0);
    reward.assign(static_cast<std::size_t>(num_joint_actions()) * s, 0.0);
  }

  double& trans(int ja, int s, int s2) {
    return transition[(static_cast<std::size_t>(ja) * num_states() + s) * num_states() + s2];
  }
  double trans(int ja, int s, int s2) const {
    return transition[(static_cast<std::size_t>(ja) * num_states() + s) * num_states() + s2];
  }
  double& obs(int ja, int s2, int jo) {
    return observation[(static_cast<std::size_t>(ja) * num_states() + s2) * num_joint_obs() + jo];
  }
  double obs(int ja, int s2, int jo) const {
    return observation[(static_cast<std::size_t>(ja) * num_states() + s2) * num_joint_obs() + jo];
  }
  double& rew(int ja, int s) { return reward[static_cast<std::size_t>(ja) * num_states() + s]; }
  double rew(int ja, int s) const {
    return reward[static_cast<std::size_t>(ja) * num_states() + s];
  }

  int agent_obs(int jo, int agent) const {
    return static_cast<int>(jo / obs_space.stride[agent]) % num_obs(agent);
  }
  int agent_action(int ja, int agent) const {
    return static_cast<int>(ja / action_space.stride[agent]) % num_actions(agent);
  }

  double max_abs_reward() const {
    double m = 0.0;
    for (double r : reward) m = std::max(m, std::abs(r));
    return m;
  }

  BeliefState start() const { return BeliefState{initial_belief}; }

  std::string joint_action_label(int ja) const {
    std::string out;
    for (int i = 0; i < num_agents; ++i) {
      if (i) out += ' ';
      out += action_names[i][agent_action(ja, i)];
    }
    return out;
  }

  void validate(double tol = 1e-9) const {
    if (num_agents < 1) throw ValidationError("model needs at least one agent");
    if (discount < 0.0 || discount >= 1.0)
      throw ValidationError("discount must lie in [0, 1)");
    if (static_cast<int>(initial_belief.size()) != num_states() ||
        !is_distribution(initial_belief, tol))
      throw ValidationError("initial belief is not a distribution over the states");
    const int S = num_states();
    for (int ja = 0; ja < num_joint_actions(); ++ja) {
      for (int s = 0; s < S; ++s) {
        double sum = 0.0;
        for (int s2 = 0; s2 < S; ++s2) {
          double p = trans(ja, s, s2);
          if (p < -tol)
            throw ValidationError("negative transition probability at T(" +
                                  joint_action_label(ja) + ", " + state_names[s] + ")");
          sum += p;
        }
        if (std::abs(sum - 1.0) > tol)
          throw ValidationError("transition row T(" + joint_action_label(ja) + ", " +
                                state_names[s] + ") sums to " + std::to_string(sum));
      }
      for (int s2 = 0; s2 < S; ++s2) {
        double sum = 0.0;
        for (int jo = 0; jo < num_joint_obs(); ++jo) {
          double p = obs(ja, s2, jo);
          if (p < -tol)
            throw ValidationError("negative observation probability at O(" +
                                  joint_action_label(ja) + ", " + state_names[s2] + ")");
          sum += p;
        }
        if (std::abs(sum - 1.0) > tol)
          throw ValidationError("observation row O(" + joint_action_label(ja) + ", " +
                                state_names[s2] + ") sums to " + std::to_string(sum));
      }
    }
  }
};

/// State-conditioned distribution over the *other* agents' joint actions,
/// as assumed when tracking a belief for one agent (the others' actions are
/// indexed mixed-radix over agents != view_agent, ascending).
struct FixedAgentPolicy {
  int view_agent = 0;
  MixedRadix others_space;           // per-other-agent action counts
  std::vector<double> action_probs;  // [s][a_others]

  int num_other_actions() const { return static_cast<int>(others_space.total); }
  double prob(int s, int a_others) const {
    return action_probs[static_cast<std::size_t>(s) * num_other_actions() + a_others];
  }

  void validate(double tol = 1e-9) const {
    const int n = num_other_actions();
    for (std::size_t s = 0; s * n < action_probs.size(); ++s) {
      std::span<const double> row(action_probs.data() + s * n, n);
      if (!is_distribution(row, tol))
        throw ValidationError("fixed policy row for state " + std::to_string(s) +
                              " is not a distribution");
    }
  }
};

/// Per-agent memoryless policy P(a_i | s); building block for FixedAgentPolicy.
struct AgentPolicy {
  std::vector<double> probs;  // [s][a]

  static AgentPolicy uniform(const DecPomdp& m, int agent) {
    AgentPolicy p;
    p.probs.assign(static_cast<std::size_t>(m.num_states()) * m.num_actions(agent),
                   1.0 / m.num_actions(agent));
    return p;
  }

  static AgentPolicy state_independent(const DecPomdp& m, int agent,
                                       std::span<const double> action_dist) {
    AgentPolicy p;
    p.probs.resize(static_cast<std::size_t>(m.num_states()) * m.num_actions(agent));
    for (int s = 0; s < m.num_states(); ++s)
      for (int a = 0; a < m.num_actions(agent); ++a)
        p.probs[static_cast<std::size_t>(s) * m.num_actions(agent) + a] = action_dist[a];
    return p;
  }

  double prob(int s, int a, int num_actions) const {
    return probs[static_cast<std::size_t>(s) * num_actions + a];
  }
};

/// Product of the remaining agents' state-conditioned action distributions.
inline FixedAgentPolicy product_policy(const DecPomdp& m, int view_agent,
                                       std::span<const AgentPolicy> per_agent) {
  FixedAgentPolicy fp;
  fp.view_agent = view_agent;
  std::vector<int> sizes;
  std::vector<int> agents;
  for (int j = 0; j < m.num_agents; ++j) {
    if (j == view_agent) continue;
    sizes.push_back(m.num_actions(j));
    agents.push_back(j);
  }
  fp.others_space = MixedRadix(sizes);
  const int n = fp.num_other_actions();
  fp.action_probs.assign(static_cast<std::size_t>(m.num_states()) * n, 0.0);
  std::vector<int> digits(agents.size(), 0);
  for (int s = 0; s < m.num_states(); ++s) {
    std::fill(digits.begin(), digits.end(), 0);
    for (int idx = 0; idx < n; ++idx) {
      double p = 1.0;
      for (std::size_t k = 0; k < agents.size(); ++k)
        p *= per_agent[agents[k]].prob(s, digits[k], m.num_actions(agents[k]));
      fp.action_probs[static_cast<std::size_t>(s) * n + idx] = p;
      if (!agents.empty()) fp.others_space.advance(digits);
    }
  }
  return fp;
}

namespace detail {

/// Composes a full joint action from agent `i`'s action and the other agents'
/// joint index (others enumerated ascending, skipping i).
inline int compose_joint_action(const DecPomdp& m, int agent, int a_i, int a_others) {
  int ja = a_i * static_cast<int>(m.action_space.stride[agent]);
  for (int j = 0; j < m.num_agents; ++j) {
    if (j == agent) continue;
    int sz = 1;  // stride of agent j within the others' index
    for (int l = j + 1; l < m.num_agents; ++l)
      if (l != agent) sz *= m.num_actions(l);
    ja += (a_others / sz) * static_cast<int>(m.action_space.stride[j]);
    a_others %= sz;
  }
  return ja;
}

/// Marginal probability of agent `i`'s observation under the joint table.
inline double marginal_obs(const DecPomdp& m, int ja, int s2, int agent, int o_i) {
  double p = 0.0;
  for (int jo = 0; jo < m.num_joint_obs(); ++jo)
    if (m.agent_obs(jo, agent) == o_i) p += m.obs(ja, s2, jo);
  return p;
}

}  // namespace detail

/// Likelihood of each local observation for `agent` after taking `a_i` from
/// belief `b`, with the other agents following the fixed policy.
inline std::vector<double> observation_likelihood(const DecPomdp& m, const BeliefState& b,
                                                  int agent, int a_i,
                                                  const FixedAgentPolicy& others) {
  std::vector<double> like(m.num_obs(agent), 0.0);
  const int S = m.num_states();
  for (int ao = 0; ao < others.num_other_actions(); ++ao) {
    for (int s = 0; s < S; ++s) {
      double w0 = b[s];
      if (w0 <= 0.0) continue;
      double w = w0 * others.prob(s, ao);
      if (w <= 0.0) continue;
      int ja = detail::compose_joint_action(m, agent, a_i, ao);
      for (int s2 = 0; s2 < S; ++s2) {
        double wt = w * m.trans(ja, s, s2);
        if (wt <= 0.0) continue;
        for (int o = 0; o < m.num_obs(agent); ++o)
          like[o] += wt * detail::marginal_obs(m, ja, s2, agent, o);
      }
    }
  }
  return like;
}

/// Bayes update of `b` for `agent` after action `a_i` and observation `o_i`,
/// assuming the other agents act by the fixed state-conditioned policy.
/// Throws UnreachableObservationError when the observation has zero
/// probability instead of renormalizing a zero vector.
inline BeliefState belief_update(const DecPomdp& m, const BeliefState& b, int agent, int a_i,
                                 int o_i, const FixedAgentPolicy& others) {
  const int S = m.num_states();
  std::vector<double> next(S, 0.0);
  for (int ao = 0; ao < others.num_other_actions(); ++ao) {
    for (int s = 0; s < S; ++s) {
      double w = b[s] * others.prob(s, ao);
      if (w <= 0.0) continue;
      int ja = detail::compose_joint_action(m, agent, a_i, ao);
      for (int s2 = 0; s2 < S; ++s2) {
        double wt = w * m.trans(ja, s, s2);
        if (wt <= 0.0) continue;
        next[s2] += wt * detail::marginal_obs(m, ja, s2, agent, o_i);
      }
    }
  }
  double norm = std::accumulate(next.begin(), next.end(), 0.0);
  if (norm <= 1e-300)
    throw UnreachableObservationError(
        "unreachable observation " + m.obs_names[agent][o_i] + " for agent " +
        std::to_string(agent) + " after action " + m.action_names[agent][a_i]);
  for (double& p : next) p /= norm;
  return BeliefState{std::move(next)};
}

}  // namespace decpi
