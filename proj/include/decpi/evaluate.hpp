#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "decpi/controller.hpp"
#include "decpi/model.hpp"

namespace decpi {

/// V(s, q-vec) for every state and joint node (device coordinate outermost).
struct ValueTable {
  int num_states = 0;
  int device_size = 1;
  std::vector<int> local_sizes;
  MixedRadix joint;  // radix = [device, agent 0, ..., agent n-1]
  std::vector<double> v;  // [joint][s]
  double residual = 0.0;

  long long num_joint() const { return joint.total; }
  double at(long long j, int s) const { return v[j * num_states + s]; }
  double& at(long long j, int s) { return v[j * num_states + s]; }

  bool same_shape(const ValueTable& o) const {
    return num_states == o.num_states && device_size == o.device_size &&
           local_sizes == o.local_sizes;
  }
};

struct BeliefValue {
  double value = 0.0;
  long long joint = 0;          // lexicographic (q_c, q_1, ..., q_n) index
  int device_node = 0;
  std::vector<int> local_nodes;
};

/// max over joint nodes of sum_s b(s) V(s, q-vec); ties go to the lowest
/// joint index.
inline BeliefValue value_at_belief(const ValueTable& vt, const BeliefState& b) {
  BeliefValue best;
  best.value = -std::numeric_limits<double>::infinity();
  const int S = vt.num_states;
  for (long long j = 0; j < vt.num_joint(); ++j) {
    double val = 0.0;
    for (int s = 0; s < S; ++s) val += b[s] * vt.at(j, s);
    if (val > best.value) {
      best.value = val;
      best.joint = j;
    }
  }
  std::vector<int> digits(vt.local_sizes.size() + 1);
  vt.joint.decode(best.joint, digits);
  best.device_node = digits[0];
  best.local_nodes.assign(digits.begin() + 1, digits.end());
  return best;
}

namespace detail {

using Entry = std::pair<int, double>;

/// Sparse views of the model and controller used by the evaluation sweeps
/// and the LP constraint builders.
struct Compiled {
  const DecPomdp& m;
  const JointController& jc;
  int S, JA, JO, n_agents;
  MixedRadix joint;
  std::vector<long long> stride;  // device stride then per-agent strides

  std::vector<std::vector<Entry>> trans_rows;  // [ja*S+s] -> (s', p)
  std::vector<std::vector<Entry>> obs_rows;    // [ja*S+s'] -> (jo, p)
  std::vector<std::vector<int>> jo_comp;       // [agent][jo] -> local observation
  std::vector<std::vector<int>> ja_comp;       // [agent][ja] -> local action

  std::vector<std::vector<std::vector<Entry>>> psi;  // [agent][(q*Qc+qc)] -> (a, p)
  std::vector<std::vector<std::vector<Entry>>> eta;  // [agent][((q*Qc+qc)*A+a)*O+o] -> (q', p)
  std::vector<std::vector<Entry>> dev;               // [qc] -> (qc', p)

  Compiled(const DecPomdp& model, const JointController& ctrl) : m(model), jc(ctrl) {
    S = m.num_states();
    JA = m.num_joint_actions();
    JO = m.num_joint_obs();
    n_agents = m.num_agents;
    joint = jc.joint_space();
    stride = joint.stride;

    trans_rows.resize(static_cast<std::size_t>(JA) * S);
    obs_rows.resize(static_cast<std::size_t>(JA) * S);
    for (int ja = 0; ja < JA; ++ja)
      for (int s = 0; s < S; ++s) {
        auto& tr = trans_rows[static_cast<std::size_t>(ja) * S + s];
        for (int s2 = 0; s2 < S; ++s2)
          if (double p = m.trans(ja, s, s2); p > 0.0) tr.emplace_back(s2, p);
        auto& orow = obs_rows[static_cast<std::size_t>(ja) * S + s];
        for (int jo = 0; jo < JO; ++jo)
          if (double p = m.obs(ja, s, jo); p > 0.0) orow.emplace_back(jo, p);
      }
    jo_comp.assign(n_agents, std::vector<int>(JO));
    ja_comp.assign(n_agents, std::vector<int>(JA));
    for (int i = 0; i < n_agents; ++i) {
      for (int jo = 0; jo < JO; ++jo) jo_comp[i][jo] = m.agent_obs(jo, i);
      for (int ja = 0; ja < JA; ++ja) ja_comp[i][ja] = m.agent_action(ja, i);
    }

    psi.resize(n_agents);
    eta.resize(n_agents);
    for (int i = 0; i < n_agents; ++i) {
      const auto& lc = jc.locals[i];
      psi[i].resize(static_cast<std::size_t>(lc.num_nodes) * lc.num_device);
      eta[i].resize(static_cast<std::size_t>(lc.num_nodes) * lc.num_device * lc.num_actions *
                    lc.num_obs);
      for (int q = 0; q < lc.num_nodes; ++q)
        for (int qc = 0; qc < lc.num_device; ++qc) {
          auto& support = psi[i][static_cast<std::size_t>(q) * lc.num_device + qc];
          for (int a = 0; a < lc.num_actions; ++a)
            if (double p = lc.psi(q, qc, a); p > 0.0) support.emplace_back(a, p);
          for (int a = 0; a < lc.num_actions; ++a)
            for (int o = 0; o < lc.num_obs; ++o) {
              auto& row = eta[i][((static_cast<std::size_t>(q) * lc.num_device + qc) *
                                      lc.num_actions +
                                  a) *
                                     lc.num_obs +
                                 o];
              for (int q2 = 0; q2 < lc.num_nodes; ++q2)
                if (double p = lc.eta(q, qc, a, o, q2); p > 0.0) row.emplace_back(q2, p);
            }
        }
    }
    dev.resize(jc.device.num_nodes);
    for (int qc = 0; qc < jc.device.num_nodes; ++qc)
      for (int qc2 = 0; qc2 < jc.device.num_nodes; ++qc2)
        if (double p = jc.device.prob(qc, qc2); p > 0.0) dev[qc].emplace_back(qc2, p);
  }

  const std::vector<Entry>& psi_row(int agent, int q, int qc) const {
    return psi[agent][static_cast<std::size_t>(q) * jc.device.num_nodes + qc];
  }
  const std::vector<Entry>& eta_row(int agent, int q, int qc, int a, int o) const {
    const auto& lc = jc.locals[agent];
    return eta[agent][((static_cast<std::size_t>(q) * lc.num_device + qc) * lc.num_actions + a) *
                          lc.num_obs +
                      o];
  }

  /// Expected successor value sum_{q-vec'} P(q-vec' | ...) V(s', q-vec').
  /// `rows[i]` is agent i's eta row for the fixed (qc, q_i, a_i, o_i).
  double successor_value(const std::vector<Entry>* const* rows, int qc, int s2,
                         const double* v) const {
    double total = 0.0;
    for (const auto& [qc2, pc] : dev[qc]) {
      long long base = qc2 * stride[0];
      total += pc * contract(rows, 0, base, s2, v);
    }
    return total;
  }

  /// Emits every successor (joint index, probability) instead of contracting.
  template <class F>
  void for_each_successor(const std::vector<Entry>* const* rows, int qc, F&& f) const {
    for (const auto& [qc2, pc] : dev[qc]) emit(rows, 0, qc2 * stride[0], pc, f);
  }

 private:
  double contract(const std::vector<Entry>* const* rows, int agent, long long base, int s2,
                  const double* v) const {
    if (agent == n_agents) return v[base * S + s2];
    const auto& row = *rows[agent];
    if (row.size() == 1)
      return row[0].second *
             contract(rows, agent + 1, base + row[0].first * stride[agent + 1], s2, v);
    double total = 0.0;
    for (const auto& [q2, p] : row)
      total += p * contract(rows, agent + 1, base + q2 * stride[agent + 1], s2, v);
    return total;
  }

  template <class F>
  void emit(const std::vector<Entry>* const* rows, int agent, long long base, double prob,
            F&& f) const {
    if (agent == n_agents) {
      f(base, prob);
      return;
    }
    for (const auto& [q2, p] : *rows[agent])
      emit(rows, agent + 1, base + q2 * stride[agent + 1], prob * p, f);
  }
};

/// One pass over all (joint node, state) pairs. When `update` is set the
/// table is refined in place (Gauss-Seidel); the return value is the largest
/// absolute change (update) or the largest Bellman residual (measure).
inline double bellman_sweep(const Compiled& c, double* v, bool update) {
  const int S = c.S, JO = c.JO;
  const double beta = c.m.discount;
  const int n = c.n_agents;
  std::vector<int> digits(n + 1, 0);
  std::vector<const std::vector<Entry>*> act_rows(n);
  std::vector<const std::vector<Entry>*> eta_rows(n);
  std::vector<std::size_t> pick(n, 0);
  std::vector<double> acc(S);
  std::vector<double> xval(static_cast<std::size_t>(S) * JO);
  std::vector<long long> xstamp(static_cast<std::size_t>(S) * JO, -1);
  long long stamp = 0;
  double worst = 0.0;

  for (long long j = 0; j < c.joint.total; ++j) {
    const int qc = digits[0];
    for (int i = 0; i < n; ++i) act_rows[i] = &c.psi_row(i, digits[i + 1], qc);
    std::fill(acc.begin(), acc.end(), 0.0);
    std::fill(pick.begin(), pick.end(), 0);
    while (true) {
      double pa = 1.0;
      int ja = 0;
      for (int i = 0; i < n; ++i) {
        const auto& [a, p] = (*act_rows[i])[pick[i]];
        pa *= p;
        ja += a * static_cast<int>(c.m.action_space.stride[i]);
      }
      ++stamp;
      for (int s = 0; s < S; ++s) {
        double future = 0.0;
        for (const auto& [s2, pt] : c.trans_rows[static_cast<std::size_t>(ja) * S + s]) {
          double inner = 0.0;
          for (const auto& [jo, po] : c.obs_rows[static_cast<std::size_t>(ja) * S + s2]) {
            std::size_t key = static_cast<std::size_t>(s2) * JO + jo;
            if (xstamp[key] != stamp) {
              for (int i = 0; i < n; ++i)
                eta_rows[i] = &c.eta_row(i, digits[i + 1], qc, (*act_rows[i])[pick[i]].first,
                                         c.jo_comp[i][jo]);
              xval[key] = c.successor_value(eta_rows.data(), qc, s2, v);
              xstamp[key] = stamp;
            }
            inner += po * xval[key];
          }
          future += pt * inner;
        }
        acc[s] += pa * (c.m.rew(ja, s) + beta * future);
      }
      // advance the joint-action odometer
      int i = n - 1;
      while (i >= 0 && ++pick[i] == act_rows[i]->size()) pick[i--] = 0;
      if (i < 0) break;
    }
    double* vrow = v + j * S;
    for (int s = 0; s < S; ++s) {
      worst = std::max(worst, std::abs(acc[s] - vrow[s]));
      if (update) vrow[s] = acc[s];
    }
    c.joint.advance(digits);
  }
  return worst;
}

inline void solve_dense(const Compiled& c, std::vector<double>& v) {
  const int S = c.S;
  const long long n = c.joint.total * S;
  Eigen::MatrixXd A = Eigen::MatrixXd::Identity(n, n);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  const double beta = c.m.discount;
  const int na = c.n_agents;
  std::vector<int> digits(na + 1, 0);
  std::vector<const std::vector<Entry>*> act_rows(na);
  std::vector<const std::vector<Entry>*> eta_rows(na);
  std::vector<std::size_t> pick(na, 0);

  for (long long j = 0; j < c.joint.total; ++j) {
    const int qc = digits[0];
    for (int i = 0; i < na; ++i) act_rows[i] = &c.psi_row(i, digits[i + 1], qc);
    std::fill(pick.begin(), pick.end(), 0);
    while (true) {
      double pa = 1.0;
      int ja = 0;
      for (int i = 0; i < na; ++i) {
        const auto& [a, p] = (*act_rows[i])[pick[i]];
        pa *= p;
        ja += a * static_cast<int>(c.m.action_space.stride[i]);
      }
      for (int s = 0; s < S; ++s) {
        rhs(j * S + s) += pa * c.m.rew(ja, s);
        for (const auto& [s2, pt] : c.trans_rows[static_cast<std::size_t>(ja) * S + s]) {
          for (const auto& [jo, po] : c.obs_rows[static_cast<std::size_t>(ja) * S + s2]) {
            for (int i = 0; i < na; ++i)
              eta_rows[i] = &c.eta_row(i, digits[i + 1], qc, (*act_rows[i])[pick[i]].first,
                                       c.jo_comp[i][jo]);
            double w = pa * pt * po * beta;
            c.for_each_successor(eta_rows.data(), qc, [&](long long j2, double pj) {
              A(j * S + s, j2 * S + s2) -= w * pj;
            });
          }
        }
      }
      int i = na - 1;
      while (i >= 0 && ++pick[i] == act_rows[i]->size()) pick[i--] = 0;
      if (i < 0) break;
    }
    c.joint.advance(digits);
  }
  Eigen::VectorXd x = A.partialPivLu().solve(rhs);
  v.assign(x.data(), x.data() + n);
}

}  // namespace detail

/// Solves the evaluation linear system V(s, q-vec) for the joint controller.
/// Small systems use a direct dense factorization; larger ones run
/// Gauss-Seidel sweeps (optionally warm-started from a table of identical
/// shape) until the max-norm Bellman residual reaches the configured target.
inline ValueTable evaluate(const DecPomdp& m, const JointController& jc,
                           const SolveConfig& cfg = {}, const ValueTable* warm = nullptr) {
  detail::Compiled c(m, jc);
  ValueTable vt;
  vt.num_states = c.S;
  vt.device_size = jc.device.num_nodes;
  vt.local_sizes = jc.sizes();
  vt.joint = c.joint;

  const long long unknowns = c.joint.total * c.S;
  if (unknowns <= cfg.dense_threshold) {
    detail::solve_dense(c, vt.v);
    vt.residual = detail::bellman_sweep(c, vt.v.data(), false);
    return vt;
  }

  if (warm && warm->same_shape(vt))
    vt.v = warm->v;
  else
    vt.v.assign(unknowns, 0.0);

  const double target = cfg.eval_residual_target;
  const double beta = std::max(m.discount, 0.5);
  const long long max_sweeps = 500000;
  long long sweep = 0;
  double residual = std::numeric_limits<double>::infinity();
  while (true) {
    double delta = detail::bellman_sweep(c, vt.v.data(), true);
    ++sweep;
    if (delta <= target * (1.0 - beta) * 0.5 || sweep % 64 == 0) {
      residual = detail::bellman_sweep(c, vt.v.data(), false);
      if (residual <= target) break;
    }
    if (sweep > max_sweeps)
      throw InternalError("controller evaluation did not converge to the residual target");
  }
  vt.residual = residual;
  return vt;
}

/// Max-norm residual of plugging `vt` back into the evaluation system.
inline double bellman_residual(const DecPomdp& m, const JointController& jc, ValueTable& vt) {
  detail::Compiled c(m, jc);
  return detail::bellman_sweep(c, vt.v.data(), false);
}

}  // namespace decpi
