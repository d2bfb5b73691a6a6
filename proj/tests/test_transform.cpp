#include <catch2/catch_amalgamated.hpp>

#include "decpi/domains.hpp"
#include "decpi/oracle.hpp"
#include "decpi/solver.hpp"
#include "decpi/transform.hpp"

using namespace decpi;

namespace {

/// Theorem-3 style check: every old joint node keeps its value under the
/// identity-plus-witness mapping, within tol.
void check_merge_preserves_value(const DecPomdp& m, const JointController& old_jc,
                                 const ValueTable& old_vt, const JointController& new_jc,
                                 int agent, int node, std::span<const double> witness,
                                 double tol) {
  ValueTable new_vt = evaluate(m, new_jc);
  std::vector<int> digits(old_vt.joint.radix.size());
  for (long long j = 0; j < old_vt.num_joint(); ++j) {
    old_vt.joint.decode(j, digits);
    for (int s = 0; s < old_vt.num_states; ++s) {
      double mapped;
      const int dim = agent + 1;
      if (digits[dim] != node) {
        std::vector<int> nd(digits);
        if (nd[dim] > node) --nd[dim];
        mapped = new_vt.at(new_vt.joint.encode(nd), s);
      } else {
        mapped = 0.0;
        for (int cand = 0; cand < static_cast<int>(witness.size()); ++cand) {
          std::vector<int> nd(digits);
          int orig = cand < node ? cand : cand + 1;
          nd[dim] = orig > node ? orig - 1 : orig;
          mapped += witness[cand] * new_vt.at(new_vt.joint.encode(nd), s);
        }
      }
      REQUIRE(mapped >= old_vt.at(j, s) - tol);
    }
  }
}

/// The dual dominance LP for a plain POMDP (single agent, no device),
/// written directly from its textbook statement.
std::pair<double, std::vector<double>> pomdp_dual_dominance(const ValueTable& vt, int node) {
  const int Q = vt.local_sizes[0];
  const int S = vt.num_states;
  lp::Problem p(Q);  // Q-1 mixture weights plus epsilon
  p.free_var[Q - 1] = 1;
  p.objective[Q - 1] = 1.0;
  std::vector<double> row(Q);
  for (int s = 0; s < S; ++s) {
    std::fill(row.begin(), row.end(), 0.0);
    row[Q - 1] = 1.0;
    for (int j = 0; j < Q - 1; ++j) {
      int cand = j < node ? j : j + 1;
      row[j] = -vt.at(cand, s);
    }
    p.add_row(row, 'L', -vt.at(node, s));
  }
  std::fill(row.begin(), row.end(), 1.0);
  row[Q - 1] = 0.0;
  p.add_row(row, 'E', 1.0);
  auto sol = lp::solve(p);
  REQUIRE(sol.status == lp::Status::optimal);
  return {sol.objective, {sol.x.begin(), sol.x.end() - 1}};
}

/// The bounded-backup LP for a plain POMDP, from its textbook statement:
/// variables x(a) and x(a, o, q').
double pomdp_bounded_backup_eps(const DecPomdp& m, const JointController& jc,
                                const ValueTable& vt, int node) {
  const auto& lc = jc.locals[0];
  const int A = lc.num_actions, O = lc.num_obs, Q = lc.num_nodes, S = m.num_states();
  const int nvars = A + A * O * Q + 1;
  lp::Problem p(nvars);
  p.free_var[nvars - 1] = 1;
  p.objective[nvars - 1] = 1.0;
  std::vector<double> row(nvars);
  for (int s = 0; s < S; ++s) {
    std::fill(row.begin(), row.end(), 0.0);
    row[nvars - 1] = 1.0;
    for (int a = 0; a < A; ++a) {
      row[a] -= m.rew(a, s);
      for (int s2 = 0; s2 < S; ++s2)
        for (int o = 0; o < O; ++o)
          for (int q2 = 0; q2 < Q; ++q2)
            row[A + (a * O + o) * Q + q2] -=
                m.discount * m.trans(a, s, s2) * m.obs(a, s2, o) * vt.at(q2, s2);
    }
    p.add_row(row, 'L', -vt.at(node, s));
  }
  std::fill(row.begin(), row.end(), 0.0);
  for (int a = 0; a < A; ++a) row[a] = 1.0;
  p.add_row(row, 'E', 1.0);
  for (int a = 0; a < A; ++a)
    for (int o = 0; o < O; ++o) {
      std::fill(row.begin(), row.end(), 0.0);
      for (int q2 = 0; q2 < Q; ++q2) row[A + (a * O + o) * Q + q2] = 1.0;
      row[a] = -1.0;
      p.add_row(row, 'E', 0.0);
    }
  auto sol = lp::solve(p);
  REQUIRE(sol.status == lp::Status::optimal);
  return sol.objective;
}

}  // namespace

TEST_CASE("a duplicated node is dominated with epsilon zero") {
  DecPomdp m = builtin_domain("dec-tiger");
  JointController jc = exhaustive_backup(m, make_initial(m, 0));
  // node 0 (the old open-left self-loop) duplicates the backed-up
  // open-left node whose transitions all target node 0
  ValueTable vt = evaluate(m, jc);
  for (bool screen : {true, false}) {
    SolveConfig cfg;
    cfg.dominance_screen = screen;
    auto res = reduce_local_node(m, jc, vt, 0, 0, 0.0, cfg);
    REQUIRE(res.has_value());
    const auto& w = res->second;
    CHECK(std::abs(w.epsilon) <= 1e-9);
    double sum = 0.0;
    for (double p : w.distribution) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(sum == Catch::Approx(1.0).margin(1e-9));
    CHECK(res->first.locals[0].num_nodes == 3);
    check_merge_preserves_value(m, jc, vt, res->first, 0, 0, w.distribution, 1e-7);
  }
}

TEST_CASE("LP-declared dominance is confirmed by dense sampling") {
  DecPomdp m = random_model(555);
  std::vector<int> sizes(m.num_agents, 4);
  JointController jc = random_controller(m, sizes, 1, 556, true);
  ValueTable vt = evaluate(m, jc);
  SolveConfig cfg;
  cfg.dominance_screen = false;  // force the LP
  int accepted = 0;
  for (int node = 0; node < 4 && accepted == 0; ++node) {
    auto res = reduce_local_node(m, jc, vt, 0, node, 0.5, cfg);  // generous slack
    if (!res) continue;
    ++accepted;
    const auto& w = res->second;
    // sample random mixtures over (s, q_-i, q_c) contexts; the witness must
    // dominate the node's value up to the achieved epsilon everywhere
    auto contexts = detail::context_offsets(vt, 0);
    const long long stride = vt.joint.stride[1];
    Rng rng(777);
    for (int trial = 0; trial < 10000; ++trial) {
      long long base = contexts[rng.uniform_int(static_cast<int>(contexts.size()))];
      int s = rng.uniform_int(vt.num_states);
      double mix = 0.0;
      for (std::size_t j = 0; j < w.distribution.size(); ++j) {
        long long cand = j < static_cast<std::size_t>(node) ? j : j + 1;
        mix += w.distribution[j] * vt.at(base + cand * stride, s);
      }
      REQUIRE(mix >= vt.at(base + node * stride, s) + w.epsilon - 1e-7);
    }
  }
}

TEST_CASE("device reductions mirror local reductions") {
  DecPomdp m = builtin_domain("dec-tiger");
  std::vector<int> sizes = {2, 2};
  JointController jc = random_controller(m, sizes, 2, 99, true);
  // duplicate the device rows so node 1 is removable at epsilon 0
  for (int qc2 = 0; qc2 < 2; ++qc2) jc.device.prob(1, qc2) = jc.device.prob(0, qc2);
  // also make the locals ignore the device signal
  for (auto& lc : jc.locals)
    for (int q = 0; q < lc.num_nodes; ++q)
      for (int a = 0; a < lc.num_actions; ++a) {
        lc.psi(q, 1, a) = lc.psi(q, 0, a);
        for (int o = 0; o < lc.num_obs; ++o)
          for (int q2 = 0; q2 < lc.num_nodes; ++q2)
            lc.eta(q, 1, a, o, q2) = lc.eta(q, 0, a, o, q2);
      }
  ValueTable vt = evaluate(m, jc);
  auto res = reduce_device_node(m, jc, vt, 1, 0.0);
  REQUIRE(res.has_value());
  CHECK(std::abs(res->second.epsilon) <= 1e-7);
  CHECK(res->first.device.num_nodes == 1);

  // removal never lowers the value at sampled beliefs beyond slack
  ValueTable nvt = evaluate(m, res->first);
  Rng rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> b(m.num_states());
    double sum = 0.0;
    for (auto& p : b) sum += (p = rng.uniform01() + 1e-6);
    for (auto& p : b) p /= sum;
    BeliefState belief{b};
    CHECK(value_at_belief(nvt, belief).value >=
          value_at_belief(vt, belief).value - 1e-6);
  }

  JointController single = make_initial(m, 0);
  ValueTable svt = evaluate(m, single);
  CHECK_THROWS_AS(reduce_device_node(m, single, svt, 0, 0.0), ValidationError);
}

TEST_CASE("reduce_all reaches a fixed point and preserves value at b0") {
  DecPomdp m = builtin_domain("dec-tiger");
  auto backed = exhaustive_backup(m, make_initial(m, 0));
  auto red = reduce_all(m, backed, 0.0);
  CHECK(red.controller.sizes() == std::vector<int>{3, 3});
  CHECK(value_at_belief(red.values, m.start()).value == Catch::Approx(-137.0).margin(1e-6));

  // already minimal: nothing is removed and the controller is unchanged
  auto again = reduce_all(m, red.controller, 0.0);
  CHECK(again.total_removed() == 0);
  CHECK(again.controller.sizes() == red.controller.sizes());
  for (int i = 0; i < 2; ++i) {
    CHECK(again.controller.locals[i].action_probs == red.controller.locals[i].action_probs);
    CHECK(again.controller.locals[i].next_probs == red.controller.locals[i].next_probs);
  }
}

TEST_CASE("bounded backups never lose value and report feasible epsilons") {
  for (std::uint64_t seed : {21, 22, 23}) {
    DecPomdp m = random_model(seed);
    std::vector<int> sizes(m.num_agents, 2);
    JointController jc = random_controller(m, sizes, 2, seed + 7, true);
    ValueTable vt = evaluate(m, jc);
    for (int agent = 0; agent < m.num_agents; ++agent) {
      auto [next, w] = bounded_backup_local(m, jc, vt, agent, 0);
      CHECK(w.epsilon >= -1e-9);
      ValueTable nvt = evaluate(m, next);
      for (std::size_t i = 0; i < vt.v.size(); ++i) REQUIRE(nvt.v[i] >= vt.v[i] - 1e-7);
      // witness satisfies the probability structure
      const int A = m.num_actions(agent), QC = 2;
      for (int qc = 0; qc < QC; ++qc) {
        double sum = 0.0;
        for (int a = 0; a < A; ++a) sum += w.action_probs[qc * A + a];
        CHECK(sum == Catch::Approx(1.0).margin(1e-8));
      }
    }
    auto [next, w] = bounded_backup_device(m, jc, vt, 0);
    CHECK(w.epsilon >= -1e-9);
    ValueTable nvt = evaluate(m, next);
    for (std::size_t i = 0; i < vt.v.size(); ++i) REQUIRE(nvt.v[i] >= vt.v[i] - 1e-7);
  }
}

TEST_CASE("a single-node device admits only the self loop") {
  DecPomdp m = builtin_domain("dec-tiger");
  JointController jc = make_initial(m, 0);
  ValueTable vt = evaluate(m, jc);
  auto [next, w] = bounded_backup_device(m, jc, vt, 0);
  CHECK(std::abs(w.epsilon) <= 1e-9);
  CHECK(next.device.prob(0, 0) == Catch::Approx(1.0));
}

TEST_CASE("re-running a bounded backup at a local optimum yields epsilon zero") {
  DecPomdp m = random_model(31);
  std::vector<int> sizes(m.num_agents, 2);
  JointController jc = random_controller(m, sizes, 1, 32, true);
  ValueTable vt = evaluate(m, jc);
  for (int pass = 0; pass < 12; ++pass) {
    for (int agent = 0; agent < m.num_agents; ++agent)
      for (int q = 0; q < 2; ++q) {
        auto [next, w] = bounded_backup_local(m, jc, vt, agent, q);
        jc = std::move(next);
        vt = evaluate(m, jc, {}, &vt);
      }
  }
  double total = 0.0;
  for (int agent = 0; agent < m.num_agents; ++agent)
    for (int q = 0; q < 2; ++q) {
      auto [next, w] = bounded_backup_local(m, jc, vt, agent, q);
      total += std::max(0.0, w.epsilon);
    }
  CHECK(total <= 1e-6);
}

TEST_CASE("device improvements on the coordination problem climb from negative values") {
  double params[] = {10.0};
  DecPomdp m = builtin_domain("correlation-example", params);
  JointController jc;
  jc.device.num_nodes = 2;
  jc.device.trans = {1.0, 0.0, 0.0, 1.0};  // frozen signals to start
  for (int i = 0; i < 2; ++i) {
    LocalController lc;
    lc.num_nodes = 1;
    lc.num_device = 2;
    lc.num_actions = 2;
    lc.num_obs = 1;
    lc.allocate();
    lc.psi(0, 0, 0) = 1.0;  // A on signal 0
    lc.psi(0, 1, 1) = 1.0;  // B on signal 1
    for (int qc = 0; qc < 2; ++qc)
      for (int a = 0; a < 2; ++a) lc.eta(0, qc, a, 0, 0) = 1.0;
    jc.locals.push_back(std::move(lc));
  }
  ValueTable vt = evaluate(m, jc);
  double before = value_at_belief(vt, m.start()).value;
  CHECK(before < -50.0);  // frozen signals repeat a bad joint action forever
  for (int pass = 0; pass < 30; ++pass)
    for (int qc = 0; qc < 2; ++qc) {
      auto [next, w] = bounded_backup_device(m, jc, vt, qc);
      jc = std::move(next);
      ValueTable nvt = evaluate(m, jc, {}, &vt);
      for (std::size_t i = 0; i < vt.v.size(); ++i) REQUIRE(nvt.v[i] >= vt.v[i] - 1e-7);
      vt = std::move(nvt);
    }
  CHECK(value_at_belief(vt, m.start()).value >= 0.0);
}

TEST_CASE("bounded_pi_run is reproducible with a non-decreasing trace") {
  DecPomdp m = builtin_domain("dec-tiger");
  std::vector<int> sizes = {3, 3};
  auto none = bounded_pi_run(m, sizes, 2, 0, 71);
  CHECK(none.value_trace.size() == 1);
  CHECK(none.controller.sizes() == sizes);
  none.controller.validate(m);

  auto run = bounded_pi_run(m, sizes, 2, 25, 71);
  REQUIRE(run.value_trace.size() == 26);
  for (std::size_t i = 1; i < run.value_trace.size(); ++i)
    CHECK(run.value_trace[i] >= run.value_trace[i - 1] - 1e-7);

  auto rerun = bounded_pi_run(m, sizes, 2, 25, 71);
  CHECK(rerun.value_trace == run.value_trace);
}

TEST_CASE("epsilon-slack reductions trade value for size, boundedly") {
  DecPomdp m = builtin_domain("dec-tiger");
  auto backed = exhaustive_backup(m, make_initial(m, 0));
  backed = exhaustive_backup(m, reduce_all(m, backed, 0.0).controller);
  ValueTable vt = evaluate(m, backed);
  double v0 = value_at_belief(vt, m.start()).value;

  const double slack = 0.5;
  auto exact = reduce_all(m, backed, 0.0);
  auto relaxed = reduce_all(m, backed, slack);
  for (int i = 0; i < 2; ++i)
    CHECK(relaxed.controller.locals[i].num_nodes <= exact.controller.locals[i].num_nodes);
  // a single slack merge can lose at most slack/(1-beta) at b0 in total
  double v_relaxed = value_at_belief(relaxed.values, m.start()).value;
  long long merges = relaxed.total_removed();
  CHECK(v_relaxed >= v0 - static_cast<double>(merges) * slack / (1.0 - m.discount) - 1e-6);
}

TEST_CASE("single-agent reductions and backups match the POMDP linear programs") {
  // a 2-state POMDP instance built as a one-agent model
  RandomModelSpec spec;
  spec.num_agents = 1;
  spec.min_states = 2;
  spec.max_states = 2;
  spec.min_actions = 2;
  spec.max_actions = 2;
  spec.min_obs = 2;
  spec.max_obs = 2;
  DecPomdp m = random_model(808, spec);
  std::vector<int> sizes = {3};
  JointController jc = random_controller(m, sizes, 1, 809, true);
  ValueTable vt = evaluate(m, jc);

  SolveConfig cfg;
  cfg.dominance_screen = false;
  for (int node = 0; node < 3; ++node) {
    auto [eps_ref, dist_ref] = pomdp_dual_dominance(vt, node);
    auto res = reduce_local_node(m, jc, vt, 0, node, 1e6, cfg);  // huge slack: always returns
    REQUIRE(res.has_value());
    CHECK(res->second.epsilon == Catch::Approx(eps_ref).margin(1e-7));

    double eps_bb = pomdp_bounded_backup_eps(m, jc, vt, node);
    auto [next, w] = bounded_backup_local(m, jc, vt, 0, node, cfg);
    CHECK(w.epsilon == Catch::Approx(eps_bb).margin(1e-7));
  }
}
