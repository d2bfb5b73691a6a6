#include <catch2/catch_amalgamated.hpp>

#include "decpi/domains.hpp"
#include "decpi/heuristic.hpp"
#include "decpi/oracle.hpp"

using namespace decpi;

namespace {

std::vector<AgentPolicy> tiger_listen_policies(const DecPomdp& m) {
  double dist[] = {0.1, 0.1, 0.8};
  std::vector<AgentPolicy> out;
  for (int i = 0; i < m.num_agents; ++i)
    out.push_back(AgentPolicy::state_independent(m, i, dist));
  return out;
}

}  // namespace

TEST_CASE("k=1 keeps only the root belief") {
  DecPomdp m = builtin_domain("dec-tiger");
  auto pols = tiger_listen_policies(m);
  auto set = generate_belief_points(m, m.start(), 1, 0, product_policy(m, 0, pols), 1);
  REQUIRE(set.points.size() == 1);
  CHECK(set.points[0].path.empty());
  CHECK(linf_distance(set.points[0].belief, m.start()) == 0.0);
}

TEST_CASE("closed belief spaces stop early regardless of k") {
  DecPomdp m;
  m.name = "closed";
  m.num_agents = 2;
  m.discount = 0.9;
  m.state_names = {"a", "b"};
  m.action_names = {{"x", "y"}, {"x", "y"}};
  m.obs_names = {{"o"}, {"o"}};
  m.initial_belief = {0.5, 0.5};
  m.init_spaces();
  m.allocate_tables();
  for (int ja = 0; ja < 4; ++ja)
    for (int s = 0; s < 2; ++s) {
      m.trans(ja, s, s) = 1.0;
      m.obs(ja, s, 0) = 1.0;
    }
  m.validate();
  std::vector<AgentPolicy> pols = {AgentPolicy::uniform(m, 0), AgentPolicy::uniform(m, 1)};
  auto set = generate_belief_points(m, m.start(), 50, 0, product_policy(m, 0, pols), 3);
  CHECK(set.points.size() == 1);  // identity dynamics, single observation
}

TEST_CASE("dec-tiger yields ten distinct replayable points") {
  DecPomdp m = builtin_domain("dec-tiger");
  auto pols = tiger_listen_policies(m);
  FixedAgentPolicy others = product_policy(m, 0, pols);
  auto set = generate_belief_points(m, m.start(), 10, 0, others, 42);
  REQUIRE(set.points.size() == 10);
  CHECK(set.points[0].path.empty());
  for (std::size_t i = 0; i < set.points.size(); ++i) {
    // replay the stored path from b0
    BeliefState b = m.start();
    for (auto [a, o] : set.points[i].path) b = belief_update(m, b, 0, a, o, others);
    CHECK(linf_distance(b, set.points[i].belief) <= 1e-9);
    // pairwise distinct
    for (std::size_t j = 0; j < i; ++j)
      CHECK(linf_distance(set.points[i].belief, set.points[j].belief) > 1e-9);
  }
}

TEST_CASE("box-pushing generates twenty points under uniform fixed policies") {
  DecPomdp m = builtin_domain("box-pushing");
  std::vector<AgentPolicy> pols = {AgentPolicy::uniform(m, 0), AgentPolicy::uniform(m, 1)};
  auto set = generate_belief_points(m, m.start(), 20, 0, product_policy(m, 0, pols), 4);
  REQUIRE(set.points.size() == 20);
  for (const auto& p : set.points) p.belief.validate();
  CHECK(linf_distance(set.points[0].belief, m.start()) == 0.0);
}

TEST_CASE("retain keeps everything when every node is an argmax") {
  DecPomdp m = builtin_domain("dec-tiger");
  JointController jc = make_initial(m, 2);
  ValueTable vt = evaluate(m, jc);
  BeliefPointSet points;
  auto pols = tiger_listen_policies(m);
  for (int i = 0; i < 2; ++i)
    points.per_agent.push_back(
        generate_belief_points(m, m.start(), 3, i, product_policy(m, i, pols), 1));
  JointController kept = retain_best_nodes(m, jc, vt, points);
  CHECK(kept.sizes() == jc.sizes());
  for (int i = 0; i < 2; ++i)
    CHECK(kept.locals[i].action_probs == jc.locals[i].action_probs);
}

TEST_CASE("retain keeps the lower-indexed of two equal-best nodes") {
  DecPomdp m = builtin_domain("dec-tiger");
  JointController jc = exhaustive_backup(m, make_initial(m, 2));
  // nodes 0 (old listen loop) and 1+2*... backed-up nodes; duplicates exist:
  // the backed-up (listen -> old node) copies node 0 exactly
  ValueTable vt = evaluate(m, jc);
  BeliefPointSet points;
  points.per_agent.push_back({0, 1, {{m.start(), {}}}});
  JointController kept = retain_best_nodes(m, jc, vt, points);
  // only one node per agent survives a single belief point
  CHECK(kept.sizes() == std::vector<int>{1, 1});
  // the argmax tie-break selects the lowest joint index, so the survivor
  // behaves like node 0
  CHECK(kept.locals[0].psi(0, 0, 2) == 1.0);
}

TEST_CASE("point pruning removes duplicates and is implied by full dominance") {
  DecPomdp m = builtin_domain("dec-tiger");
  JointController jc = exhaustive_backup(m, make_initial(m, 0));
  ValueTable vt = evaluate(m, jc);
  auto pols = tiger_listen_policies(m);
  auto set = generate_belief_points(m, m.start(), 5, 0, product_policy(m, 0, pols), 9);

  // node 0 duplicates the backed-up open-left node: prunable at epsilon 0
  auto res = point_prune_node(m, jc, vt, 0, 0, set);
  REQUIRE(res.has_value());
  CHECK(std::abs(res->second.epsilon) <= 1e-9);

  // whenever the full-simplex reduction accepts, the point LP must accept:
  // its constraints aggregate the reduction's constraints over beliefs
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 101; s <= 120; ++s) seeds.push_back(s);
  for (std::uint64_t seed : seeds) {
    DecPomdp rm = random_model(seed);
    std::vector<int> sizes(rm.num_agents, 3);
    JointController rjc = random_controller(rm, sizes, 1, seed + 1, true);
    ValueTable rvt = evaluate(rm, rjc);
    std::vector<AgentPolicy> rpols;
    for (int i = 0; i < rm.num_agents; ++i) rpols.push_back(AgentPolicy::uniform(rm, i));
    auto rset = generate_belief_points(rm, rm.start(), 4, 0, product_policy(rm, 0, rpols), 5);
    SolveConfig cfg;
    cfg.dominance_screen = false;
    for (int node = 0; node < 3; ++node) {
      auto full = reduce_local_node(rm, rjc, rvt, 0, node, 0.0, cfg);
      if (full) {
        auto pointwise = point_prune_node(rm, rjc, rvt, 0, node, rset, cfg);
        REQUIRE(pointwise.has_value());
        CHECK(pointwise->second.epsilon >= full->second.epsilon - 1e-7);
      }
    }
  }
}

TEST_CASE("a node can be point-dominated yet undominated over the simplex") {
  // myopic model (discount 0): node values over the two states are exactly
  // the rewards of the actions the nodes play
  DecPomdp m;
  m.num_agents = 2;
  m.discount = 0.0;
  m.state_names = {"s0", "s1"};
  m.action_names = {{"a0", "a1", "a2"}, {"only"}};
  m.obs_names = {{"o"}, {"o"}};
  m.initial_belief = {0.5, 0.5};
  m.init_spaces();
  m.allocate_tables();
  for (int ja = 0; ja < 3; ++ja)
    for (int s = 0; s < 2; ++s) {
      m.trans(ja, s, s) = 1.0;
      m.obs(ja, s, 0) = 1.0;
    }
  // value vectors: a0 -> (10, 0), a1 -> (0, 10), a2 -> (5.5, 5.5)
  m.rew(0, 0) = 10.0;
  m.rew(1, 1) = 10.0;
  m.rew(2, 0) = 5.5;
  m.rew(2, 1) = 5.5;
  m.validate();

  JointController jc;
  jc.device = CorrelationDevice::trivial();
  LocalController lc;
  lc.num_nodes = 3;
  lc.num_device = 1;
  lc.num_actions = 3;
  lc.num_obs = 1;
  lc.allocate();
  for (int q = 0; q < 3; ++q) {
    lc.psi(q, 0, q) = 1.0;
    for (int a = 0; a < 3; ++a) lc.eta(q, 0, a, 0, q) = 1.0;
  }
  jc.locals.push_back(std::move(lc));
  LocalController other;
  other.num_nodes = 1;
  other.num_device = 1;
  other.num_actions = 1;
  other.num_obs = 1;
  other.allocate();
  other.psi(0, 0, 0) = 1.0;
  other.eta(0, 0, 0, 0, 0) = 1.0;
  jc.locals.push_back(std::move(other));
  ValueTable vt = evaluate(m, jc);

  SolveConfig cfg;
  cfg.dominance_screen = false;
  // node 2 beats every mixture of nodes 0 and 1 at the belief center,
  // so the full reduction must keep it
  CHECK_FALSE(reduce_local_node(m, jc, vt, 0, 2, 0.0, cfg).has_value());

  // with both points leaning toward s0, the pure mixture on node 0 wins
  AgentBeliefSet near_s0;
  near_s0.agent = 0;
  near_s0.target_k = 2;
  near_s0.points.push_back({BeliefState{{0.9, 0.1}}, {}});
  near_s0.points.push_back({BeliefState{{0.8, 0.2}}, {}});
  auto pruned = point_prune_node(m, jc, vt, 0, 2, near_s0, cfg);
  REQUIRE(pruned.has_value());
  CHECK(pruned->first.locals[0].num_nodes == 2);

  // adding the center point restores the node's role
  near_s0.points.push_back({BeliefState{{0.5, 0.5}}, {}});
  CHECK_FALSE(point_prune_node(m, jc, vt, 0, 2, near_s0, cfg).has_value());
}

TEST_CASE("a saturated point set behaves like any larger k") {
  // identity dynamics with a single observation close the belief space at b0
  DecPomdp m;
  m.name = "closed";
  m.num_agents = 2;
  m.discount = 0.8;
  m.state_names = {"a", "b"};
  m.action_names = {{"x", "y"}, {"x", "y"}};
  m.obs_names = {{"o"}, {"o"}};
  m.initial_belief = {0.5, 0.5};
  m.init_spaces();
  m.allocate_tables();
  Rng rng(5);
  for (int ja = 0; ja < 4; ++ja)
    for (int s = 0; s < 2; ++s) {
      m.trans(ja, s, s) = 1.0;
      m.obs(ja, s, 0) = 1.0;
      m.rew(ja, s) = rng.uniform01();
    }
  m.validate();

  HpiOptions base;
  base.seed = 11;
  base.max_iterations = 2;
  HpiOptions small = base, big = base;
  small.k = 1;   // the closure is exactly {b0}
  big.k = 50;
  auto [jc1, log1, pts1] = heuristic_policy_iteration(m, m.start(), small);
  auto [jc2, log2, pts2] = heuristic_policy_iteration(m, m.start(), big);
  CHECK(pts2.per_agent[0].points.size() == 1);
  CHECK(jc1.sizes() == jc2.sizes());
  REQUIRE(log1.rows.size() == log2.rows.size());
  for (std::size_t t = 0; t < log1.rows.size(); ++t)
    CHECK(log1.rows[t].value_b0 == Catch::Approx(log2.rows[t].value_b0).margin(1e-12));
  for (int i = 0; i < 2; ++i) {
    CHECK(jc1.locals[i].action_probs == jc2.locals[i].action_probs);
    CHECK(jc1.locals[i].next_probs == jc2.locals[i].next_probs);
  }
}

TEST_CASE("heuristic iterations match exact policy iteration on dec-tiger") {
  DecPomdp m = builtin_domain("dec-tiger");
  PolicyIterationOptions exact_opts;
  exact_opts.epsilon = 1e-6;
  exact_opts.max_iterations = 2;
  auto [ejc, elog] = policy_iteration(m, make_initial(m, 0), exact_opts);

  HpiOptions hopts;
  hopts.k = 10;
  hopts.seed = 1;
  hopts.fixed_policies = tiger_listen_policies(m);
  hopts.max_iterations = 2;
  auto [hjc, hlog, pts] = heuristic_policy_iteration(m, m.start(), hopts);

  REQUIRE(hlog.rows.size() >= 3);
  for (int t = 0; t <= 2; ++t)
    CHECK(hlog.rows[t].value_b0 == Catch::Approx(elog.rows[t].value_b0).margin(1e-6));
  // the heuristic controllers stay no larger than the exact ones
  for (int i = 0; i < 2; ++i)
    CHECK(hlog.rows[2].sizes[i] <= elog.rows[2].sizes[i]);
}

TEST_CASE("point values never drop across a retain-and-prune pass") {
  DecPomdp m = builtin_domain("dec-tiger");
  auto pols = tiger_listen_policies(m);
  BeliefPointSet points;
  for (int i = 0; i < 2; ++i)
    points.per_agent.push_back(
        generate_belief_points(m, m.start(), 10, i, product_policy(m, i, pols), 1));

  JointController jc = make_initial(m, 0);
  for (int iter = 0; iter < 2; ++iter) {
    jc = exhaustive_backup(m, jc);
    ValueTable vt = evaluate(m, jc);
    std::vector<double> before;
    for (const auto& set : points.per_agent)
      for (const auto& p : set.points) before.push_back(value_at_belief(vt, p.belief).value);

    jc = retain_best_nodes(m, jc, vt, points);
    vt = evaluate(m, jc);
    bool pruned = true;
    while (pruned) {
      pruned = false;
      for (int i = 0; i < 2; ++i) {
        int pos = 0;
        while (jc.locals[i].num_nodes >= 2 && pos < jc.locals[i].num_nodes) {
          auto res = point_prune_node(m, jc, vt, i, pos, points.per_agent[i]);
          if (res) {
            jc = std::move(res->first);
            vt = evaluate(m, jc);
            pruned = true;
          } else {
            ++pos;
          }
        }
      }
    }
    std::size_t idx = 0;
    for (const auto& set : points.per_agent)
      for (const auto& p : set.points)
        CHECK(value_at_belief(vt, p.belief).value >= before[idx++] - 1e-7);
  }
}

TEST_CASE("heuristic runs are deterministic") {
  DecPomdp m = builtin_domain("dec-tiger");
  HpiOptions opts;
  opts.k = 10;
  opts.seed = 33;
  opts.fixed_policies = tiger_listen_policies(m);
  opts.max_iterations = 2;
  auto [jc1, log1, p1] = heuristic_policy_iteration(m, m.start(), opts);
  auto [jc2, log2, p2] = heuristic_policy_iteration(m, m.start(), opts);
  std::vector<std::string> prov = {"determinism check"};
  CHECK(iteration_csv(log1, 2, prov, false) == iteration_csv(log2, 2, prov, false));
  for (int i = 0; i < 2; ++i) {
    CHECK(jc1.locals[i].action_probs == jc2.locals[i].action_probs);
    CHECK(jc1.locals[i].next_probs == jc2.locals[i].next_probs);
  }
}
