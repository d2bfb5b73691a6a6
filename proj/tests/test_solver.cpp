#include <catch2/catch_amalgamated.hpp>

#include "decpi/domains.hpp"
#include "decpi/oracle.hpp"
#include "decpi/solver.hpp"

using namespace decpi;

TEST_CASE("exhaustive backups add one deterministic node per one-step policy") {
  DecPomdp m = builtin_domain("dec-tiger");
  JointController jc = make_initial(m, 0);
  JointController backed = exhaustive_backup(m, jc);
  CHECK(backed.sizes() == std::vector<int>{4, 4});  // 1 old + 3*1^2 new
  backed.validate(m);
  // old parameters retained
  CHECK(backed.locals[0].psi(0, 0, 0) == 1.0);
  // new nodes are deterministic and target only old nodes
  for (int q = 1; q < 4; ++q) {
    int act = -1;
    for (int a = 0; a < 3; ++a)
      if (backed.locals[0].psi(q, 0, a) == 1.0) act = a;
    CHECK(act == q - 1);  // actions enumerate in order from one old node
    for (int a = 0; a < 3; ++a)
      for (int o = 0; o < 2; ++o) CHECK(backed.locals[0].eta(q, 0, a, o, 0) == 1.0);
  }

  DecPomdp grid = builtin_domain("meeting-grid");
  CHECK(exhaustive_backup(grid, make_initial(grid, 0)).sizes() ==
        std::vector<int>{6, 6});  // 1 + 5*1^4
}

TEST_CASE("backup counts degenerate correctly for single-observation agents") {
  RandomModelSpec spec;
  spec.num_agents = 2;
  spec.min_actions = 1;
  spec.max_actions = 1;
  spec.min_obs = 1;
  spec.max_obs = 1;
  DecPomdp m = random_model(5, spec);
  std::vector<int> sizes = {3, 3};
  JointController jc = random_controller(m, sizes, 1, 6, true);
  JointController backed = exhaustive_backup(m, jc);
  // |A| |Q|^|O| = 1 * 3 new nodes per agent, one per transition target
  CHECK(backed.sizes() == std::vector<int>{6, 6});
}

TEST_CASE("backup respects the capacity guard") {
  DecPomdp m = builtin_domain("dec-tiger");
  JointController jc = make_initial(m, 0);
  jc = exhaustive_backup(m, jc);
  SolveConfig cfg;
  cfg.max_local_nodes = 10;
  CHECK_THROWS_AS(exhaustive_backup(m, jc, cfg), CapacityError);  // 4 + 3*16 = 52 > 10
}

TEST_CASE("termination bound") {
  CHECK(termination_iterations(0.0, 100.0, 0.01) == 0);
  CHECK(termination_iterations(0.9, 0.0, 1e-9) == 0);
  CHECK(termination_iterations(0.9, 20.0, 0.01) == 93);
  CHECK_THROWS_AS(termination_iterations(1.0, 1.0, 0.1), ValidationError);
  CHECK_THROWS_AS(termination_iterations(0.9, 1.0, 0.0), ValidationError);
  // the returned t is minimal
  int t = termination_iterations(0.9, 20.0, 0.01);
  double below = std::pow(0.9, t + 1) * 20.0 / 0.1;
  double above = std::pow(0.9, t) * 20.0 / 0.1;
  CHECK(below <= 0.01);
  CHECK(above > 0.01);
}

TEST_CASE("would-be exhaustive sizes follow the growth formula") {
  long long e = 1;
  std::vector<long long> tiger{e};
  for (int t = 0; t < 3; ++t) tiger.push_back(e = exhaustive_size_step(e, 3, 2));
  CHECK(tiger == std::vector<long long>{1, 3, 27, 2187});
  e = 1;
  std::vector<long long> grid{e};
  for (int t = 0; t < 2; ++t) grid.push_back(e = exhaustive_size_step(e, 5, 4));
  CHECK(grid == std::vector<long long>{1, 5, 3125});
  e = 1;
  std::vector<long long> box{e};
  for (int t = 0; t < 2; ++t) box.push_back(e = exhaustive_size_step(e, 4, 5));
  CHECK(box == std::vector<long long>{1, 4, 4096});
}

TEST_CASE("a large epsilon short-circuits policy iteration") {
  DecPomdp m = builtin_domain("dec-tiger");
  PolicyIterationOptions opts;
  opts.epsilon = m.discount * m.max_abs_reward() / (1.0 - m.discount) + 1.0;
  auto [jc, log] = policy_iteration(m, make_initial(m, 0), opts);
  CHECK(log.reason == StopReason::epsilon_bound);
  CHECK(log.iterations_completed() == 0);
  CHECK(jc.sizes() == std::vector<int>{1, 1});
  REQUIRE(log.rows.size() == 1);
  CHECK(log.rows[0].value_b0 == Catch::Approx(-150.0).margin(1e-8));
}

TEST_CASE("policy iteration logs monotone values and exact size bookkeeping") {
  DecPomdp m = random_model(61);
  PolicyIterationOptions opts;
  opts.epsilon = 1e-6;
  opts.max_iterations = 2;
  auto [jc, log] = policy_iteration(m, make_initial(m, 0), opts);
  CHECK(log.reason == StopReason::max_iterations);
  REQUIRE(log.rows.size() == 3);
  for (std::size_t i = 1; i < log.rows.size(); ++i) {
    CHECK(log.rows[i].value_b0 >= log.rows[i - 1].value_b0 - 1e-7);
    for (int a = 0; a < m.num_agents; ++a) {
      long long expect = log.rows[i - 1].exhaustive_sizes[a];
      expect = exhaustive_size_step(expect, m.num_actions(a), m.num_obs(a));
      CHECK(log.rows[i].exhaustive_sizes[a] == expect);
    }
  }
}

TEST_CASE("first iterations of the larger benchmarks reach their reference rows") {
  DecPomdp grid = builtin_domain("meeting-grid");
  PolicyIterationOptions opts;
  opts.epsilon = 0.1;
  opts.max_iterations = 1;
  auto [gjc, glog] = policy_iteration(grid, make_initial(grid, 0), opts);
  CHECK(gjc.sizes() == std::vector<int>{5, 5});
  CHECK(glog.rows.back().value_b0 == Catch::Approx(3.4).margin(0.1));

  DecPomdp box = builtin_domain("box-pushing");
  auto [bjc, blog] = policy_iteration(box, make_initial(box, 0), opts);
  CHECK(bjc.sizes() == std::vector<int>{2, 2});
  CHECK(blog.rows.back().value_b0 == Catch::Approx(-2.0).margin(1e-6));
}

TEST_CASE("capacity aborts return the partial log") {
  DecPomdp m = builtin_domain("dec-tiger");
  PolicyIterationOptions opts;
  opts.epsilon = 1e-6;
  SolveConfig cfg;
  cfg.max_local_nodes = 20;  // iteration 2 would need 30 nodes
  auto [jc, log] = policy_iteration(m, make_initial(m, 0), opts, cfg);
  CHECK(log.reason == StopReason::capacity);
  CHECK(log.iterations_completed() == 1);
  CHECK(jc.sizes() == std::vector<int>{3, 3});
  CHECK(log.rows.back().value_b0 == Catch::Approx(-137.0).margin(1e-6));
}

TEST_CASE("csv logs are deterministic without timing") {
  DecPomdp m = builtin_domain("dec-tiger");
  PolicyIterationOptions opts;
  opts.epsilon = 1e-3;
  opts.max_iterations = 1;
  auto [jc1, log1] = policy_iteration(m, make_initial(m, 0), opts);
  auto [jc2, log2] = policy_iteration(m, make_initial(m, 0), opts);
  std::vector<std::string> prov = {"decpi test", "seed: 1"};
  std::string a = iteration_csv(log1, 2, prov, false);
  std::string b = iteration_csv(log2, 2, prov, false);
  CHECK(a == b);
  CHECK(a.find("t,size_0,size_1,device_size,exhaustive_0,exhaustive_1,"
               "value_b0,seconds,reductions,bounded_steps") != std::string::npos);
  CHECK(a.find("# decpi test") != std::string::npos);
}
