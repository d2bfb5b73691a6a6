#pragma once

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "decpi/model.hpp"

namespace decpi {

namespace domains {

// ---------------------------------------------------------------------------
// Two-agent tiger (2 states, 3 actions, 2 observations per agent).
// Payoffs: both listen -2; both open treasure +20; both open tiger -50;
// different doors -100; listen + open tiger -101; listen + open treasure +9.
// Listening hears the correct side with probability 0.85 per agent,
// independently; opening any door resets the tiger and makes observations
// uninformative.
// ---------------------------------------------------------------------------
inline DecPomdp dec_tiger() {
  DecPomdp m;
  m.name = "dec-tiger";
  m.num_agents = 2;
  m.discount = 0.9;
  m.state_names = {"tiger-left", "tiger-right"};
  m.action_names = {{"open-left", "open-right", "listen"},
                    {"open-left", "open-right", "listen"}};
  m.obs_names = {{"hear-left", "hear-right"}, {"hear-left", "hear-right"}};
  m.initial_belief = {0.5, 0.5};
  m.init_spaces();
  m.allocate_tables();

  constexpr int kListen = 2;
  for (int a1 = 0; a1 < 3; ++a1) {
    for (int a2 = 0; a2 < 3; ++a2) {
      int ja = a1 * 3 + a2;
      bool listening = a1 == kListen && a2 == kListen;
      for (int s = 0; s < 2; ++s) {
        if (listening) {
          m.trans(ja, s, s) = 1.0;
        } else {
          m.trans(ja, s, 0) = 0.5;
          m.trans(ja, s, 1) = 0.5;
        }
      }
      for (int s2 = 0; s2 < 2; ++s2) {
        for (int o1 = 0; o1 < 2; ++o1) {
          for (int o2 = 0; o2 < 2; ++o2) {
            double p;
            if (listening) {
              double p1 = o1 == s2 ? 0.85 : 0.15;
              double p2 = o2 == s2 ? 0.85 : 0.15;
              p = p1 * p2;
            } else {
              p = 0.25;
            }
            m.obs(ja, s2, o1 * 2 + o2) = p;
          }
        }
      }
      for (int s = 0; s < 2; ++s) {
        int tiger_door = s;  // action index that opens the tiger door
        auto kind = [&](int a) { return a == kListen ? 0 : (a == tiger_door ? 1 : 2); };
        int k1 = kind(a1), k2 = kind(a2);
        double r;
        if (k1 == 0 && k2 == 0)
          r = -2.0;
        else if (k1 == 1 && k2 == 1)
          r = -50.0;
        else if (k1 == 2 && k2 == 2)
          r = 20.0;
        else if ((k1 == 1 && k2 == 2) || (k1 == 2 && k2 == 1))
          r = -100.0;
        else if (k1 == 1 || k2 == 1)  // one listens, the other opens the tiger door
          r = -101.0;
        else  // one listens, the other opens the treasure door
          r = 9.0;
        m.rew(ja, s) = r;
      }
    }
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Meeting on a 2x2 grid (16 states, 5 actions, 4 observations per agent).
// A move goes in the intended direction with probability 0.6 and in each of
// the other three directions or stays with probability 0.1; bumping a wall
// resolves to staying. The stay action is deterministic. Robots observe
// which side walls are adjacent; reward 1 whenever they share a square.
// ---------------------------------------------------------------------------
inline DecPomdp meeting_grid() {
  DecPomdp m;
  m.name = "meeting-grid";
  m.num_agents = 2;
  m.discount = 0.9;
  for (int p1 = 0; p1 < 4; ++p1)
    for (int p2 = 0; p2 < 4; ++p2)
      m.state_names.push_back("s-" + std::to_string(p1) + "-" + std::to_string(p2));
  std::vector<std::string> acts = {"up", "down", "left", "right", "stay"};
  std::vector<std::string> obs = {"no-walls", "wall-right", "wall-left", "both-walls"};
  m.action_names = {acts, acts};
  m.obs_names = {obs, obs};
  m.initial_belief.assign(16, 0.0);
  m.initial_belief[0 * 4 + 3] = 1.0;  // diagonal corners
  m.init_spaces();
  m.allocate_tables();

  // cell = x + 2*y with y = 1 the top row
  auto step = [](int pos, int dir) {  // dir: 0 up, 1 down, 2 left, 3 right
    int x = pos & 1, y = pos >> 1;
    switch (dir) {
      case 0: y = y < 1 ? y + 1 : y; break;
      case 1: y = y > 0 ? y - 1 : y; break;
      case 2: x = x > 0 ? x - 1 : x; break;
      default: x = x < 1 ? x + 1 : x; break;
    }
    return x + 2 * y;
  };
  // move kernel: probability of each next cell for one robot
  auto kernel = [&](int pos, int action, std::array<double, 4>& out) {
    out.fill(0.0);
    if (action == 4) {
      out[pos] = 1.0;
      return;
    }
    for (int dir = 0; dir < 4; ++dir)
      out[step(pos, dir)] += dir == action ? 0.6 : 0.1;
    out[pos] += 0.1;  // spontaneous stay
  };
  auto wall_obs = [](int pos) {
    int x = pos & 1;
    int wl = x == 0 ? 1 : 0, wr = x == 1 ? 1 : 0;
    return wl * 2 + wr;
  };

  std::array<double, 4> k1{}, k2{};
  for (int a1 = 0; a1 < 5; ++a1) {
    for (int a2 = 0; a2 < 5; ++a2) {
      int ja = a1 * 5 + a2;
      for (int p1 = 0; p1 < 4; ++p1) {
        kernel(p1, a1, k1);
        for (int p2 = 0; p2 < 4; ++p2) {
          kernel(p2, a2, k2);
          int s = p1 * 4 + p2;
          for (int q1 = 0; q1 < 4; ++q1)
            for (int q2 = 0; q2 < 4; ++q2)
              m.trans(ja, s, q1 * 4 + q2) = k1[q1] * k2[q2];
          m.rew(ja, s) = p1 == p2 ? 1.0 : 0.0;
        }
      }
      for (int s2 = 0; s2 < 16; ++s2) {
        int jo = wall_obs(s2 / 4) * 4 + wall_obs(s2 % 4);
        m.obs(ja, s2, jo) = 1.0;
      }
    }
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Cooperative box pushing on a 4x3 grid (100 states, 4 actions,
// 5 observations per agent). The agents start in the bottom corners facing
// each other; the middle row holds small boxes on the flanks and a large box
// across the two center columns. Pushing a small box (alone) or the large box
// (both agents together) moves it to the goal row, which resets the
// environment on the following step. Agents observe what is in the square
// they face. Rewards: -0.1 per agent per step, -5 per agent that cannot move,
// +10 per small box and +100 for the large box delivered to the goal row
// (folded into R(s, a) as expectations over the 0.9 move-success roll).
//
// Reachable states: 6 ordered column pairs x 4 x 4 orientations = 96 poses
// plus 4 box-delivered states, 100 in total.
// ---------------------------------------------------------------------------
namespace boxpush {

inline constexpr int kPairs[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
inline constexpr const char* kOrient = "NESW";

inline int pair_index(int c1, int c2) {
  for (int i = 0; i < 6; ++i)
    if (kPairs[i][0] == c1 && kPairs[i][1] == c2) return i;
  return -1;
}

inline int encode(int c1, int o1, int c2, int o2) {
  return (pair_index(c1, c2) * 4 + o1) * 4 + o2;
}

struct Pose {
  int c1, o1, c2, o2;
};

inline Pose decode(int s) {
  Pose p;
  p.o2 = s % 4;
  s /= 4;
  p.o1 = s % 4;
  s /= 4;
  p.c1 = kPairs[s][0];
  p.c2 = kPairs[s][1];
  return p;
}

enum Goal { kGoalSmallLeft = 96, kGoalSmallRight = 97, kGoalBothSmalls = 98, kGoalLarge = 99 };
inline constexpr int kStart = 39;  // c1=0 facing E, c2=3 facing W

}  // namespace boxpush

inline DecPomdp box_pushing() {
  using namespace boxpush;
  DecPomdp m;
  m.name = "box-pushing";
  m.num_agents = 2;
  m.discount = 0.9;
  for (int s = 0; s < 96; ++s) {
    Pose p = decode(s);
    m.state_names.push_back(std::string("c") + std::to_string(p.c1) + kOrient[p.o1] + "-c" +
                            std::to_string(p.c2) + kOrient[p.o2]);
  }
  m.state_names.insert(m.state_names.end(), {"goal-sl", "goal-sr", "goal-ss", "goal-lg"});
  std::vector<std::string> acts = {"turn-left", "turn-right", "move", "stay"};
  std::vector<std::string> obs = {"empty", "wall", "other-agent", "small-box", "large-box"};
  m.action_names = {acts, acts};
  m.obs_names = {obs, obs};
  m.initial_belief.assign(100, 0.0);
  m.initial_belief[kStart] = 1.0;
  m.init_spaces();
  m.allocate_tables();

  constexpr double kMoveOk = 0.9;
  constexpr int kMove = 2;

  // What an agent standing at column c in the bottom row, facing o, sees.
  auto looks_at = [](int c, int o, int other_c) -> int {
    switch (o) {
      case 0: return (c == 0 || c == 3) ? 3 : 4;  // middle row: small or large box
      case 2: return 1;                           // facing off-grid
      case 1:
        if (c == 3) return 1;
        return (c + 1 == other_c) ? 2 : 0;
      default:
        if (c == 0) return 1;
        return (c - 1 == other_c) ? 2 : 0;
    }
  };

  // Observations depend only on the entered state.
  auto fill_obs = [&](int ja) {
    for (int s2 = 0; s2 < 100; ++s2) {
      int jo;
      if (s2 >= 96) {
        jo = 0 * 5 + 0;
      } else {
        Pose p = decode(s2);
        jo = looks_at(p.c1, p.o1, p.c2) * 5 + looks_at(p.c2, p.o2, p.c1);
      }
      m.obs(ja, s2, jo) = 1.0;
    }
  };

  struct Intent {
    bool blocked = false;      // illegal move: -5 and stays for sure
    bool small_push = false;   // pushes the flank box in front
    bool lateral = false;      // moves along the bottom row
    int target = -1;           // lateral target column
    int turned = -1;           // orientation after a successful turn
  };

  for (int a1 = 0; a1 < 4; ++a1) {
    for (int a2 = 0; a2 < 4; ++a2) {
      int ja = a1 * 4 + a2;
      fill_obs(ja);
      for (int g = 96; g < 100; ++g) {
        m.trans(ja, g, kStart) = 1.0;  // environment reset
        m.rew(ja, g) = -0.2;
      }
      for (int s = 0; s < 96; ++s) {
        Pose p = decode(s);
        const int c[2] = {p.c1, p.c2};
        const int o[2] = {p.o1, p.o2};
        const int a[2] = {a1, a2};

        bool large_push = a1 == kMove && a2 == kMove && c[0] == 1 && c[1] == 2 && o[0] == 0 &&
                          o[1] == 0;

        Intent in[2];
        for (int i = 0; i < 2; ++i) {
          switch (a[i]) {
            case 0: in[i].turned = (o[i] + 3) % 4; break;
            case 1: in[i].turned = (o[i] + 1) % 4; break;
            case 3: break;
            default: {  // move
              if (large_push) break;  // handled jointly
              switch (o[i]) {
                case 0:  // facing the middle row
                  if (c[i] == 0 || c[i] == 3)
                    in[i].small_push = true;
                  else
                    in[i].blocked = true;  // large box needs both agents
                  break;
                case 2: in[i].blocked = true; break;  // facing off-grid
                case 1:
                  if (c[i] == 3 || c[i] + 1 == c[1 - i])
                    in[i].blocked = true;
                  else {
                    in[i].lateral = true;
                    in[i].target = c[i] + 1;
                  }
                  break;
                default:
                  if (c[i] == 0 || c[i] - 1 == c[1 - i])
                    in[i].blocked = true;
                  else {
                    in[i].lateral = true;
                    in[i].target = c[i] - 1;
                  }
                  break;
              }
            }
          }
        }
        // Simultaneous moves into the same square block both agents.
        if (in[0].lateral && in[1].lateral && in[0].target == in[1].target) {
          in[0] = Intent{};
          in[1] = Intent{};
          in[0].blocked = in[1].blocked = true;
        }

        double r = -0.2;
        for (int i = 0; i < 2; ++i) {
          if (in[i].blocked) r += -5.0;
          if (in[i].small_push) r += kMoveOk * 10.0;
        }
        if (large_push) r += kMoveOk * 100.0;
        m.rew(ja, s) = r;

        if (large_push) {
          m.trans(ja, s, kGoalLarge) += kMoveOk;
          m.trans(ja, s, s) += 1.0 - kMoveOk;
          continue;
        }

        // Enumerate the independent success/failure rolls of both agents.
        for (int f1 = 0; f1 < 2; ++f1) {
          for (int f2 = 0; f2 < 2; ++f2) {
            const int ok[2] = {f1, f2};
            double prob = 1.0;
            int nc[2] = {c[0], c[1]}, no[2] = {o[0], o[1]};
            bool pushed[2] = {false, false};
            for (int i = 0; i < 2; ++i) {
              bool stochastic = in[i].turned >= 0 || in[i].lateral || in[i].small_push;
              if (!stochastic) {
                if (ok[i] == 0) prob = 0.0;  // single outcome; count it once
                continue;
              }
              prob *= ok[i] ? kMoveOk : 1.0 - kMoveOk;
              if (!ok[i]) continue;
              if (in[i].turned >= 0)
                no[i] = in[i].turned;
              else if (in[i].lateral)
                nc[i] = in[i].target;
              else
                pushed[i] = true;
            }
            if (prob <= 0.0) continue;
            int s2;
            if (pushed[0] && pushed[1])
              s2 = kGoalBothSmalls;
            else if (pushed[0])
              s2 = kGoalSmallLeft;
            else if (pushed[1])
              s2 = kGoalSmallRight;
            else
              s2 = encode(nc[0], no[0], nc[1], no[1]);
            m.trans(ja, s, s2) += prob;
          }
        }
      }
    }
  }
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Two-state coordination example (2 agents, actions A/B, one observation).
// In s1 the pair AA earns +R and switches the state; in s2 the pair BB earns
// +R and switches back; every other joint action earns -R and leaves the
// state unchanged. Uniform independent play earns -R/2 per step from both
// states; correlated or alternating play does strictly better.
// ---------------------------------------------------------------------------
inline DecPomdp correlation_example(double big_r) {
  if (!(big_r > 0.0)) throw ValidationError("correlation-example requires R > 0");
  DecPomdp m;
  m.name = "correlation-example";
  m.num_agents = 2;
  m.discount = 0.9;
  m.state_names = {"s1", "s2"};
  m.action_names = {{"A", "B"}, {"A", "B"}};
  m.obs_names = {{"none"}, {"none"}};
  m.initial_belief = {1.0, 0.0};
  m.init_spaces();
  m.allocate_tables();
  for (int a1 = 0; a1 < 2; ++a1) {
    for (int a2 = 0; a2 < 2; ++a2) {
      int ja = a1 * 2 + a2;
      for (int s = 0; s < 2; ++s) {
        bool win = (s == 0 && a1 == 0 && a2 == 0) || (s == 1 && a1 == 1 && a2 == 1);
        m.rew(ja, s) = win ? big_r : -big_r;
        m.trans(ja, s, win ? 1 - s : s) = 1.0;
        m.obs(ja, s, 0) = 1.0;  // reuse s as s' index: single joint observation
      }
    }
  }
  m.validate();
  return m;
}

}  // namespace domains

/// Constructs one of the bundled benchmark problems by name.
/// Supported: dec-tiger, meeting-grid, box-pushing, correlation-example
/// (the last takes an optional parameter R > 0, default 10).
inline DecPomdp builtin_domain(const std::string& name, std::span<const double> params = {}) {
  if (name == "dec-tiger") return domains::dec_tiger();
  if (name == "meeting-grid") return domains::meeting_grid();
  if (name == "box-pushing") return domains::box_pushing();
  if (name == "correlation-example")
    return domains::correlation_example(params.empty() ? 10.0 : params[0]);
  throw ValidationError("unknown builtin domain: " + name);
}

}  // namespace decpi
