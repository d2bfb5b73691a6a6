#pragma once

#include <cstdio>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "decpi/model.hpp"

namespace decpi {

/// Stochastic finite-state controller for one agent. Action selection reads
/// the current node and the correlation-device node; node transitions read
/// the device node, the action taken and the local observation.
struct LocalController {
  int num_nodes = 0;
  int num_device = 1;
  int num_actions = 0;
  int num_obs = 0;
  std::vector<double> action_probs;  // psi: [q][qc][a]
  std::vector<double> next_probs;    // eta: [q][qc][a][o][q']

  void allocate() {
    action_probs.assign(
        static_cast<std::size_t>(num_nodes) * num_device * num_actions, 0.0);
    next_probs.assign(static_cast<std::size_t>(num_nodes) * num_device * num_actions *
                          num_obs * num_nodes,
                      0.0);
  }

  std::size_t psi_index(int q, int qc, int a) const {
    return (static_cast<std::size_t>(q) * num_device + qc) * num_actions + a;
  }
  std::size_t eta_index(int q, int qc, int a, int o, int q2) const {
    return (((static_cast<std::size_t>(q) * num_device + qc) * num_actions + a) * num_obs + o) *
               num_nodes +
           q2;
  }
  double psi(int q, int qc, int a) const { return action_probs[psi_index(q, qc, a)]; }
  double& psi(int q, int qc, int a) { return action_probs[psi_index(q, qc, a)]; }
  double eta(int q, int qc, int a, int o, int q2) const {
    return next_probs[eta_index(q, qc, a, o, q2)];
  }
  double& eta(int q, int qc, int a, int o, int q2) {
    return next_probs[eta_index(q, qc, a, o, q2)];
  }

  std::span<const double> psi_row(int q, int qc) const {
    return {action_probs.data() + psi_index(q, qc, 0), static_cast<std::size_t>(num_actions)};
  }
  std::span<const double> eta_row(int q, int qc, int a, int o) const {
    return {next_probs.data() + eta_index(q, qc, a, o, 0), static_cast<std::size_t>(num_nodes)};
  }
  std::span<double> eta_row_mut(int q, int qc, int a, int o) {
    return {next_probs.data() + eta_index(q, qc, a, o, 0), static_cast<std::size_t>(num_nodes)};
  }

  void validate(double tol) const {
    for (int q = 0; q < num_nodes; ++q)
      for (int qc = 0; qc < num_device; ++qc) {
        if (!is_distribution(psi_row(q, qc), tol))
          throw ValidationError("action row of node " + std::to_string(q) +
                                " is not a distribution");
        for (int a = 0; a < num_actions; ++a)
          for (int o = 0; o < num_obs; ++o)
            if (!is_distribution(eta_row(q, qc, a, o), tol))
              throw ValidationError("transition row of node " + std::to_string(q) +
                                    " is not a distribution");
      }
  }

  /// Redirects every transition into `dead` onto `witness`, a distribution
  /// over the remaining nodes (indexed with `dead` skipped), then removes the
  /// node. Rows of `dead` itself are dropped.
  void merge_out(int dead, std::span<const double> witness) {
    LocalController out = *this;
    out.num_nodes = num_nodes - 1;
    out.allocate();
    auto old_of = [&](int q2) { return q2 < dead ? q2 : q2 + 1; };
    for (int q = 0; q < out.num_nodes; ++q) {
      int oq = old_of(q);
      for (int qc = 0; qc < num_device; ++qc) {
        for (int a = 0; a < num_actions; ++a) {
          out.psi(q, qc, a) = psi(oq, qc, a);
          for (int o = 0; o < num_obs; ++o) {
            double redirected = eta(oq, qc, a, o, dead);
            for (int q2 = 0; q2 < out.num_nodes; ++q2)
              out.eta(q, qc, a, o, q2) =
                  eta(oq, qc, a, o, old_of(q2)) + redirected * witness[q2];
          }
        }
      }
    }
    *this = std::move(out);
  }
};

/// Shared finite-state machine whose node all agents observe; a single
/// self-looping node is the uncorrelated case.
struct CorrelationDevice {
  int num_nodes = 1;
  std::vector<double> trans;  // [qc][qc']

  static CorrelationDevice trivial() {
    CorrelationDevice d;
    d.num_nodes = 1;
    d.trans = {1.0};
    return d;
  }

  double prob(int qc, int qc2) const {
    return trans[static_cast<std::size_t>(qc) * num_nodes + qc2];
  }
  double& prob(int qc, int qc2) {
    return trans[static_cast<std::size_t>(qc) * num_nodes + qc2];
  }
  std::span<const double> row(int qc) const {
    return {trans.data() + static_cast<std::size_t>(qc) * num_nodes,
            static_cast<std::size_t>(num_nodes)};
  }

  void validate(double tol) const {
    if (num_nodes < 1) throw ValidationError("correlation device needs at least one node");
    for (int qc = 0; qc < num_nodes; ++qc)
      if (!is_distribution(row(qc), tol))
        throw ValidationError("device row " + std::to_string(qc) + " is not a distribution");
  }
};

struct JointController {
  std::vector<LocalController> locals;
  CorrelationDevice device;

  int num_agents() const { return static_cast<int>(locals.size()); }

  long long num_joint_nodes() const {
    long long n = device.num_nodes;
    for (const auto& lc : locals) n *= lc.num_nodes;
    return n;
  }

  std::vector<int> sizes() const {
    std::vector<int> out;
    for (const auto& lc : locals) out.push_back(lc.num_nodes);
    return out;
  }

  /// Mixed radix over (device, agent 0, ..., agent n-1).
  MixedRadix joint_space() const {
    std::vector<int> radix{device.num_nodes};
    for (const auto& lc : locals) radix.push_back(lc.num_nodes);
    return MixedRadix(radix);
  }

  void validate(const DecPomdp& m, double tol = 1e-9) const {
    if (num_agents() != m.num_agents)
      throw ValidationError("controller agent count does not match the model");
    device.validate(tol);
    for (int i = 0; i < num_agents(); ++i) {
      const auto& lc = locals[i];
      if (lc.num_actions != m.num_actions(i) || lc.num_obs != m.num_obs(i) ||
          lc.num_device != device.num_nodes)
        throw ValidationError("controller dimensions do not match the model");
      lc.validate(tol);
    }
  }
};

/// Single deterministic self-looping node per agent playing `first_actions`,
/// with a one-node correlation device.
inline JointController make_initial(const DecPomdp& m, std::span<const int> first_actions) {
  JointController jc;
  jc.device = CorrelationDevice::trivial();
  for (int i = 0; i < m.num_agents; ++i) {
    if (first_actions[i] < 0 || first_actions[i] >= m.num_actions(i))
      throw ValidationError("first action out of range for agent " + std::to_string(i));
    LocalController lc;
    lc.num_nodes = 1;
    lc.num_device = 1;
    lc.num_actions = m.num_actions(i);
    lc.num_obs = m.num_obs(i);
    lc.allocate();
    lc.psi(0, 0, first_actions[i]) = 1.0;
    for (int a = 0; a < lc.num_actions; ++a)
      for (int o = 0; o < lc.num_obs; ++o) lc.eta(0, 0, a, o, 0) = 1.0;
    jc.locals.push_back(std::move(lc));
  }
  return jc;
}

inline JointController make_initial(const DecPomdp& m, int same_action = 0) {
  std::vector<int> acts(m.num_agents, same_action);
  return make_initial(m, acts);
}

// ---------------------------------------------------------------------------
// Serialization (see docs/file-formats.md). Probabilities are written with 17
// significant digits so a round trip is bit exact.
// ---------------------------------------------------------------------------

inline std::string serialize_controller(const JointController& jc) {
  std::ostringstream out;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "# decpi controller v1\n";
  out << "agents " << jc.num_agents() << "\n";
  out << "device " << jc.device.num_nodes << "\n";
  for (int qc = 0; qc < jc.device.num_nodes; ++qc) {
    out << "dnode " << qc << " :";
    for (double p : jc.device.row(qc)) out << ' ' << num(p);
    out << "\n";
  }
  for (int i = 0; i < jc.num_agents(); ++i) {
    const auto& lc = jc.locals[i];
    out << "agent " << i << " nodes " << lc.num_nodes << " actions " << lc.num_actions
        << " observations " << lc.num_obs << "\n";
    for (int q = 0; q < lc.num_nodes; ++q)
      for (int qc = 0; qc < lc.num_device; ++qc) {
        out << "act " << q << ' ' << qc << " :";
        for (double p : lc.psi_row(q, qc)) out << ' ' << num(p);
        out << "\n";
      }
    for (int q = 0; q < lc.num_nodes; ++q)
      for (int qc = 0; qc < lc.num_device; ++qc)
        for (int a = 0; a < lc.num_actions; ++a)
          for (int o = 0; o < lc.num_obs; ++o) {
            out << "next " << q << ' ' << qc << ' ' << a << ' ' << o << " :";
            for (double p : lc.eta_row(q, qc, a, o)) out << ' ' << num(p);
            out << "\n";
          }
  }
  return out.str();
}

inline JointController deserialize_controller(const std::string& text) {
  std::istringstream in(text);
  std::string raw;
  int line = 0;
  JointController jc;
  int agents = -1, cur_agent = -1;

  auto fail = [&](const std::string& msg) -> void { throw ParseError(line, msg); };
  auto probs_after_colon = [&](std::istringstream& is, std::size_t n) {
    std::string colon;
    is >> colon;
    if (colon != ":") fail("expected ':'");
    std::vector<double> out(n);
    for (auto& p : out)
      if (!(is >> p)) fail("expected probability");
    return out;
  };

  while (std::getline(in, raw)) {
    ++line;
    if (auto pos = raw.find('#'); pos != std::string::npos) raw.erase(pos);
    std::istringstream is(raw);
    std::string head;
    if (!(is >> head)) continue;
    if (head == "agents") {
      if (!(is >> agents) || agents < 1) fail("bad agents count");
      jc.locals.resize(agents);
    } else if (head == "device") {
      int n;
      if (!(is >> n) || n < 1) fail("bad device size");
      jc.device.num_nodes = n;
      jc.device.trans.assign(static_cast<std::size_t>(n) * n, 0.0);
    } else if (head == "dnode") {
      int qc;
      if (!(is >> qc) || qc < 0 || qc >= jc.device.num_nodes) fail("bad device node");
      auto row = probs_after_colon(is, jc.device.num_nodes);
      for (int qc2 = 0; qc2 < jc.device.num_nodes; ++qc2) jc.device.prob(qc, qc2) = row[qc2];
    } else if (head == "agent") {
      int i, nodes, actions, observations;
      std::string kw1, kw2, kw3;
      if (!(is >> i >> kw1 >> nodes >> kw2 >> actions >> kw3 >> observations) || i < 0 ||
          i >= agents || kw1 != "nodes" || kw2 != "actions" || kw3 != "observations")
        fail("bad agent header");
      cur_agent = i;
      auto& lc = jc.locals[i];
      lc.num_nodes = nodes;
      lc.num_device = jc.device.num_nodes;
      lc.num_actions = actions;
      lc.num_obs = observations;
      lc.allocate();
    } else if (head == "act") {
      if (cur_agent < 0) fail("act before agent header");
      auto& lc = jc.locals[cur_agent];
      int q, qc;
      if (!(is >> q >> qc) || q < 0 || q >= lc.num_nodes || qc < 0 || qc >= lc.num_device)
        fail("bad act indices");
      auto row = probs_after_colon(is, lc.num_actions);
      for (int a = 0; a < lc.num_actions; ++a) lc.psi(q, qc, a) = row[a];
    } else if (head == "next") {
      if (cur_agent < 0) fail("next before agent header");
      auto& lc = jc.locals[cur_agent];
      int q, qc, a, o;
      if (!(is >> q >> qc >> a >> o) || q < 0 || q >= lc.num_nodes || qc < 0 ||
          qc >= lc.num_device || a < 0 || a >= lc.num_actions || o < 0 || o >= lc.num_obs)
        fail("bad next indices");
      auto row = probs_after_colon(is, lc.num_nodes);
      for (int q2 = 0; q2 < lc.num_nodes; ++q2) lc.eta(q, qc, a, o, q2) = row[q2];
    } else {
      fail("unrecognized line '" + raw + "'");
    }
  }
  if (agents < 1) throw ParseError(line, "missing agents header");
  for (const auto& lc : jc.locals)
    if (lc.num_nodes == 0) throw ParseError(line, "missing agent block");
  return jc;
}

/// GraphViz export: one digraph per local controller plus one for the device.
/// Parallel edges between a node pair are collapsed into a single edge whose
/// label lists every (action/observation probability) line. Action and
/// observation names are taken from `names` when given.
inline std::string export_dot(const JointController& jc, const DecPomdp* names = nullptr) {
  std::ostringstream out;
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.4g", v);
    return std::string(buf);
  };
  out << "digraph device {\n";
  for (int qc = 0; qc < jc.device.num_nodes; ++qc) out << "  c" << qc << ";\n";
  for (int qc = 0; qc < jc.device.num_nodes; ++qc)
    for (int qc2 = 0; qc2 < jc.device.num_nodes; ++qc2)
      if (jc.device.prob(qc, qc2) > 0.0)
        out << "  c" << qc << " -> c" << qc2 << " [label=\"" << num(jc.device.prob(qc, qc2))
            << "\"];\n";
  out << "}\n";
  for (int i = 0; i < jc.num_agents(); ++i) {
    const auto& lc = jc.locals[i];
    auto action_name = [&](int a) {
      return names ? names->action_names[i][a] : "a" + std::to_string(a);
    };
    auto obs_name = [&](int o) { return names ? names->obs_names[i][o] : "o" + std::to_string(o); };
    out << "digraph agent" << i << " {\n";
    for (int q = 0; q < lc.num_nodes; ++q) {
      out << "  q" << q << " [label=\"q" << q;
      for (int qc = 0; qc < lc.num_device; ++qc)
        for (int a = 0; a < lc.num_actions; ++a)
          if (lc.psi(q, qc, a) > 0.0) {
            out << "\\n" << action_name(a);
            if (lc.num_device > 1) out << "@c" << qc;
            out << ":" << num(lc.psi(q, qc, a));
          }
      out << "\"];\n";
    }
    for (int q = 0; q < lc.num_nodes; ++q) {
      std::map<int, std::string> edges;
      for (int qc = 0; qc < lc.num_device; ++qc)
        for (int a = 0; a < lc.num_actions; ++a) {
          if (lc.psi(q, qc, a) <= 0.0) continue;
          for (int o = 0; o < lc.num_obs; ++o)
            for (int q2 = 0; q2 < lc.num_nodes; ++q2) {
              double p = lc.eta(q, qc, a, o, q2);
              if (p <= 0.0) continue;
              std::string& label = edges[q2];
              if (!label.empty()) label += "\\n";
              label += action_name(a) + "/" + obs_name(o) + " " + num(p);
              if (lc.num_device > 1) label += "@c" + std::to_string(qc);
            }
        }
      for (const auto& [q2, label] : edges)
        out << "  q" << q << " -> q" << q2 << " [label=\"" << label << "\"];\n";
    }
    out << "}\n";
  }
  return out.str();
}

}  // namespace decpi
